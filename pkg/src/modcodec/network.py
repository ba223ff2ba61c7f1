"""Analysis/synthesis cascades, complexity accounting and checkpoints."""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tensor
from .entropy import FactorizedPrior
from .errors import ConfigError, DataError
from .transforms import KINDS, Module, make_nonlinearity


@dataclass
class NetworkConfig:
    stages: int = 3
    hidden_channels: int = 32
    latent_channels: int = 48
    kernel: int = 5
    stride: int = 2
    nonlinearity: str = "gdn"
    restsm_depth: int = 2
    input_channels: int = 3

    def __post_init__(self):
        if self.stages < 0:
            raise ConfigError("stages must be >= 0")
        if self.hidden_channels < 1 or self.latent_channels < 1:
            raise ConfigError("channel counts must be >= 1")
        if self.kernel < 1 or self.stride < 1:
            raise ConfigError("kernel and stride must be positive")
        if self.nonlinearity not in KINDS:
            raise ConfigError(f"unknown nonlinearity {self.nonlinearity!r}; expected one of {', '.join(KINDS)}")
        if self.restsm_depth < 1:
            raise ConfigError("restsm_depth must be >= 1")

    @property
    def downsampling(self) -> int:
        return self.stride ** (self.stages + 1)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, factory: Parameter):
        self.weight = factory.glorot((c_out, c_in, kernel, kernel), c_in * kernel ** 2, c_out * kernel ** 2)
        self.bias = factory.zeros(c_out)
        self.stride = stride
        self.padding = kernel // 2

    def forward(self, x):
        return ag.conv2d(x, self.weight, self.bias, self.stride, self.padding)

    def count_flops(self, height, width):
        c_out, c_in, kh, kw = self.weight.shape
        ho = ag.conv_output_size(height, kh, self.stride, self.padding)
        wo = ag.conv_output_size(width, kw, self.stride, self.padding)
        return c_out * c_in * kh * kw * ho * wo


class ConvTranspose2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, factory: Parameter):
        self.weight = factory.glorot((c_in, c_out, kernel, kernel), c_in * kernel ** 2, c_out * kernel ** 2)
        self.bias = factory.zeros(c_out)
        self.stride = stride
        self.padding = kernel // 2

    def forward(self, x):
        return ag.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)

    def count_flops(self, height, width):
        c_in, c_out, kh, kw = self.weight.shape
        return c_in * c_out * kh * kw * height * width


class Stage(Module):
    """One cascade step: convolution plus optional transform.

    Analysis stages run conv then transform; synthesis stages run the
    transform first, then the upsampling conv.
    """

    def __init__(self, conv: Module, nonlinearity: Module | None, transform_first: bool):
        self.conv = conv
        self.nonlinearity = nonlinearity
        self.transform_first = transform_first

    def forward(self, x):
        if self.nonlinearity is None:
            return self.conv(x)
        if self.transform_first:
            return self.conv(self.nonlinearity(x))
        return self.nonlinearity(self.conv(x))


class CodecModel(Module):
    """g_a, g_s and the factorized prior for one configuration."""

    def __init__(self, config: NetworkConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        factory = Parameter(dtype=dtype, rng=np.random.default_rng(seed))
        cfg = config
        n, N, M, k, s = cfg.stages, cfg.hidden_channels, cfg.latent_channels, cfg.kernel, cfg.stride

        def nonlin(inverse):
            return make_nonlinearity(cfg.nonlinearity, N, inverse=inverse, factory=factory,
                                     restsm_depth=cfg.restsm_depth)

        self.analysis = []
        for i in range(n + 1):
            c_in = cfg.input_channels if i == 0 else N
            c_out = M if i == n else N
            f = nonlin(False) if i < n else None
            self.analysis.append(Stage(Conv2d(c_in, c_out, k, s, factory), f, transform_first=False))

        self.synthesis = []
        for i in range(n + 1):
            c_in = M if i == 0 else N
            c_out = cfg.input_channels if i == n else N
            f = nonlin(True) if i > 0 else None
            self.synthesis.append(Stage(ConvTranspose2d(c_in, c_out, k, s, factory), f, transform_first=True))

        self.prior = FactorizedPrior(M, factory)

    @property
    def dtype(self):
        return self.prior.loc.dtype

    def analysis_apply(self, image) -> Tensor:
        return analysis_apply(self, image)

    def synthesis_apply(self, latent) -> Tensor:
        return synthesis_apply(self, latent)

    def count_flops(self, height, width):
        total = 0
        h, w = height, width
        for stage in self.analysis:
            total += stage.conv.count_flops(h, w)
            h = ag.conv_output_size(h, self.config.kernel, self.config.stride, self.config.kernel // 2)
            w = ag.conv_output_size(w, self.config.kernel, self.config.stride, self.config.kernel // 2)
            if stage.nonlinearity is not None:
                total += stage.nonlinearity.count_flops(h, w)
        for stage in self.synthesis:
            if stage.nonlinearity is not None:
                total += stage.nonlinearity.count_flops(h, w)
            total += stage.conv.count_flops(h, w)
            h, w = h * self.config.stride, w * self.config.stride
        return total

    def astype(self, dtype) -> CodecModel:
        """Cast every parameter in place (e.g. to float64 for gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self


def analysis_apply(model: CodecModel, image) -> Tensor:
    """Run the encoder cascade; the last stage has no transform."""
    x = ag.as_tensor(image, dtype=model.dtype)
    f = model.config.downsampling
    if x.ndim != 4 or x.shape[1] != model.config.input_channels:
        raise ConfigError(f"expected (B, {model.config.input_channels}, H, W) image, got {x.shape}")
    if x.shape[2] % f or x.shape[3] % f:
        raise ConfigError(f"image extents {x.shape[2:]} not divisible by {f}; pad first")
    for stage in model.analysis:
        x = stage(x)
    return x


def synthesis_apply(model: CodecModel, latent) -> Tensor:
    """Run the decoder cascade; the first stage has no transform."""
    y = ag.as_tensor(latent, dtype=model.dtype)
    if y.ndim != 4 or y.shape[1] != model.config.latent_channels:
        raise ConfigError(f"expected latent with {model.config.latent_channels} channels, got {y.shape}")
    for stage in model.synthesis:
        y = stage(y)
    return y


def count_params(module: Module) -> int:
    return module.count_params()


def count_flops(module: Module, feature_height: int, feature_width: int) -> int:
    """Multiply-accumulates plus one per elementwise transcendental/arith op."""
    if feature_height < 1 or feature_width < 1:
        raise ConfigError("feature extents must be positive")
    return module.count_flops(feature_height, feature_width)


def pad_to_factor(image, factor: int) -> tuple[Tensor, tuple[int, int]]:
    """Reflect-pad right/bottom up to the next multiple of ``factor``."""
    if factor < 1:
        raise ConfigError("factor must be >= 1")
    x = ag.as_tensor(image)
    H, W = x.shape[2], x.shape[3]
    ph, pw = (-H) % factor, (-W) % factor
    if ph == 0 and pw == 0:
        return x, (H, W)
    return ag.pad2d(x, (0, ph, 0, pw), "reflect"), (H, W)


def crop_to(image, extents: tuple[int, int]) -> Tensor:
    return ag.crop2d(image, *extents)


# ---------------------------------------------------------------------------
# Checkpoints

CHECKPOINT_MAGIC = b"TSMCKPT1"
_DTYPE_TAGS = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _U64
    return h


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def serialize_checkpoint(config: NetworkConfig, tensors: dict[str, np.ndarray]) -> bytes:
    parts = [
        CHECKPOINT_MAGIC,
        _pack_str(config.nonlinearity),
        struct.pack(
            "<6I",
            config.stages,
            config.hidden_channels,
            config.latent_channels,
            config.kernel,
            config.stride,
            config.restsm_depth,
        ),
        struct.pack("<I", len(tensors)),
    ]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.ndim > 4:
            raise ConfigError(f"tensor {name} has rank {arr.ndim} > 4")
        dtype = arr.dtype.newbyteorder("<")
        if dtype not in _DTYPE_TAGS:
            arr = arr.astype("<f8")
            dtype = arr.dtype
        extents = (1,) * (4 - arr.ndim) + arr.shape
        parts += [
            _pack_str(name),
            struct.pack("<B4I", _DTYPE_TAGS[dtype], *extents),
            np.ascontiguousarray(arr, dtype=dtype).tobytes(),
        ]
    body = b"".join(parts)
    return body + struct.pack("<Q", fnv1a64(body))


def parse_checkpoint(blob: bytes) -> tuple[NetworkConfig, dict[str, np.ndarray]]:
    if len(blob) < len(CHECKPOINT_MAGIC) + 8 or blob[:8] != CHECKPOINT_MAGIC:
        raise DataError("not a TSMCKPT1 checkpoint")
    body, (stored,) = blob[:-8], struct.unpack("<Q", blob[-8:])
    if fnv1a64(body) != stored:
        raise DataError("checkpoint checksum mismatch (file corrupt)")
    try:
        pos = 8
        (klen,) = struct.unpack_from("<I", body, pos)
        pos += 4
        kind = body[pos:pos + klen].decode("utf-8")
        pos += klen
        n, N, M, kernel, stride, depth = struct.unpack_from("<6I", body, pos)
        pos += 24
        (count,) = struct.unpack_from("<I", body, pos)
        pos += 4
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", body, pos)
            pos += 4
            name = body[pos:pos + nlen].decode("utf-8")
            pos += nlen
            tag, *extents = struct.unpack_from("<B4I", body, pos)
            pos += 17
            dtype = _TAG_DTYPES[tag]
            nbytes = int(np.prod(extents)) * dtype.itemsize
            if pos + nbytes > len(body):
                raise DataError(f"tensor {name} truncated")
            tensors[name] = np.frombuffer(body, dtype=dtype, count=int(np.prod(extents)), offset=pos).reshape(extents)
            pos += nbytes
    except (struct.error, KeyError, UnicodeDecodeError) as exc:
        raise DataError(f"malformed checkpoint: {exc}") from exc
    if pos != len(body):
        raise DataError("trailing bytes in checkpoint")
    config = NetworkConfig(n, N, M, kernel, stride, kind, depth)
    return config, tensors


def model_state(model: CodecModel) -> dict[str, np.ndarray]:
    return {name: p.data for name, p in model.named_parameters()}


def load_state(model: CodecModel, tensors: dict[str, np.ndarray]) -> None:
    for name, p in model.named_parameters():
        if name not in tensors:
            raise DataError(f"checkpoint lacks parameter {name}")
        arr = tensors[name]
        if arr.size != p.size:
            raise DataError(f"parameter {name}: checkpoint has {arr.size} values, model needs {p.size}")
        p.data = np.array(arr.reshape(p.shape), dtype=arr.dtype)


def save_checkpoint(path, model: CodecModel, extra: dict[str, np.ndarray] | None = None) -> bytes:
    tensors = model_state(model)
    if extra:
        tensors.update(extra)
    blob = serialize_checkpoint(model.config, tensors)
    Path(path).write_bytes(blob)
    return blob


def load_checkpoint(path) -> tuple[CodecModel, dict[str, np.ndarray], int]:
    """Rebuild a model from disk; returns (model, all tensors, file checksum)."""
    blob = Path(path).read_bytes()
    config, tensors = parse_checkpoint(blob)
    first = next(iter(tensors.values()), None)
    dtype = first.dtype if first is not None else np.float32
    model = CodecModel(config, dtype=dtype)
    load_state(model, tensors)
    return model, tensors, fnv1a64(blob)


def config_fields() -> list[str]:
    return [f.name for f in fields(NetworkConfig)]
