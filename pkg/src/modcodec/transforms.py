"""Nonlinear transforms expressed as carrier modulation.

Every layer here computes ``f(x) = x * A(x) * cos(w(x) + phi(x))`` for some
choice of amplitude, frequency and phase. ReLU, GDN and shrinkage only vary
the amplitude; the modulation layers (TAM/TPM/TFM/TJM) learn the amplitude,
frequency and/or phase through one per-pixel channel map each.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tensor
from .errors import ConfigError, NumericError

KINDS = ("relu", "gdn", "sa", "tam", "tpm", "tfm", "tjm", "restsm")

# (amplitude, frequency, phase) enabled
BRANCH_MASKS = {
    "tam": (True, False, False),
    "tpm": (False, False, True),
    "tfm": (False, True, False),
    "tjm": (True, True, True),
}

BETA_MIN = 1e-6
DENOM_MIN = 1e-12
# softplus(AMP_IDENTITY_BIAS) == 1
AMP_IDENTITY_BIAS = math.log(math.expm1(1.0))
# scale on Glorot init for branch maps; an all-zero map sits on a saddle of cos
BRANCH_INIT_SCALE = 0.1


class Module:
    """Minimal parameter container.

    Parameters are discovered from instance attributes in definition order, so
    names are stable across runs (checkpoints depend on it).
    """

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            yield from _walk(f"{prefix}{name}", value)

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def count_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def count_flops(self, height: int, width: int) -> int:
        raise NotImplementedError

    def project(self) -> None:
        """Restore parameter constraints after an optimizer step."""
        for value in vars(self).values():
            for m in _modules(value):
                m.project()


def _walk(name: str, value) -> Iterator[tuple[str, Tensor]]:
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(name + ".")
    elif isinstance(value, CarrierParams | GdnParams | ShrinkageParams):
        for field_name, field_value in vars(value).items():
            yield from _walk(f"{name}.{field_name}", field_value)
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(f"{name}.{i}", item)


def _modules(value) -> Iterator[Module]:
    if isinstance(value, Module):
        yield value
    elif isinstance(value, (list, tuple)):
        for item in value:
            yield from _modules(item)


# ---------------------------------------------------------------------------
# Parameter sets


@dataclass
class CarrierParams:
    """Branch maps for amplitude, frequency and phase.

    A disabled branch has no weights; it contributes A = 1, w = 0, phi = 0.
    """

    amp_weight: Tensor | None
    amp_bias: Tensor | None
    freq_weight: Tensor | None
    freq_bias: Tensor | None
    phase_weight: Tensor | None
    phase_bias: Tensor | None
    branch_mask: tuple[bool, bool, bool]
    phase_scale: float = math.pi

    @property
    def channels(self) -> int:
        for w in (self.amp_weight, self.freq_weight, self.phase_weight):
            if w is not None:
                return w.shape[0]
        return 0

    @classmethod
    def create(cls, channels: int, kind: str = "tjm", *, init: str = "zeros",
               factory: Parameter | None = None, phase_scale: float = math.pi) -> CarrierParams:
        """Build a parameter set for one of the modulation kinds.

        ``init="zeros"`` gives all-zero maps (carrier exactly constant);
        ``init="train"`` gives small random maps around the identity point.
        """
        mask = BRANCH_MASKS[kind] if isinstance(kind, str) else tuple(kind)
        factory = factory or Parameter()
        C = channels

        def weight():
            if init == "zeros":
                return factory.zeros(C, C)
            return factory.glorot((C, C), C, C, scale=BRANCH_INIT_SCALE)

        amp_b = 0.0 if init == "zeros" else AMP_IDENTITY_BIAS
        return cls(
            amp_weight=weight() if mask[0] else None,
            amp_bias=factory.full((C,), amp_b) if mask[0] else None,
            freq_weight=weight() if mask[1] else None,
            freq_bias=factory.zeros(C) if mask[1] else None,
            phase_weight=weight() if mask[2] else None,
            phase_bias=factory.zeros(C) if mask[2] else None,
            branch_mask=mask,
            phase_scale=phase_scale,
        )


@dataclass
class GdnParams:
    """GDN parameters stored as free variables.

    beta = beta_raw**2 + BETA_MIN and gamma = gamma_raw**2, so both
    constraints hold for any raw value without projection.
    """

    beta_raw: Tensor
    gamma_raw: Tensor
    inverse_flag: bool = False

    @property
    def channels(self) -> int:
        return self.beta_raw.shape[0]

    @property
    def beta(self) -> Tensor:
        return ag.square(self.beta_raw) + BETA_MIN

    @property
    def gamma(self) -> Tensor:
        return ag.square(self.gamma_raw)

    @classmethod
    def from_values(cls, beta, gamma, inverse: bool = False, dtype=np.float64) -> GdnParams:
        beta = np.asarray(beta, dtype=dtype)
        gamma = np.asarray(gamma, dtype=dtype)
        if np.any(beta < BETA_MIN) or np.any(gamma < 0):
            raise ConfigError("GDN needs beta >= beta_min and gamma >= 0")
        return cls(
            beta_raw=Tensor(np.sqrt(beta - BETA_MIN), requires_grad=True),
            gamma_raw=Tensor(np.sqrt(gamma), requires_grad=True),
            inverse_flag=inverse,
        )

    @classmethod
    def create(cls, channels: int, inverse: bool = False, dtype=np.float64,
               off_diagonal: float = 1e-4) -> GdnParams:
        # off-diagonal gamma starts slightly above zero: d(g**2)/dg vanishes at 0
        gamma = 0.1 * np.eye(channels) + off_diagonal * (1.0 - np.eye(channels))
        return cls.from_values(np.ones(channels), gamma, inverse, dtype)


@dataclass
class ShrinkageParams:
    theta: Tensor

    def __post_init__(self):
        if np.any(self.theta.data <= 0):
            raise ConfigError("shrinkage thresholds must be positive")


# ---------------------------------------------------------------------------
# Functional forms


def amplitude(x: Tensor, p: CarrierParams):
    if not p.branch_mask[0]:
        return 1.0
    return ag.softplus(ag.dense_channelwise(x, p.amp_weight, p.amp_bias))


def frequency(x: Tensor, p: CarrierParams):
    if not p.branch_mask[1]:
        return None
    return ag.dense_channelwise(x, p.freq_weight, p.freq_bias)


def phase(x: Tensor, p: CarrierParams):
    if not p.branch_mask[2]:
        return None
    return ag.tanh(ag.dense_channelwise(x, p.phase_weight, p.phase_bias)) * p.phase_scale


def _check_channels(x: Tensor, p: CarrierParams) -> None:
    if x.ndim != 4:
        raise ConfigError(f"expected a 4-D feature map, got {x.shape}")
    if any(p.branch_mask) and p.channels != x.shape[1]:
        raise ConfigError(f"carrier built for {p.channels} channels, input has {x.shape[1]}")


def carrier(x: Tensor, p: CarrierParams, amplitude_fn: Callable | None = None) -> Tensor:
    """A(x) * cos(w(x) + phi(x)).

    ``amplitude_fn`` replaces the learned amplitude branch with a closed form
    (used to express ReLU, GDN and shrinkage as carriers).
    """
    x = ag.as_tensor(x)
    _check_channels(x, p)
    amp = amplitude_fn(x) if amplitude_fn is not None else amplitude(x, p)
    w, phi = frequency(x, p), phase(x, p)
    if w is None and phi is None:
        angle = ag.Tensor(np.zeros(x.shape, dtype=x.dtype))
    elif w is None:
        angle = phi
    elif phi is None:
        angle = w
    else:
        angle = w + phi
    c = ag.cos(angle)
    if isinstance(amp, float):
        return c if amp == 1.0 else c * amp
    return amp * c


def tsm_forward(x: Tensor, p: CarrierParams, amplitude_fn: Callable | None = None) -> Tensor:
    """Modulate x elementwise by its carrier."""
    x = ag.as_tensor(x)
    return x * carrier(x, p, amplitude_fn)


def res_tsm_forward(x: Tensor, stack: list[CarrierParams], mixers: list[tuple[Tensor, Tensor]]) -> Tensor:
    """x + g(x), g alternating modulation units and channel maps.

    ``mixers`` holds the (weight, bias) of the dense maps between consecutive
    units, so ``len(mixers) == len(stack) - 1``.
    """
    if not stack:
        raise ConfigError("ResTSM depth must be >= 1")
    if len(mixers) != len(stack) - 1:
        raise ConfigError("ResTSM needs one channel map between consecutive units")
    x = ag.as_tensor(x)
    h = tsm_forward(x, stack[0])
    for p, (w, b) in zip(stack[1:], mixers):
        h = tsm_forward(ag.dense_channelwise(h, w, b), p)
    return x + h


def gdn_amplitude(p: GdnParams) -> Callable[[Tensor], Tensor]:
    """1 / sqrt(beta^2 + sum_j gamma_ij x_j^2), or its reciprocal for IGDN."""

    def amp(x: Tensor) -> Tensor:
        beta = p.beta
        denom_sq = ag.dense_channelwise(ag.square(x), p.gamma, ag.square(beta))
        if np.min(denom_sq.data) < DENOM_MIN:
            raise NumericError("GDN denominator below 1e-12")
        norm = ag.sqrt(denom_sq)
        return norm if p.inverse_flag else ag.reciprocal(norm)

    return amp


def gdn_forward(x: Tensor, p: GdnParams) -> Tensor:
    """y_i = x_i / sqrt(beta_i^2 + sum_j gamma_ij x_j^2); IGDN multiplies."""
    x = ag.as_tensor(x)
    if x.ndim != 4 or x.shape[1] != p.channels:
        raise ConfigError(f"GDN built for {p.channels} channels, input is {x.shape}")
    beta = p.beta
    denom_sq = ag.dense_channelwise(ag.square(x), p.gamma, ag.square(beta))
    if np.min(denom_sq.data) < DENOM_MIN:
        raise NumericError("GDN denominator below 1e-12")
    norm = ag.sqrt(denom_sq)
    return x * norm if p.inverse_flag else x / norm


def relu_amplitude(x: Tensor) -> Tensor:
    return ag.Tensor((ag.as_tensor(x).data > 0).astype(x.dtype))


def relu_as_amplitude(x: Tensor) -> Tensor:
    x = ag.as_tensor(x)
    return ag.relu(x)


def shrinkage_amplitude(p: ShrinkageParams) -> Callable[[Tensor], Tensor]:
    def amp(x: Tensor) -> Tensor:
        theta = p.theta.data[None, :, None, None] if x.ndim == 4 else p.theta.data
        return ag.Tensor((np.abs(x.data / theta) > 0.5).astype(x.dtype))

    return amp


def shrinkage_forward(x: Tensor, p: ShrinkageParams) -> Tensor:
    """Zero every value with |x / theta| <= 0.5, pass the rest through."""
    x = ag.as_tensor(x)
    return x * shrinkage_amplitude(p)(x)


# ---------------------------------------------------------------------------
# Layers


def _dense_flops(c_in: int, c_out: int, hw: int) -> int:
    return c_in * c_out * hw


class ReLU(Module):
    kind = "relu"

    def __init__(self, channels: int):
        self.channels = channels

    def forward(self, x):
        return relu_as_amplitude(x)

    def count_flops(self, height, width):
        return self.channels * height * width


class Shrinkage(Module):
    kind = "sa"

    def __init__(self, channels: int, factory: Parameter | None = None, theta: float = 1.0):
        factory = factory or Parameter()
        self.params = ShrinkageParams(factory.full((channels,), theta))

    def forward(self, x):
        return shrinkage_forward(x, self.params)

    def count_flops(self, height, width):
        # divide, compare, multiply
        return 3 * self.params.theta.size * height * width

    def project(self):
        np.maximum(self.params.theta.data, 1e-6, out=self.params.theta.data)


class GDN(Module):
    kind = "gdn"

    def __init__(self, channels: int, inverse: bool = False, factory: Parameter | None = None):
        dtype = factory.dtype if factory else np.float64
        self.params = GdnParams.create(channels, inverse, dtype)

    def forward(self, x):
        return gdn_forward(x, self.params)

    def count_flops(self, height, width):
        C, hw = self.params.channels, height * width
        # gamma mix (bias folds beta^2), then square, sqrt, divide per element
        return _dense_flops(C, C, hw) + 3 * C * hw


class TSM(Module):
    """One modulation unit; ``kind`` selects which branches learn."""

    def __init__(self, channels: int, kind: str = "tpm", factory: Parameter | None = None,
                 init: str = "train"):
        if kind not in BRANCH_MASKS:
            raise ConfigError(f"unknown modulation kind {kind!r}")
        self.kind = kind
        self.params = CarrierParams.create(channels, kind, init=init, factory=factory)

    def forward(self, x):
        return tsm_forward(x, self.params)

    def count_flops(self, height, width):
        return carrier_flops(self.params, height, width)


def carrier_flops(p: CarrierParams, height: int, width: int) -> int:
    C, hw = p.channels, height * width
    amp_on, freq_on, phase_on = p.branch_mask
    flops = 0
    if amp_on:
        flops += _dense_flops(C, C, hw) + C * hw  # map + softplus
    if freq_on:
        flops += _dense_flops(C, C, hw)
    if phase_on:
        flops += _dense_flops(C, C, hw) + 2 * C * hw  # map + tanh + scale
    if freq_on and phase_on:
        flops += C * hw  # angle sum
    if freq_on or phase_on:
        flops += C * hw  # cos
    if amp_on and (freq_on or phase_on):
        flops += C * hw  # A * cos
    return flops + C * hw  # x * carrier


class ResTSM(Module):
    """Joint-modulation units in series with an identity shortcut."""

    kind = "restsm"

    def __init__(self, channels: int, depth: int = 2, factory: Parameter | None = None,
                 init: str = "train"):
        if depth < 1:
            raise ConfigError("ResTSM depth must be >= 1")
        factory = factory or Parameter()
        self.stack = [CarrierParams.create(channels, "tjm", init=init, factory=factory) for _ in range(depth)]
        self.mixers = [
            (factory.glorot((channels, channels), channels, channels), factory.zeros(channels))
            for _ in range(depth - 1)
        ]
        if init == "train":
            # residual branch starts near zero so the block starts near identity
            last = self.stack[-1]
            last.amp_bias.data[:] = -4.0

    def forward(self, x):
        return res_tsm_forward(x, self.stack, self.mixers)

    def count_flops(self, height, width):
        C, hw = self.stack[0].channels, height * width
        flops = sum(carrier_flops(p, height, width) for p in self.stack)
        flops += len(self.mixers) * _dense_flops(C, C, hw)
        return flops + C * hw  # shortcut add


def make_nonlinearity(kind: str, channels: int, *, inverse: bool = False,
                      factory: Parameter | None = None, restsm_depth: int = 2,
                      init: str = "train") -> Module:
    """Instantiate a transform by its stable kind identifier.

    ``inverse`` only matters for GDN (IGDN on the synthesis side); modulation
    layers on the decoder side are independent layers of identical form.
    """
    if kind == "relu":
        return ReLU(channels)
    if kind == "gdn":
        return GDN(channels, inverse=inverse, factory=factory)
    if kind == "sa":
        return Shrinkage(channels, factory=factory)
    if kind in BRANCH_MASKS:
        return TSM(channels, kind, factory=factory, init=init)
    if kind == "restsm":
        return ResTSM(channels, restsm_depth, factory=factory, init=init)
    raise ConfigError(f"unknown nonlinearity kind {kind!r}; expected one of {', '.join(KINDS)}")
