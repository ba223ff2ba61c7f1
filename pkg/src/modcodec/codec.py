"""Image <-> bitstream pipeline on top of a trained model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .entropy import (
    BitstreamHeader,
    build_cdf_table,
    pack_bitstream,
    quantize_round,
    range_decode,
    range_encode,
    unpack_bitstream,
)
from .errors import ChecksumError, DataError
from .imageio import to_tensor_layout, to_uint8
from .network import CodecModel, crop_to, pad_to_factor


@dataclass
class Encoded:
    bitstream: bytes
    symbols: np.ndarray  # (1, M, h, w) int64
    payload_bytes: int
    width: int
    height: int

    @property
    def bpp(self) -> float:
        return 8.0 * self.payload_bytes / (self.width * self.height)


def quantized_latent(model: CodecModel, img: np.ndarray) -> tuple[np.ndarray, tuple[int, int], tuple[int, int]]:
    """Rounded latent of an (H, W, 3) uint8 image plus original/padded extents."""
    x = to_tensor_layout(img, model.dtype)
    with ag.no_grad():
        padded, extents = pad_to_factor(x, model.config.downsampling)
        y = model.analysis_apply(padded)
    return quantize_round(y), extents, padded.shape[2:]


def reconstruct_from_symbols(model: CodecModel, symbols: np.ndarray, extents: tuple[int, int]) -> np.ndarray:
    with ag.no_grad():
        x_hat = model.synthesis_apply(ag.Tensor(symbols.astype(model.dtype)))
        x_hat = crop_to(x_hat, extents)
    return to_uint8(x_hat.data)


def encode_image(model: CodecModel, model_checksum: int, img: np.ndarray) -> Encoded:
    symbols, (h, w), (ph, pw) = quantized_latent(model, img)
    payload = range_encode(symbols, build_cdf_table(model.prior))
    cfg = model.config
    header = BitstreamHeader(model_checksum, cfg.nonlinearity, cfg.stages, cfg.hidden_channels,
                             cfg.latent_channels, w, h, pw, ph)
    return Encoded(pack_bitstream(header, [payload]), symbols, len(payload), w, h)


def decode_symbols(model: CodecModel, model_checksum: int, blob: bytes) -> tuple[np.ndarray, BitstreamHeader]:
    header, payloads = unpack_bitstream(blob)
    if header.model_checksum != model_checksum:
        raise ChecksumError(
            f"bitstream made with model {header.model_checksum:016x}, checkpoint is {model_checksum:016x}"
        )
    cfg = model.config
    if (header.kind, header.stages, header.hidden_channels, header.latent_channels) != (
        cfg.nonlinearity, cfg.stages, cfg.hidden_channels, cfg.latent_channels
    ):
        raise DataError("bitstream header does not match model configuration")
    f = cfg.downsampling
    if header.padded_height % f or header.padded_width % f or len(payloads) != 1:
        raise DataError("bitstream geometry inconsistent with model")
    h, w = header.padded_height // f, header.padded_width // f
    rows = range_decode(payloads[0], build_cdf_table(model.prior), h * w)
    symbols = rows.reshape(cfg.latent_channels, 1, h, w).transpose(1, 0, 2, 3)
    return symbols, header


def decode_image(model: CodecModel, model_checksum: int, blob: bytes) -> np.ndarray:
    symbols, header = decode_symbols(model, model_checksum, blob)
    return reconstruct_from_symbols(model, symbols, (header.height, header.width))
