"""Quantization channel, factorized logistic prior, and range coding.

Training sees the latent through additive U(-0.5, 0.5) noise; inference rounds
it and codes the integers with a per-channel fixed-point CDF table.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tensor
from .errors import ConfigError, DataError, DecodeError
from .transforms import Module

SCALE_MIN = 1e-4
LIKELIHOOD_FLOOR = 2.0 ** -20
PRECISION = 16
TOTAL = 1 << PRECISION
DEFAULT_SYM_RANGE = (-64, 63)


# ---------------------------------------------------------------------------
# Quantization proxies


def add_uniform_noise(y: Tensor, rng_seed) -> Tensor:
    """y + u with u ~ U(-0.5, 0.5), drawn from ``rng_seed`` (int, seq or Generator)."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    y = ag.as_tensor(y)
    u = rng.uniform(-0.5, 0.5, size=y.shape).astype(y.dtype)
    return y + ag.Tensor(u)


def quantize_round(y) -> np.ndarray:
    """Round half away from zero, returned as int64."""
    v = y.data if isinstance(y, Tensor) else np.asarray(y, dtype=np.float64)
    return (np.sign(v) * np.floor(np.abs(v) + 0.5)).astype(np.int64)


# ---------------------------------------------------------------------------
# Prior


class FactorizedPrior(Module):
    """Independent logistic density per latent channel."""

    def __init__(self, channels: int, factory: Parameter | None = None):
        factory = factory or Parameter()
        self.loc = factory.zeros(channels)
        self.log_scale = factory.zeros(channels)

    @property
    def channels(self) -> int:
        return self.loc.shape[0]

    def scale(self) -> Tensor:
        return ag.clamp_min(ag.exp(self.log_scale), SCALE_MIN)

    def forward(self, v: Tensor) -> Tensor:
        return likelihood(v, self)

    def count_flops(self, height, width):
        return 0


def _sigmoid(x):
    return ag._sigmoid(x)


def _logistic_bin_mass(v: Tensor, loc: Tensor, scale: Tensor) -> Tensor:
    """F(v + 0.5) - F(v - 0.5) for the logistic CDF F((x - loc) / scale).

    Evaluated in whichever tail is closer so the difference keeps precision.
    """
    vd, mu, s = v.data, loc.data, scale.data
    upper = (vd + 0.5 - mu) / s
    lower = (vd - 0.5 - mu) / s
    flip = (vd - mu) > 0
    hi = np.where(flip, -lower, upper)
    lo = np.where(flip, -upper, lower)
    p = _sigmoid(hi) - _sigmoid(lo)
    su, sl = _sigmoid(upper), _sigmoid(lower)
    du = su * (1.0 - su)
    dl = sl * (1.0 - sl)

    def bw(g):
        dv = g * (du - dl) / s
        ds = -g * (upper * du - lower * dl) / s
        return dv, -dv, ds

    return ag.record(p, (v, loc, scale), bw, "logistic_bin_mass")


def likelihood(v: Tensor, prior: FactorizedPrior, floor: float = LIKELIHOOD_FLOOR) -> Tensor:
    """Integer-bin probability of each latent value, floored at ``floor``."""
    v = ag.as_tensor(v)
    if v.ndim != 4 or v.shape[1] != prior.channels:
        raise ConfigError(f"prior has {prior.channels} channels, latent is {v.shape}")
    loc = ag.channel_vector(prior.loc)
    scale = ag.channel_vector(prior.scale())
    p = _logistic_bin_mass(v, loc, scale)
    return ag.clamp_min(p, floor) if floor > 0 else p


def rate_bits(v: Tensor, prior: FactorizedPrior) -> Tensor:
    """Estimated code length in bits: sum of -log2 p."""
    p = likelihood(v, prior)
    return ag.log(p).sum() * (-1.0 / math.log(2.0))


# ---------------------------------------------------------------------------
# Fixed-point CDF tables


def quantize_probabilities(probs: np.ndarray, total: int = TOTAL) -> np.ndarray:
    """Integer frequencies summing to ``total``, each >= 1.

    Every bin gets 1 plus the floor of its share of the remaining mass; the
    leftover units go to the largest fractional parts, lower index first on
    ties.
    """
    probs = np.asarray(probs, dtype=np.float64)
    n = probs.size
    if n > total:
        raise ConfigError("more bins than frequency units")
    probs = np.maximum(probs, 0.0)
    probs = probs / probs.sum()
    scaled = probs * (total - n)
    base = np.floor(scaled)
    freqs = base.astype(np.int64) + 1
    remainder = total - int(freqs.sum())
    order = np.argsort(-(scaled - base), kind="stable")
    freqs[order[:remainder]] += 1
    return freqs


@dataclass
class QuantizedCdf:
    """Per-channel frequency tables over [min_sym, max_sym] plus escape bins.

    ``freqs[c, i]`` is the frequency of symbol ``min_sym + i``; when
    ``escape`` is set, the final column is the escape bin.
    """

    min_sym: int
    max_sym: int
    freqs: np.ndarray
    escape: bool = True
    cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=np.int64)
        if self.freqs.ndim == 1:
            self.freqs = self.freqs[None, :]
        nbins = self.max_sym - self.min_sym + 1 + int(self.escape)
        if self.freqs.shape[1] != nbins:
            raise ConfigError(f"expected {nbins} bins per channel, got {self.freqs.shape[1]}")
        if np.any(self.freqs < 1) or np.any(self.freqs.sum(axis=1) != TOTAL):
            raise ConfigError("frequencies must be >= 1 and sum to 2^16")
        self.cum = np.concatenate(
            [np.zeros((self.freqs.shape[0], 1), dtype=np.int64), np.cumsum(self.freqs, axis=1)], axis=1
        )

    @property
    def channels(self) -> int:
        return self.freqs.shape[0]

    @property
    def escape_index(self) -> int:
        return self.max_sym - self.min_sym + 1

    @classmethod
    def from_probabilities(cls, probs, min_sym: int = 0, escape: bool = False) -> QuantizedCdf:
        probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
        freqs = np.stack([quantize_probabilities(row) for row in probs])
        nsym = probs.shape[1] - int(escape)
        return cls(min_sym, min_sym + nsym - 1, freqs, escape)

    def to_bytes(self) -> bytes:
        return struct.pack("<ii?", self.min_sym, self.max_sym, self.escape) + self.freqs.astype("<u4").tobytes()


def _logistic_cdf(x: np.ndarray) -> np.ndarray:
    return _sigmoid(np.asarray(x, dtype=np.float64))


def build_cdf_table(prior: FactorizedPrior, sym_range: tuple[int, int] = DEFAULT_SYM_RANGE) -> QuantizedCdf:
    """Quantize the prior's bin masses (plus tail mass as escape) to 16 bits.

    Evaluated in float64 from the stored parameters only, so encoder and
    decoder rebuild identical tables from the same checkpoint.
    """
    lo, hi = sym_range
    if hi < lo:
        raise ConfigError("empty symbol range")
    mu = prior.loc.data.astype(np.float64)[:, None]
    s = np.maximum(np.exp(prior.log_scale.data.astype(np.float64)), SCALE_MIN)[:, None]
    edges = np.arange(lo, hi + 2, dtype=np.float64) - 0.5
    cdf = _logistic_cdf((edges[None, :] - mu) / s)
    inside = np.diff(cdf, axis=1)
    tails = cdf[:, :1] + (1.0 - cdf[:, -1:])
    probs = np.concatenate([inside, tails], axis=1)
    freqs = np.stack([quantize_probabilities(row) for row in probs])
    return QuantizedCdf(lo, hi, freqs, escape=True)


# ---------------------------------------------------------------------------
# Range coder (carry-less, 32-bit state, bytewise output)

_MASK = 0xFFFFFFFF
_TOP = 1 << 24
_BOT = 1 << 16


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK
        self.out = bytearray()

    def encode(self, cum: int, freq: int) -> None:
        r = self.range >> PRECISION
        self.low += cum * r
        self.range = freq * r
        self._normalize()

    def _normalize(self) -> None:
        while True:
            if (self.low ^ (self.low + self.range)) >= _TOP:
                if self.range >= _BOT:
                    return
                self.range = (-self.low) & (_BOT - 1)
            self.out.append(self.low >> 24)
            self.low = (self.low << 8) & _MASK
            self.range = (self.range << 8) & _MASK

    def finish(self) -> bytes:
        for _ in range(4):
            self.out.append(self.low >> 24)
            self.low = (self.low << 8) & _MASK
        return bytes(self.out)


class RangeDecoder:
    def __init__(self, payload: bytes):
        self.data = payload
        self.pos = 0
        self.low = 0
        self.range = _MASK
        self.code = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._byte()

    def _byte(self) -> int:
        if self.pos >= len(self.data):
            raise DecodeError("payload truncated")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def target(self) -> int:
        self._r = self.range >> PRECISION
        value = ((self.code - self.low) & _MASK) // self._r
        if value >= TOTAL:
            raise DecodeError("payload corrupt: target outside frequency range")
        return value

    def consume(self, cum: int, freq: int) -> None:
        self.low += cum * self._r
        self.range = freq * self._r
        while True:
            if (self.low ^ (self.low + self.range)) >= _TOP:
                if self.range >= _BOT:
                    return
                self.range = (-self.low) & (_BOT - 1)
            self.code = ((self.code << 8) | self._byte()) & _MASK
            self.low = (self.low << 8) & _MASK
            self.range = (self.range << 8) & _MASK


def _as_channel_rows(symbols) -> np.ndarray:
    s = np.asarray(symbols)
    if s.ndim == 4:
        s = s.transpose(1, 0, 2, 3).reshape(s.shape[1], -1)
    elif s.ndim == 1:
        s = s[None, :]
    if s.ndim != 2:
        raise ConfigError(f"symbols must be (C, L) or (B, C, H, W), got {s.shape}")
    return s.astype(np.int64)


def range_encode(symbols, cdf: QuantizedCdf) -> bytes:
    """Code integer symbols channel by channel into one payload.

    Out-of-range values are sent as the escape bin followed by their 32-bit
    two's-complement value as two raw 16-bit halves.
    """
    rows = _as_channel_rows(symbols)
    if rows.shape[0] != cdf.channels:
        raise ConfigError(f"{rows.shape[0]} symbol channels but {cdf.channels} CDF channels")
    enc = RangeEncoder()
    for c, row in enumerate(rows):
        freqs, cum = cdf.freqs[c].tolist(), cdf.cum[c].tolist()
        for s in row.tolist():
            idx = s - cdf.min_sym
            if 0 <= idx <= cdf.max_sym - cdf.min_sym:
                enc.encode(cum[idx], freqs[idx])
                continue
            if not cdf.escape:
                raise ConfigError(f"symbol {s} outside [{cdf.min_sym}, {cdf.max_sym}] and no escape bin")
            if not -(1 << 31) <= s < (1 << 31):
                raise ConfigError(f"symbol {s} does not fit in 32 bits")
            e = cdf.escape_index
            enc.encode(cum[e], freqs[e])
            raw = s & _MASK
            enc.encode(raw >> 16, 1)
            enc.encode(raw & 0xFFFF, 1)
    return enc.finish()


def range_decode(payload: bytes, cdf: QuantizedCdf, count: int) -> np.ndarray:
    """Inverse of ``range_encode``: returns a (channels, count) int64 array."""
    dec = RangeDecoder(payload)
    out = np.empty((cdf.channels, count), dtype=np.int64)
    nsym = cdf.max_sym - cdf.min_sym + 1
    for c in range(cdf.channels):
        cum_arr = cdf.cum[c]
        cum, freqs = cum_arr.tolist(), cdf.freqs[c].tolist()
        for i in range(count):
            t = dec.target()
            idx = int(np.searchsorted(cum_arr, t, side="right")) - 1
            dec.consume(cum[idx], freqs[idx])
            if idx < nsym:
                out[c, i] = idx + cdf.min_sym
                continue
            hi = dec.target()
            dec.consume(hi, 1)
            lo = dec.target()
            dec.consume(lo, 1)
            raw = (hi << 16) | lo
            out[c, i] = raw - (1 << 32) if raw >= (1 << 31) else raw
    if dec.pos != len(payload):
        raise DecodeError(f"payload has {len(payload) - dec.pos} trailing bytes")
    return out


def empirical_entropy_bits(symbols) -> float:
    """Sum over channels of count * empirical entropy (a lower bound for any static per-channel code)."""
    rows = _as_channel_rows(symbols)
    bits = 0.0
    for row in rows:
        _, counts = np.unique(row, return_counts=True)
        p = counts / counts.sum()
        bits += float(-(counts * np.log2(p)).sum())
    return bits


# ---------------------------------------------------------------------------
# Bitstream container

BITSTREAM_MAGIC = b"TSMB"
BITSTREAM_VERSION = 1


@dataclass
class BitstreamHeader:
    model_checksum: int
    kind: str
    stages: int
    hidden_channels: int
    latent_channels: int
    width: int
    height: int
    padded_width: int
    padded_height: int


def pack_bitstream(header: BitstreamHeader, payloads: list[bytes]) -> bytes:
    kind = header.kind.encode("ascii")
    parts = [
        BITSTREAM_MAGIC,
        struct.pack("<B", BITSTREAM_VERSION),
        struct.pack("<Q", header.model_checksum),
        struct.pack("<I", len(kind)),
        kind,
        struct.pack(
            "<7I",
            header.stages,
            header.hidden_channels,
            header.latent_channels,
            header.width,
            header.height,
            header.padded_width,
            header.padded_height,
        ),
        struct.pack("<I", len(payloads)),
        b"".join(struct.pack("<I", len(p)) for p in payloads),
        *payloads,
    ]
    return b"".join(parts)


def unpack_bitstream(blob: bytes) -> tuple[BitstreamHeader, list[bytes]]:
    try:
        if blob[:4] != BITSTREAM_MAGIC:
            raise DataError("not a TSMB bitstream")
        if blob[4] != BITSTREAM_VERSION:
            raise DataError(f"unsupported bitstream version {blob[4]}")
        pos = 5
        (checksum,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        (klen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        kind = blob[pos:pos + klen].decode("ascii")
        pos += klen
        fields = struct.unpack_from("<7I", blob, pos)
        pos += 28
        (count,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        lengths = struct.unpack_from(f"<{count}I", blob, pos)
        pos += 4 * count
    except (struct.error, IndexError, UnicodeDecodeError) as exc:
        raise DataError(f"bitstream header truncated or malformed: {exc}") from exc
    payloads = []
    for n in lengths:
        if pos + n > len(blob):
            raise DecodeError("bitstream payload truncated")
        payloads.append(blob[pos:pos + n])
        pos += n
    if pos != len(blob):
        raise DataError("trailing bytes after bitstream payloads")
    return BitstreamHeader(checksum, kind, *fields), payloads
