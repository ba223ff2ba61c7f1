"""Image quality, BD-rate and channel-energy measurements."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.interpolate import PchipInterpolator

from .errors import ConfigError, DataError

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
K1, K2 = 0.01, 0.03


class ScaleReductionWarning(UserWarning):
    """Image too small for five MS-SSIM scales; fewer were used."""


@dataclass(frozen=True)
class RdPoint:
    bpp: float
    psnr: float
    msssim: float

    def __post_init__(self):
        if self.bpp < 0:
            raise ConfigError("bpp must be non-negative")
        if not 0.0 <= self.msssim <= 1.0:
            raise ConfigError("msssim must lie in [0, 1]")

    def quality(self, field: str) -> float:
        if field == "psnr":
            return self.psnr
        if field in ("msssim", "msssim_db"):
            return msssim_db(self.msssim)
        raise ConfigError(f"unknown quality field {field!r}")


class RdCurve(list):
    """RD points sorted by strictly increasing bpp."""

    def __init__(self, points=()):
        pts = sorted(points, key=lambda p: p.bpp)
        for a, b in zip(pts, pts[1:]):
            if not b.bpp > a.bpp:
                raise ConfigError("RD curve needs strictly increasing bpp")
        super().__init__(pts)

    def rates(self) -> np.ndarray:
        return np.array([p.bpp for p in self])

    def qualities(self, field: str) -> np.ndarray:
        return np.array([p.quality(field) for p in self])


def psnr(a, b, peak: float = 255.0) -> float:
    """10 log10(peak^2 / MSE); identical inputs give +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, win: np.ndarray) -> np.ndarray:
    k = win.size
    x = sliding_window_view(x, k, axis=-1) @ win
    x = np.moveaxis(sliding_window_view(x, k, axis=-2), -1, -2)
    return np.einsum("...kw,k->...w", x, win)


def _ssim_terms(x: np.ndarray, y: np.ndarray, data_range: float) -> tuple[np.ndarray, np.ndarray]:
    win = _gaussian_window()
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    mu_x = _filter_valid(x, win)
    mu_y = _filter_valid(y, win)
    sxx = _filter_valid(x * x, win) - mu_x * mu_x
    syy = _filter_valid(y * y, win) - mu_y * mu_y
    sxy = _filter_valid(x * y, win) - mu_x * mu_y
    cs = (2.0 * sxy + c2) / (sxx + syy + c2)
    lum = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    return (lum * cs).mean(axis=(-2, -1)), cs.mean(axis=(-2, -1))


def _avg_pool2(x: np.ndarray) -> np.ndarray:
    h, w = x.shape[-2] // 2 * 2, x.shape[-1] // 2 * 2
    x = x[..., :h, :w]
    return 0.25 * (x[..., 0::2, 0::2] + x[..., 1::2, 0::2] + x[..., 0::2, 1::2] + x[..., 1::2, 1::2])


def msssim_levels(height: int, width: int) -> int:
    side = min(height, width)
    if side < WINDOW_SIZE:
        raise ConfigError(f"image side {side} smaller than the {WINDOW_SIZE}-tap window")
    return min(len(MSSSIM_WEIGHTS), 1 + int(math.floor(math.log2(side / WINDOW_SIZE))))


def msssim(a, b, data_range: float = 255.0) -> float:
    """Multi-scale SSIM averaged over batch and colour channels.

    Arrays may be (H, W), (C, H, W) or (B, C, H, W). Images with a side below
    176 use fewer scales, with the leading weights renormalized.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ConfigError(f"shape mismatch {x.shape} vs {y.shape}")
    levels = msssim_levels(x.shape[-2], x.shape[-1])
    weights = np.array(MSSSIM_WEIGHTS[:levels])
    if levels < len(MSSSIM_WEIGHTS):
        warnings.warn(f"MS-SSIM reduced to {levels} scales for {x.shape[-2]}x{x.shape[-1]} input",
                      ScaleReductionWarning, stacklevel=2)
        weights = weights / weights.sum()
    values = []
    for level in range(levels):
        ssim, cs = _ssim_terms(x, y, data_range)
        values.append(ssim if level == levels - 1 else cs)
        if level < levels - 1:
            x, y = _avg_pool2(x), _avg_pool2(y)
    stack = np.maximum(np.stack(values), 0.0)
    score = np.prod(stack ** weights.reshape((-1,) + (1,) * (stack.ndim - 1)), axis=0)
    return float(np.clip(np.mean(score), 0.0, 1.0))


def msssim_db(d: float) -> float:
    """-10 log10(1 - d); +inf for a perfect score."""
    if d >= 1.0:
        return math.inf
    return -10.0 * math.log10(1.0 - d)


def bd_rate(anchor: RdCurve, test: RdCurve, quality_field: str = "psnr") -> float:
    """Bjøntegaard delta rate of ``test`` against ``anchor``, in percent.

    Log-rate is interpolated as a monotone piecewise-cubic Hermite function of
    quality and integrated exactly over the shared quality interval. Negative
    means ``test`` needs fewer bits for the same quality.
    """
    if len(anchor) < 2 or len(test) < 2:
        raise ConfigError("BD-rate needs at least two points per curve")

    def interp(curve):
        q = curve.qualities(quality_field)
        r = np.log(curve.rates())
        if not np.all(np.isfinite(q)) or not np.all(np.isfinite(r)):
            raise ConfigError("BD-rate needs finite qualities and positive rates")
        order = np.argsort(q, kind="stable")
        q, r = q[order], r[order]
        uq, inv = np.unique(q, return_inverse=True)
        if uq.size < 2:
            raise ConfigError("curve needs at least two distinct quality values")
        ur = np.bincount(inv, weights=r) / np.bincount(inv)
        return PchipInterpolator(uq, ur), uq[0], uq[-1]

    fa, a_lo, a_hi = interp(anchor)
    ft, t_lo, t_hi = interp(test)
    lo, hi = max(a_lo, t_lo), min(a_hi, t_hi)
    if not hi > lo:
        raise ConfigError("RD curves have no overlapping quality range")
    mean_diff = (ft.integrate(lo, hi) - fa.integrate(lo, hi)) / (hi - lo)
    return float((math.exp(mean_diff) - 1.0) * 100.0)


def channel_energy_ratio(features) -> np.ndarray:
    """Per-channel share of the total sum of squares (channel axis 1 for 4-D input)."""
    f = np.asarray(getattr(features, "data", features), dtype=np.float64)
    if f.ndim == 4:
        energy = np.sum(f * f, axis=(0, 2, 3))
    elif f.ndim == 3:
        energy = np.sum(f * f, axis=(1, 2))
    else:
        raise ConfigError(f"expected (B, C, H, W) or (C, H, W) features, got {f.shape}")
    total = energy.sum()
    if total == 0.0:
        raise ConfigError("features carry no energy")
    return energy / total


RD_FIELDS = ("bpp", "psnr", "msssim")


def write_rd_csv(target, curve) -> None:
    """Write ``curve`` to a path or an already open text stream."""
    if hasattr(target, "write"):
        w = csv.writer(target, lineterminator="\n")
        w.writerow(RD_FIELDS)
        for p in curve:
            w.writerow([repr(float(p.bpp)), repr(float(p.psnr)), repr(float(p.msssim))])
        return
    with open(target, "w", newline="") as fh:
        write_rd_csv(fh, curve)


def read_rd_csv(path) -> RdCurve:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    if not rows or any(k not in rows[0] for k in RD_FIELDS):
        raise DataError(f"{path}: expected CSV header {','.join(RD_FIELDS)}")
    try:
        return RdCurve(RdPoint(float(r["bpp"]), float(r["psnr"]), float(r["msssim"])) for r in rows)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
