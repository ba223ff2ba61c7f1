"""Image-patch datasets and a deterministic synthetic corpus."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .imageio import read_ppm, write_ppm


@dataclass
class DatasetSpec:
    directory: str
    seed: int = 0
    crop: int = 64


class PatchDataset:
    """All PPM images of a directory, served as seeded random crops.

    Batch order and crop offsets depend only on (seed, epoch), so any epoch
    can be regenerated without replaying earlier ones.
    """

    def __init__(self, spec: DatasetSpec, images: list[np.ndarray] | None = None):
        self.spec = spec
        if images is None:
            root = Path(spec.directory)
            if not root.is_dir():
                raise ConfigError(f"dataset directory {root} does not exist")
            paths = sorted(root.glob("*.ppm"))
            images = [read_ppm(p) for p in paths]
        if not images:
            raise ConfigError(f"dataset {spec.directory!r} contains no images")
        for img in images:
            if img.shape[0] < spec.crop or img.shape[1] < spec.crop:
                raise DataError(f"image {img.shape[:2]} smaller than crop {spec.crop}")
        self.images = images

    def __len__(self) -> int:
        return len(self.images)

    def steps_per_epoch(self, batch_size: int) -> int:
        return -(-len(self.images) // batch_size)

    def epoch_batches(self, epoch: int, batch_size: int):
        """Yield (B, 3, crop, crop) float32 batches in [0, 1] for one epoch."""
        c = self.spec.crop
        order = np.random.default_rng([self.spec.seed, epoch, 0]).permutation(len(self.images))
        rng = np.random.default_rng([self.spec.seed, epoch, 1])
        for start in range(0, len(order), batch_size):
            patches = []
            for idx in order[start:start + batch_size]:
                img = self.images[idx]
                top = int(rng.integers(0, img.shape[0] - c + 1))
                left = int(rng.integers(0, img.shape[1] - c + 1))
                patches.append(img[top:top + c, left:left + c])
            yield np.stack(patches).transpose(0, 3, 1, 2).astype(np.float32) / np.float32(255.0)


def synthetic_image(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """A smooth, piecewise-structured RGB image standing in for a natural photo."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.zeros((size, size, 3))
    base = rng.uniform(0.2, 0.8, size=3)
    grad = rng.normal(0, 0.25, size=(2, 3))
    img += base + xx[..., None] * grad[0] + yy[..., None] * grad[1]
    for _ in range(4):
        fx, fy = rng.uniform(0.5, 4.0, size=2)
        ph = rng.uniform(0, 2 * np.pi)
        amp = rng.normal(0, 0.06, size=3)
        img += np.sin(2 * np.pi * (fx * xx + fy * yy) + ph)[..., None] * amp
    for _ in range(int(rng.integers(2, 6))):
        colour = rng.uniform(0, 1, size=3)
        cx, cy, r = rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0.08, 0.3)
        if rng.random() < 0.5:
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 < r * r
        else:
            mask = (np.abs(xx - cx) < r) & (np.abs(yy - cy) < r * rng.uniform(0.4, 1.0))
        img[mask] = 0.35 * img[mask] + 0.65 * colour
    img += rng.normal(0, 0.01, size=img.shape)
    return np.clip(np.round(img * 255), 0, 255).astype(np.uint8)


def synthetic_corpus(count: int, seed: int = 0, size: int = 64) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [synthetic_image(rng, size) for _ in range(count)]


def write_corpus(directory, images: list[np.ndarray]) -> list[Path]:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(images):
        p = root / f"img{i:04d}.ppm"
        write_ppm(p, img)
        paths.append(p)
    return paths
