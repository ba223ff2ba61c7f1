"""Binary PPM (P6, 8-bit RGB) reading and writing."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError


def _tokens(blob: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping # comments."""
    out, pos, n = [], 0, len(blob)
    while len(out) < count:
        while pos < n and blob[pos:pos + 1].isspace():
            pos += 1
        if pos < n and blob[pos:pos + 1] == b"#":
            while pos < n and blob[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not blob[pos:pos + 1].isspace() and blob[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise DataError("PPM header truncated")
        out.append(blob[start:pos])
    return out, pos


def decode_ppm(blob: bytes) -> np.ndarray:
    """Parse a P6 image into an (H, W, 3) uint8 array."""
    (magic, w, h, maxval), pos = _tokens(blob, 4)
    if magic != b"P6":
        raise DataError(f"unsupported PNM magic {magic!r}; only binary P6 is read")
    try:
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise DataError("PPM header has non-numeric fields") from exc
    if width < 1 or height < 1 or not 0 < maxval < 256:
        raise DataError(f"unsupported PPM geometry {width}x{height} maxval {maxval}")
    pos += 1  # single whitespace byte before the raster
    need = width * height * 3
    raster = blob[pos:pos + need]
    if len(raster) != need:
        raise DataError(f"PPM raster truncated: {len(raster)} of {need} bytes")
    img = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    if maxval != 255:
        img = np.round(img.astype(np.float64) * (255.0 / maxval)).astype(np.uint8)
    return img.copy()


def encode_ppm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise DataError(f"expected (H, W, 3) uint8 image, got {img.shape} {img.dtype}")
    h, w = img.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def read_ppm(path) -> np.ndarray:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    try:
        return decode_ppm(blob)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_ppm(path, img: np.ndarray) -> None:
    Path(path).write_bytes(encode_ppm(img))


def to_tensor_layout(img: np.ndarray, dtype=np.float32) -> np.ndarray:
    """(H, W, 3) uint8 -> (1, 3, H, W) in [0, 1]."""
    return (img.astype(dtype) / 255.0).transpose(2, 0, 1)[None].astype(dtype)


def to_uint8(x: np.ndarray) -> np.ndarray:
    """(1, 3, H, W) in [0, 1] -> (H, W, 3) uint8, rounding and clipping."""
    x = np.asarray(x, dtype=np.float64)[0].transpose(1, 2, 0)
    return np.clip(np.floor(x * 255.0 + 0.5), 0, 255).astype(np.uint8)
