"""Binary PGM (P5) read/write, frame loading and anomaly overlays."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError

_PGM_HEADER = re.compile(rb"^P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s")


def write_pgm(path: str | Path, image: np.ndarray, maxval: int = 255) -> None:
    """Write an integer image as binary PGM; 16-bit samples are big-endian."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    if not 0 < maxval < 65536:
        raise ValueError("maxval must lie in [1, 65535]")
    if image.size and (image.min() < 0 or image.max() > maxval):
        raise ValueError(f"sample values outside [0, {maxval}]")
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(image.astype(dtype).tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM into an integer array of shape ``(h, w)``."""
    return _parse_pgm(path)[0]


def _parse_pgm(path):
    raw = Path(path).read_bytes()
    m = _PGM_HEADER.match(raw)
    if m is None:
        raise FormatError(f"{path}: not a binary PGM (P5)")
    w, h, maxval = (int(g) for g in m.groups())
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    start = m.end()
    n = w * h * dtype.itemsize
    if len(raw) - start < n:
        raise FormatError(f"{path}: truncated pixel data")
    img = np.frombuffer(raw, dtype=dtype, count=w * h, offset=start).reshape(h, w)
    return img.astype(np.int64), maxval


def write_unit_pgm(path: str | Path, values: np.ndarray) -> None:
    """Quantise a ``[0, 1]`` field to 8 bits (value x 255, rounded)."""
    q = np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)
    write_pgm(path, q)


def read_gray(path: str | Path) -> np.ndarray:
    """Load an 8-bit PGM or PNG frame as ``float64`` intensities in ``[0, 1]``."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        img, maxval = _parse_pgm(path)
        return img.astype(np.float64) / maxval
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def write_overlay(
    path: str | Path, frame: np.ndarray, anomaly: np.ndarray, threshold: float = 0.5
) -> None:
    """Save ``frame`` as RGB PNG with pixels above ``threshold`` tinted red."""
    base = np.rint(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
    rgb = np.repeat(base[..., None], 3, axis=2).astype(np.float64)
    hot = anomaly > threshold
    rgb[hot] = 0.5 * rgb[hot] + 0.5 * np.array([255.0, 0.0, 0.0])
    Image.fromarray(np.rint(rgb).astype(np.uint8), mode="RGB").save(path)
