"""Dense flow fields: Middlebury ``.flo`` I/O, a Horn-Schunck fallback
estimator, and the split into orientation / magnitude fields.

Scalar fields are plain ``float64`` arrays of shape ``(height, width)``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from scipy import ndimage

from .errors import DataError, FormatError

FLO_MAGIC = 202021.25
FLO_SENTINEL = 1e9
MIN_SIDE = 8
TWO_PI = 2.0 * math.pi

FieldKind = Literal["orientation", "magnitude"]

# Horn-Schunck neighbour weights; the centre is excluded from the average.
_HS_KERNEL = np.array(
    [[1 / 12, 1 / 6, 1 / 12], [1 / 6, 0.0, 1 / 6], [1 / 12, 1 / 6, 1 / 12]]
)


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement ``(u, v)`` in pixels/frame, row-major ``(h, w)``."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.ndim != 2 or u.shape != v.shape:
            raise ValueError(f"u and v must be equal 2-D arrays, got {u.shape} and {v.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise DataError("flow contains non-finite values")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape


def read_flo(path: str | Path) -> FlowField:
    """Decode a Middlebury ``.flo`` file.

    Raises
    ------
    FormatError
        Bad magic number, truncated header or payload, trailing bytes.
    DataError
        Non-finite or sentinel (``|x| > 1e9``) components.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    (magic,) = struct.unpack("<f", raw[:4])
    if magic != np.float32(FLO_MAGIC):
        raise FormatError(f"{path}: bad magic {magic!r}")
    width, height = struct.unpack("<ii", raw[4:12])
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: invalid dimensions {width}x{height}")
    expected = 12 + 8 * width * height
    if len(raw) != expected:
        raise FormatError(
            f"{path}: payload holds {(len(raw) - 12) // 8} vectors, header declares {width * height}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=12).astype(np.float64)
    data = data.reshape(height, width, 2)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite flow values")
    if np.any(np.abs(data) > FLO_SENTINEL):
        raise DataError(f"{path}: unknown-flow sentinel values present")
    return FlowField(data[..., 0], data[..., 1])


def write_flo(path: str | Path, flow: FlowField) -> None:
    h, w = flow.shape
    payload = np.empty((h, w, 2), dtype="<f4")
    payload[..., 0] = flow.u
    payload[..., 1] = flow.v
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", FLO_MAGIC))
        fh.write(struct.pack("<ii", w, h))
        fh.write(payload.tobytes())


def _hs_derivatives(prev: np.ndarray, nxt: np.ndarray):
    ix = 0.5 * (np.gradient(prev, axis=1) + np.gradient(nxt, axis=1))
    iy = 0.5 * (np.gradient(prev, axis=0) + np.gradient(nxt, axis=0))
    it = nxt - prev
    return ix, iy, it


def _neighbour_sum(a: np.ndarray) -> np.ndarray:
    return ndimage.correlate(a, _HS_KERNEL, mode="constant", cval=0.0)


def hs_energy(prev: np.ndarray, nxt: np.ndarray, flow: FlowField, smoothness: float) -> float:
    """Discrete Horn-Schunck energy minimised by :func:`horn_schunck`.

    Data term ``sum (Ix u + Iy v + It)^2`` plus ``smoothness^2`` times the
    weighted squared differences over every unordered neighbour pair.
    """
    ix, iy, it = _hs_derivatives(np.asarray(prev, float), np.asarray(nxt, float))
    data = float(np.sum((ix * flow.u + iy * flow.v + it) ** 2))
    deg = _neighbour_sum(np.ones_like(flow.u))
    smooth = 0.0
    for c in (flow.u, flow.v):
        # sum over unordered neighbour pairs of w_pq (c_p - c_q)^2
        smooth += float(np.sum(deg * c * c) - np.sum(c * _neighbour_sum(c)))
    return data + smoothness**2 * smooth


def horn_schunck(
    prev: np.ndarray,
    nxt: np.ndarray,
    smoothness: float = 0.1,
    iterations: int = 100,
    *,
    energy_trace: list[float] | None = None,
) -> FlowField:
    """Estimate dense flow from ``prev`` to ``nxt`` with Jacobi-style
    Horn-Schunck iterations.

    Each iteration minimises the energy exactly per pixel given the
    neighbours' previous values. Border pixels average only over in-frame
    neighbours, which keeps the smoothness operator symmetric and the
    energy non-increasing from one iterate to the next.

    If ``energy_trace`` is given, the energy of the initial zero flow and of
    every iterate is appended to it.
    """
    prev = np.asarray(prev, dtype=np.float64)
    nxt = np.asarray(nxt, dtype=np.float64)
    if prev.shape != nxt.shape or prev.ndim != 2:
        raise ValueError(f"frame shapes differ or are not 2-D: {prev.shape} vs {nxt.shape}")
    if smoothness <= 0:
        raise ValueError("smoothness must be positive")
    if iterations < 1:
        raise ValueError("iterations must be positive")

    ix, iy, it = _hs_derivatives(prev, nxt)
    deg = _neighbour_sum(np.ones_like(prev))
    alpha2 = smoothness**2
    denom = alpha2 * deg + ix * ix + iy * iy
    u = np.zeros_like(prev)
    v = np.zeros_like(prev)
    if energy_trace is not None:
        energy_trace.append(hs_energy(prev, nxt, FlowField(u, v), smoothness))
    for _ in range(iterations):
        u_bar = _neighbour_sum(u) / deg
        v_bar = _neighbour_sum(v) / deg
        common = (ix * u_bar + iy * v_bar + it) / denom
        u = u_bar - ix * common
        v = v_bar - iy * common
        if energy_trace is not None:
            energy_trace.append(hs_energy(prev, nxt, FlowField(u, v), smoothness))
    return FlowField(u, v)


def split_fields(flow: FlowField) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(orientation, magnitude)``; orientation lies in ``[0, 2*pi)``
    and is 0 wherever the magnitude is 0."""
    magnitude = np.hypot(flow.u, flow.v)
    orientation = np.arctan2(flow.v, flow.u)
    orientation = np.where(orientation < 0.0, orientation + TWO_PI, orientation)
    # -tiny + 2*pi rounds to 2*pi
    orientation[orientation >= TWO_PI] = 0.0
    orientation[magnitude == 0.0] = 0.0
    return orientation, magnitude


def to_gray(field: np.ndarray, kind: FieldKind, v_max: float = 20.0) -> np.ndarray:
    """Linearly map an orientation or magnitude field to ``[0, 1]``."""
    if v_max <= 0:
        raise ValueError("v_max must be positive")
    field = np.asarray(field, dtype=np.float64)
    if kind == "orientation":
        return np.clip(field / TWO_PI, 0.0, 1.0)
    if kind == "magnitude":
        return np.clip(field, 0.0, v_max) / v_max
    raise ValueError(f"unknown field kind {kind!r}")
