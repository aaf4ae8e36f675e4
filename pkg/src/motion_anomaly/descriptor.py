"""Per-superpixel motion histograms and the EMD-L1 histogram distance."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .motion_field import TWO_PI, FieldKind
from .superpixel import SegmentationMap

MASS_TOL = 1e-6


@dataclass(frozen=True)
class MotionFeature:
    histogram: np.ndarray  # (d,), sums to 1
    centroid: tuple[float, float]  # (x, y)
    frame: int
    field_kind: FieldKind


def bin_indices(values: np.ndarray, kind: FieldKind, v_max: float, d: int) -> np.ndarray:
    """Histogram bin of every raw field value.

    Orientation bins split ``[0, 2*pi)`` uniformly; magnitude bins split
    ``[0, v_max]`` uniformly and the last bin also takes everything above.
    """
    values = np.asarray(values, dtype=np.float64)
    if kind == "orientation":
        idx = np.floor(values * (d / TWO_PI))
    elif kind == "magnitude":
        if v_max <= 0:
            raise ValueError("v_max must be positive")
        idx = np.floor(values * (d / v_max))
    else:
        raise ValueError(f"unknown field kind {kind!r}")
    return np.clip(idx, 0, d - 1).astype(np.int64)


def superpixel_histograms(
    field: np.ndarray, seg: SegmentationMap, kind: FieldKind, v_max: float = 20.0, d: int = 30
) -> np.ndarray:
    """``(seg.count, d)`` array of L1-normalised pixel-count histograms."""
    field = np.asarray(field)
    if field.shape != seg.labels.shape:
        raise ValueError(f"field {field.shape} and segmentation {seg.labels.shape} differ")
    bins = bin_indices(field, kind, v_max, d)
    flat = seg.labels.ravel() * d + bins.ravel()
    counts = np.bincount(flat, minlength=seg.count * d).reshape(seg.count, d).astype(np.float64)
    return counts / counts.sum(axis=1, keepdims=True)


def extract_features(
    field: np.ndarray,
    seg: SegmentationMap,
    kind: FieldKind,
    v_max: float = 20.0,
    d: int = 30,
    frame: int = 0,
) -> list[MotionFeature]:
    hist = superpixel_histograms(field, seg, kind, v_max, d)
    return [
        MotionFeature(hist[k], (float(seg.centroids[k, 0]), float(seg.centroids[k, 1])), frame, kind)
        for k in range(seg.count)
    ]


def emd_l1(p: np.ndarray, q: np.ndarray) -> float:
    """Earth mover's distance between two unit-mass histograms with ground
    distance ``|i - j|``, evaluated as the L1 distance of their CDFs."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"histogram shapes differ: {p.shape} vs {q.shape}")
    for h in (p, q):
        if abs(h.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"histogram mass {h.sum():.9g} is not 1")
    return float(np.abs(np.cumsum(p - q)).sum())


def emd_l1_many(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise :func:`emd_l1` over broadcastable ``(..., d)`` arrays.

    No mass validation; callers pass normalised histograms.
    """
    return np.abs(np.cumsum(np.asarray(p) - np.asarray(q), axis=-1)).sum(axis=-1)


def write_feature_csv(path: str | Path, features: Iterable[MotionFeature]) -> None:
    """Dump ``frame,field_kind,label,cx,cy,h0..h{d-1}`` rows."""
    features = list(features)
    d = len(features[0].histogram) if features else 0
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["frame", "field_kind", "label", "cx", "cy"] + [f"h{i}" for i in range(d)])
        for label, f in enumerate(features):
            out.writerow(
                [f.frame, f.field_kind, label, f"{f.centroid[0]:.6f}", f"{f.centroid[1]:.6f}"]
                + [f"{x:.9g}" for x in f.histogram]
            )
