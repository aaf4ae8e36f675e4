"""Bayesian integration of the orientation and magnitude anomaly maps.

Each map serves in turn as the prior; the other supplies likelihoods from
its value histograms inside and outside the prior's above-mean region. The
two posteriors are averaged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LikelihoodTable:
    m: int
    p_given_A: np.ndarray  # (m,)
    p_given_N: np.ndarray  # (m,)
    abnormal: np.ndarray  # (h, w) bool mask A
    normal: np.ndarray  # (h, w) bool mask N


def _as_array(s) -> np.ndarray:
    return np.asarray(getattr(s, "values", s), dtype=np.float64)


def value_bins(values: np.ndarray, m: int) -> np.ndarray:
    """Interval index of ``[0, 1]`` values in ``m`` equal bins; 1.0 lands in the last."""
    return np.clip(np.floor(np.asarray(values) * m), 0, m - 1).astype(np.int64)


def binarize_prior(prior) -> np.ndarray:
    """Pixels strictly above the map's mean form the abnormal region."""
    s = _as_array(prior)
    return s > s.mean()


def likelihoods(other, mask: np.ndarray, m: int = 10) -> LikelihoodTable:
    """Laplace-smoothed histograms of ``other`` inside and outside ``mask``."""
    s = _as_array(other)
    mask = np.asarray(mask, dtype=bool)
    if s.shape != mask.shape:
        raise ValueError(f"map {s.shape} and mask {mask.shape} differ")
    if m < 2:
        raise ValueError("m must be at least 2")
    bins = value_bins(s, m)
    in_a = np.bincount(bins[mask], minlength=m).astype(np.float64)
    in_n = np.bincount(bins[~mask], minlength=m).astype(np.float64)
    return LikelihoodTable(
        m,
        (in_a + 1.0) / (in_a.sum() + m),
        (in_n + 1.0) / (in_n.sum() + m),
        mask,
        ~mask,
    )


def posterior(prior, other, table: LikelihoodTable) -> np.ndarray:
    """Per-pixel ``p(A | other)`` with the prior map as ``p(A)``."""
    p = _as_array(prior)
    s = _as_array(other)
    if p.shape != s.shape:
        raise ValueError(f"maps {p.shape} and {s.shape} differ")
    bins = value_bins(s, table.m)
    num = p * table.p_given_A[bins]
    den = num + (1.0 - p) * table.p_given_N[bins]
    out = p.copy()
    ok = den > 0.0
    out[ok] = num[ok] / den[ok]
    return out


def fuse(s_o, s_m, m: int = 10) -> np.ndarray:
    """Average of the two posteriors obtained by swapping prior and evidence."""
    a = _as_array(s_o)
    b = _as_array(s_m)
    if a.shape != b.shape:
        raise ValueError(f"maps {a.shape} and {b.shape} differ")
    post_a = posterior(a, b, likelihoods(b, binarize_prior(a), m))
    post_b = posterior(b, a, likelihoods(a, binarize_prior(b), m))
    return np.clip((post_a + post_b) / 2.0, 0.0, 1.0)
