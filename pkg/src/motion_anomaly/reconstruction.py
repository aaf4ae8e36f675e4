"""Spatially constrained abnormality scores for superpixel features.

Each feature is compared against the ``K`` dictionary atoms stored closest
to its own centroid. Orientation features are scored by the EMD between the
feature and its lasso reconstruction from those atoms; magnitude features by
the proximity-weighted mean EMD to them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .descriptor import emd_l1_many
from .dictionary import Dictionary
from .errors import DataError, StateError
from .superpixel import SegmentationMap

MIN_RECON_MASS = 1e-6
KKT_TARGET = 1e-10


@dataclass(frozen=True)
class SpatialNearSet:
    atom_indices: np.ndarray  # (K,)
    distances: np.ndarray  # (K,) pixels


@dataclass(frozen=True)
class AnomalyMap:
    values: np.ndarray  # (h, w) in [0, 1]
    raw: np.ndarray  # per-superpixel raw scores
    normalized: np.ndarray  # per-superpixel scores in [0, 1]


def spatial_near_indices(dictionary: Dictionary, z: np.ndarray, K: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Indices and distances of the ``K`` atoms nearest to each centroid in
    ``z`` (shape ``(n, 2)``); ties go to the lower atom index."""
    if len(dictionary) == 0:
        raise StateError(f"{dictionary.field_kind} dictionary is empty")
    if K < 1:
        raise ValueError("K must be positive")
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    diff = z[:, None, :] - dictionary.locations[None, :, :]
    dist = np.sqrt(np.einsum("nmk,nmk->nm", diff, diff))
    order = np.argsort(dist, axis=1, kind="stable")[:, : min(K, len(dictionary))]
    return order, np.take_along_axis(dist, order, axis=1)


def spatial_near(dictionary: Dictionary, z, K: int = 10) -> SpatialNearSet:
    idx, dist = spatial_near_indices(dictionary, np.asarray(z, dtype=np.float64)[None, :], K)
    return SpatialNearSet(idx[0], dist[0])


@numba.njit(cache=True, nogil=True)
def _lasso_cd(Q, b, lam, alpha, max_sweeps):
    """Cyclic coordinate descent on ``a'Qa - 2b'a + lam*|a|_1``."""
    k = b.shape[0]
    q = Q @ alpha
    for _ in range(max_sweeps):
        for j in range(k):
            if Q[j, j] <= 0.0:
                continue
            rho = b[j] - (q[j] - Q[j, j] * alpha[j])
            if rho > 0.5 * lam:
                new = (rho - 0.5 * lam) / Q[j, j]
            elif rho < -0.5 * lam:
                new = (rho + 0.5 * lam) / Q[j, j]
            else:
                new = 0.0
            delta = new - alpha[j]
            if delta != 0.0:
                for i in range(k):
                    q[i] += Q[i, j] * delta
                alpha[j] = new
        worst = 0.0
        for j in range(k):
            g = 2.0 * (q[j] - b[j])
            if alpha[j] > 0.0:
                v = abs(g + lam)
            elif alpha[j] < 0.0:
                v = abs(g - lam)
            else:
                v = max(abs(g) - lam, 0.0)
            worst = max(worst, v)
        if worst <= KKT_TARGET:
            break
    return alpha


@numba.njit(cache=True, nogil=True)
def _lasso_batch(Y, atoms, idx, lam, max_sweeps):
    n, k = idx.shape
    d = Y.shape[1]
    out = np.zeros((n, k))
    Q = np.empty((k, k))
    b = np.empty(k)
    for s in range(n):
        for i in range(k):
            ai = idx[s, i]
            acc = 0.0
            for t in range(d):
                acc += atoms[ai, t] * Y[s, t]
            b[i] = acc
            for j in range(i, k):
                aj = idx[s, j]
                acc = 0.0
                for t in range(d):
                    acc += atoms[ai, t] * atoms[aj, t]
                Q[i, j] = acc
                Q[j, i] = acc
        out[s] = _lasso_cd(Q, b, lam, np.zeros(k), max_sweeps)
    return out


def solve_lasso(y: np.ndarray, D: np.ndarray, lambda2: float = 0.5, max_sweeps: int = 100_000) -> np.ndarray:
    """Minimise ``||y - D a||^2 + lambda2 * ||a||_1`` by cyclic coordinate
    descent; ``D`` is ``(d, K)`` with atoms as columns."""
    y = np.asarray(y, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != y.shape[0] or D.shape[1] < 1:
        raise ValueError(f"incompatible shapes y{y.shape} D{D.shape}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(D))):
        raise DataError("non-finite lasso input")
    if lambda2 < 0:
        raise ValueError("lambda2 must be non-negative")
    Q = np.ascontiguousarray(D.T @ D)
    b = D.T @ y
    return _lasso_cd(Q, b, float(lambda2), np.zeros(D.shape[1]), max_sweeps)


def lasso_kkt_residual(y: np.ndarray, D: np.ndarray, alpha: np.ndarray, lambda2: float) -> float:
    """Largest violation of the lasso optimality conditions at ``alpha``."""
    g = 2.0 * D.T @ (D @ alpha - y)
    nz = alpha != 0
    viol = np.where(nz, np.abs(g + lambda2 * np.sign(alpha)), np.maximum(np.abs(g) - lambda2, 0.0))
    return float(viol.max(initial=0.0))


def _reconstruction_emd(y: np.ndarray, recon: np.ndarray, d: int) -> np.ndarray:
    """EMD between features and their reconstructions; negative bins are
    dropped and the rest renormalised, near-empty reconstructions score
    ``d - 1``."""
    recon = np.maximum(recon, 0.0)
    mass = recon.sum(axis=-1)
    ok = mass >= MIN_RECON_MASS
    safe = np.where(ok, mass, 1.0)[..., None]
    return np.where(ok, emd_l1_many(y, recon / safe), float(d - 1))


def orientation_anomaly(y, dictionary: Dictionary, lambda2: float = 0.5, K: int = 10) -> float:
    """Reconstruction cost of one orientation feature (``MotionFeature``)."""
    near = spatial_near(dictionary, y.centroid, K)
    D = dictionary.atoms[near.atom_indices].T
    alpha = solve_lasso(y.histogram, D, lambda2)
    return float(_reconstruction_emd(np.asarray(y.histogram), D @ alpha, D.shape[0]))


def orientation_scores(
    histograms: np.ndarray, centroids: np.ndarray, dictionary: Dictionary, lambda2: float = 0.5, K: int = 10
) -> np.ndarray:
    """Vectorised :func:`orientation_anomaly` over a frame's ``(n, d)`` features."""
    histograms = np.asarray(histograms, dtype=np.float64)
    if not np.all(np.isfinite(histograms)):
        raise DataError("non-finite features")
    idx, _ = spatial_near_indices(dictionary, centroids, K)
    alpha = _lasso_batch(histograms, dictionary.atoms, idx, float(lambda2), 100_000)
    recon = np.einsum("nk,nkd->nd", alpha, dictionary.atoms[idx])
    return _reconstruction_emd(histograms, recon, histograms.shape[1])


def magnitude_anomaly(y, dictionary: Dictionary, K: int = 10, diagonal: float = 800.0) -> float:
    """Proximity-weighted mean EMD between one magnitude feature and its
    spatially nearest atoms. Coordinates are divided by the image
    ``diagonal`` before the Gaussian weight ``exp(-||z - l||^2)``."""
    return float(
        magnitude_scores(np.asarray(y.histogram)[None, :], np.asarray(y.centroid)[None, :], dictionary, K, diagonal)[0]
    )


def magnitude_scores(
    histograms: np.ndarray, centroids: np.ndarray, dictionary: Dictionary, K: int = 10, diagonal: float = 800.0
) -> np.ndarray:
    if diagonal <= 0:
        raise ValueError("diagonal must be positive")
    idx, dist = spatial_near_indices(dictionary, centroids, K)
    w = np.exp(-((dist / diagonal) ** 2))
    emd = emd_l1_many(np.asarray(histograms)[:, None, :], dictionary.atoms[idx])
    return (w * emd).sum(axis=1) / idx.shape[1]


def normalize_scores(raw: np.ndarray) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    lo, hi = raw.min(), raw.max()
    if hi <= lo:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)


def normalize_map(raw: np.ndarray, seg: SegmentationMap) -> AnomalyMap:
    """Max-min normalise per-superpixel scores and paint them onto pixels."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != (seg.count,):
        raise ValueError(f"expected {seg.count} scores, got {raw.shape}")
    norm = normalize_scores(raw)
    return AnomalyMap(norm[seg.labels], raw, norm)

