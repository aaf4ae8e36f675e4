"""Representative selection of normal motion patterns.

The coefficient matrix ``C`` of the row-sparse self-expression problem

    min_C  lambda1 * sum_i ||C[i, :]||_2 + 0.5 * ||Y - Y C||_F^2,  diag(C) = 0

ranks the columns of ``Y`` by how much of the data they reconstruct; the
top-ranked columns become dictionary atoms together with the centroid of
the superpixel they came from.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .errors import DataError, FormatError
from .motion_field import FieldKind

log = logging.getLogger(__name__)


@dataclass
class Dictionary:
    atoms: np.ndarray  # (M, d), one histogram per row, most important first
    locations: np.ndarray  # (M, 2) centroids (x, y)
    scores: np.ndarray  # (M,) row norms of C, non-increasing
    field_kind: FieldKind
    warning: str | None = None

    def __len__(self) -> int:
        return self.atoms.shape[0]

    @property
    def D(self) -> np.ndarray:
        """Atoms as columns, ``(d, M)``."""
        return self.atoms.T


@dataclass
class UpdateBuffer:
    """Normal features gathered since the last relearn."""

    period: int
    frames_seen: int = 0
    histograms: list[np.ndarray] = field(default_factory=list)
    centroids: list[np.ndarray] = field(default_factory=list)

    def add(self, histograms: np.ndarray, centroids: np.ndarray) -> None:
        if len(histograms):
            self.histograms.append(np.asarray(histograms, dtype=np.float64))
            self.centroids.append(np.asarray(centroids, dtype=np.float64))

    def tick(self) -> None:
        self.frames_seen += 1

    @property
    def due(self) -> bool:
        return self.frames_seen >= self.period

    @property
    def size(self) -> int:
        return sum(len(h) for h in self.histograms)

    def pending(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.histograms:
            return np.empty((0, 0)), np.empty((0, 2))
        return np.vstack(self.histograms), np.vstack(self.centroids)

    def clear(self) -> None:
        self.frames_seen = 0
        self.histograms.clear()
        self.centroids.clear()


def group_lasso_objective(Y: np.ndarray, C: np.ndarray, lambda1: float) -> float:
    R = Y - Y @ C
    return float(lambda1 * np.linalg.norm(C, axis=1).sum() + 0.5 * np.sum(R * R))


@numba.njit(cache=True, nogil=True)
def _prox_step(C, G, step, thresh, out):
    """``out <- prox(C + step * G)`` row by row; returns the summed row norms."""
    n = C.shape[0]
    total = 0.0
    for i in range(n):
        sq = 0.0
        for j in range(n):
            b = C[i, j] + step * G[i, j]
            out[i, j] = b
            sq += b * b
        sq -= out[i, i] * out[i, i]
        out[i, i] = 0.0
        norm = np.sqrt(max(sq, 0.0))
        if norm > thresh:
            f = 1.0 - thresh / norm
            for j in range(n):
                out[i, j] *= f
            total += norm - thresh
        else:
            for j in range(n):
                out[i, j] = 0.0
    return total


def solve_row_group_lasso(
    Y: np.ndarray,
    lambda1: float = 0.5,
    tol: float = 1e-6,
    max_iter: int = 500,
    *,
    history: list[float] | None = None,
) -> np.ndarray:
    """Proximal gradient descent on the row-sparse self-expression problem.

    ``Y`` holds one feature per column (``c x N``). Each iterate takes a
    gradient step of length ``1 / sigma_max(Y)**2``, zeroes the diagonal and
    applies the row-wise group soft-threshold (the exact proximal map of the
    penalty restricted to ``diag(C) = 0``). Iteration stops once the relative
    objective decrease drops below ``tol``; an iterate that would raise the
    objective is discarded, so accepted objectives never increase.

    If ``history`` is given, the objective of every accepted iterate
    (starting with ``C = 0``) is appended.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise ValueError("Y must be a 2-D (features x samples) matrix")
    n = Y.shape[1]
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    if lambda1 <= 0:
        raise ValueError("lambda1 must be positive")
    if not np.all(np.isfinite(Y)):
        raise DataError("Y contains non-finite values")

    C = np.zeros((n, n))
    sigma = np.linalg.norm(Y, 2)
    if sigma == 0.0:
        return C
    step = 1.0 / sigma**2
    thresh = lambda1 * step
    Yt = np.ascontiguousarray(Y.T)
    G = np.empty_like(C)
    C_next = np.empty_like(C)

    R = Y.copy()
    obj = 0.5 * float(np.sum(R * R))
    if history is not None:
        history.append(obj)
    for _ in range(max_iter):
        np.matmul(Yt, R, out=G)
        shrunk = _prox_step(C, G, step, thresh, C_next)
        R_next = Y - Y @ C_next
        obj_next = lambda1 * shrunk + 0.5 * float(np.sum(R_next * R_next))
        if obj_next > obj:
            break
        C, C_next = C_next, C
        R = R_next
        decrease = (obj - obj_next) / max(obj, np.finfo(float).tiny)
        obj = obj_next
        if history is not None:
            history.append(obj)
        if decrease < tol:
            break
    return C


def select_representatives(
    Y: np.ndarray,
    Z: np.ndarray,
    C: np.ndarray,
    M: int = 300,
    field_kind: FieldKind = "orientation",
) -> Dictionary:
    """Columns of ``Y`` whose rows of ``C`` have the ``M`` largest norms,
    most important first (ties: lower column index)."""
    Y = np.asarray(Y, dtype=np.float64)
    norms = np.linalg.norm(C, axis=1)
    order = np.argsort(-norms, kind="stable")
    order = order[norms[order] > 0.0][:M]
    warning = None
    if len(order) < M:
        warning = f"only {len(order)} non-zero coefficient rows for M={M}"
        log.debug("%s dictionary: %s", field_kind, warning)
    d = Y.shape[0]
    return Dictionary(
        atoms=Y[:, order].T.copy().reshape(len(order), d),
        locations=np.asarray(Z, dtype=np.float64)[order].reshape(len(order), 2),
        scores=norms[order],
        field_kind=field_kind,
        warning=warning,
    )


def learn_dictionary(
    histograms: np.ndarray,
    centroids: np.ndarray,
    field_kind: FieldKind,
    lambda1: float = 0.5,
    M: int = 300,
    tol: float = 1e-6,
    max_iter: int = 500,
) -> Dictionary:
    """Learn a dictionary from row-stacked features ``(N, d)``."""
    Y = np.asarray(histograms, dtype=np.float64).T
    C = solve_row_group_lasso(Y, lambda1, tol, max_iter)
    return select_representatives(Y, centroids, C, M, field_kind)


def update(
    dictionary: Dictionary,
    buffer: UpdateBuffer,
    lambda1: float = 0.5,
    M: int = 300,
    tol: float = 1e-6,
    max_iter: int = 500,
) -> Dictionary:
    """Relearn on the old atoms followed by the buffered normal features.

    The buffer is always cleared. The old dictionary is returned unchanged
    when there is nothing new, when fewer than two samples are available, or
    when relearning selects no atom at all.
    """
    hist, cent = buffer.pending()
    buffer.clear()
    if len(hist) == 0:
        return dictionary
    Y_new = np.vstack([dictionary.atoms, hist]) if len(dictionary) else hist
    Z_new = np.vstack([dictionary.locations, cent]) if len(dictionary) else cent
    if len(Y_new) < 2:
        log.warning("%s dictionary update skipped: fewer than 2 samples", dictionary.field_kind)
        return dictionary
    new = learn_dictionary(Y_new, Z_new, dictionary.field_kind, lambda1, M, tol, max_iter)
    if len(new) == 0:
        log.warning("%s dictionary update selected no atoms; keeping previous", dictionary.field_kind)
        return dictionary
    return new


def write_checkpoint(path: str | Path, dictionary: Dictionary) -> None:
    """CSV with ``rank,score,x,y,h0..`` rows after a ``# key=value`` header."""
    d = dictionary.atoms.shape[1] if len(dictionary) else 0
    with open(path, "w", newline="") as fh:
        fh.write(f"# field_kind={dictionary.field_kind} M={len(dictionary)} d={d}\n")
        out = csv.writer(fh)
        out.writerow(["rank", "score", "x", "y"] + [f"h{i}" for i in range(d)])
        for r in range(len(dictionary)):
            x, y = dictionary.locations[r]
            out.writerow(
                [r, repr(float(dictionary.scores[r])), repr(float(x)), repr(float(y))]
                + [repr(float(v)) for v in dictionary.atoms[r]]
            )


def read_checkpoint(path: str | Path) -> Dictionary:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise FormatError(f"{path}: missing checkpoint header")
        meta = dict(kv.split("=", 1) for kv in first[1:].split())
        rows = list(csv.reader(fh))
    try:
        kind, m, d = meta["field_kind"], int(meta["M"]), int(meta["d"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad checkpoint header {first.strip()!r}") from exc
    body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64).reshape(-1, 4 + d)
    if len(body) != m:
        raise FormatError(f"{path}: header declares {m} atoms, found {len(body)}")
    return Dictionary(
        atoms=body[:, 4:].copy(),
        locations=body[:, 2:4].copy(),
        scores=body[:, 1].copy(),
        field_kind=kind,  # type: ignore[arg-type]
    )
