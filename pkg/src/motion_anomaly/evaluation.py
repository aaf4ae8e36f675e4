"""Pixel-wise ROC / AUC against ground-truth masks.

Pixels of all frames in a sequence are pooled. The curve is traced over 256
evenly spaced thresholds in ``[0, 1]`` plus the two infinite endpoints; a
pixel is called abnormal when its score is ``>=`` the threshold.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import EvaluationError

N_THRESHOLDS = 256
METRICS_HEADER = ["sequence", "category", "auc_orientation", "auc_magnitude", "auc_product", "auc_bayes"]


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # descending, starts at +inf and ends at -inf
    auc: float


class RocAccumulator:
    """Streams frames into per-threshold positive/negative counts."""

    def __init__(self, n_thresholds: int = N_THRESHOLDS) -> None:
        self.thresholds = np.linspace(0.0, 1.0, n_thresholds)
        self._pos = np.zeros(n_thresholds + 1, dtype=np.int64)
        self._neg = np.zeros(n_thresholds + 1, dtype=np.int64)

    def add(self, scores: np.ndarray, truth: np.ndarray) -> None:
        scores = np.asarray(scores, dtype=np.float64)
        truth = np.asarray(truth, dtype=bool)
        if scores.shape != truth.shape:
            raise ValueError(f"score map {scores.shape} and mask {truth.shape} differ")
        # number of thresholds each score reaches
        level = np.searchsorted(self.thresholds, scores.ravel(), side="right")
        t = truth.ravel()
        n = len(self.thresholds) + 1
        self._pos += np.bincount(level[t], minlength=n)
        self._neg += np.bincount(level[~t], minlength=n)

    def curve(self) -> RocCurve:
        p, n = self._pos.sum(), self._neg.sum()
        if p == 0 or n == 0:
            raise EvaluationError(f"ground truth needs positives and negatives (P={p}, N={n})")
        # above[k] = pixels reaching threshold k, for k = 0..T-1
        tp = np.cumsum(self._pos[::-1])[::-1][1:]
        fp = np.cumsum(self._neg[::-1])[::-1][1:]
        tpr = np.concatenate([[0.0], tp[::-1] / p, [1.0]])
        fpr = np.concatenate([[0.0], fp[::-1] / n, [1.0]])
        thr = np.concatenate([[np.inf], self.thresholds[::-1], [-np.inf]])
        auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
        return RocCurve(fpr, tpr, thr, auc)


def roc(scores: Iterable[np.ndarray], truth: Iterable[np.ndarray]) -> RocCurve:
    """Pooled pixel-wise ROC over a sequence of score maps and masks."""
    acc = RocAccumulator()
    scores, truth = list(scores), list(truth)
    if len(scores) != len(truth):
        raise ValueError(f"{len(scores)} score maps but {len(truth)} masks")
    for s, t in zip(scores, truth):
        acc.add(s, t)
    return acc.curve()


def product_fusion(s_o: np.ndarray, s_m: np.ndarray) -> np.ndarray:
    """Pixel-wise product of the two maps, kept as a comparison baseline."""
    return np.asarray(s_o, dtype=np.float64) * np.asarray(s_m, dtype=np.float64)


def aggregate(per_sequence: Mapping[str, float], categories: Mapping[str, str]) -> tuple[dict[str, float], float]:
    """Mean AUC per category and over all sequences."""
    if not per_sequence:
        raise ValueError("no sequences to aggregate")
    groups: dict[str, list[float]] = {}
    for name, auc in per_sequence.items():
        groups.setdefault(categories.get(name, "unknown"), []).append(auc)
    means = {cat: float(np.mean(v)) for cat, v in sorted(groups.items())}
    return means, float(np.mean(list(per_sequence.values())))


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def write_metrics_csv(path: str | Path, rows: Iterable[Mapping[str, object]]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(METRICS_HEADER)
        for r in rows:
            out.writerow(
                [r["sequence"], r["category"]]
                + [_fmt(r.get(k)) for k in METRICS_HEADER[2:]]  # type: ignore[arg-type]
            )


def write_roc_csv(path: str | Path, curves: Mapping[str, RocCurve]) -> None:
    """One ``map,threshold,fpr,tpr`` row per curve point."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["map", "threshold", "fpr", "tpr"])
        for name, curve in curves.items():
            for t, f, p in zip(curve.thresholds, curve.fpr, curve.tpr):
                out.writerow([name, repr(float(t)), f"{f:.9f}", f"{p:.9f}"])
