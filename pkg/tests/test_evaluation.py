from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motion_anomaly.errors import EvaluationError
from motion_anomaly.evaluation import (
    RocAccumulator,
    aggregate,
    product_fusion,
    roc,
    write_metrics_csv,
    write_roc_csv,
)

from oracles import auc_pairs

seeds = st.integers(0, 2**31 - 1)


def _grid_scores(rng, shape, levels=64):
    """Scores on a grid coarse enough that every pair of distinct values is split by a threshold."""
    return rng.integers(0, levels + 1, shape) / levels


def _truth(rng, shape, p=0.3):
    t = rng.random(shape) < p
    t.flat[0], t.flat[1] = True, False
    return t


def test_perfect_and_inverted_maps():
    rng = np.random.default_rng(0)
    t = _truth(rng, (20, 30))
    assert roc([t.astype(float)], [t]).auc == 1.0
    assert roc([1.0 - t], [t]).auc == 0.0


def test_independent_scores_near_half():
    rng = np.random.default_rng(1)
    t = np.zeros(10_000, bool)
    t[:3000] = True
    s = rng.permutation(np.linspace(0, 1, 10_000))
    assert 0.45 <= roc([s], [t]).auc <= 0.55


def test_curve_endpoints_and_monotonicity():
    rng = np.random.default_rng(2)
    c = roc([rng.random((30, 30))], [_truth(rng, (30, 30))])
    assert (c.fpr[0], c.tpr[0]) == (0.0, 0.0) and (c.fpr[-1], c.tpr[-1]) == (1.0, 1.0)
    assert np.all(np.diff(c.fpr) >= 0) and np.all(np.diff(c.tpr) >= 0)
    assert len(c.fpr) == 258 and c.thresholds[0] == np.inf and c.thresholds[-1] == -np.inf


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_grid_scores_match_pairwise_oracle(seed):
    rng = np.random.default_rng(seed)
    s, t = _grid_scores(rng, (3, 15, 20)), _truth(rng, (3, 15, 20))
    assert roc(list(s), list(t)).auc == pytest.approx(auc_pairs(s, t), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seeds, st.sampled_from(["sqrt", "quadratic", "affine"]))
def test_invariant_under_increasing_transform(seed, name):
    f = {"sqrt": np.sqrt, "quadratic": lambda x: (x + x * x) / 2, "affine": lambda x: 0.2 + 0.7 * x}[name]
    rng = np.random.default_rng(seed)
    s, t = _grid_scores(rng, (25, 25)), _truth(rng, (25, 25))
    assert roc([f(s)], [t]).auc == pytest.approx(roc([s], [t]).auc, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_complement_sums_to_one(seed):
    rng = np.random.default_rng(seed)
    s, t = rng.random((40, 40)), _truth(rng, (40, 40))
    assert abs(roc([s], [t]).auc + roc([1 - s], [t]).auc - 1.0) <= 2 / 256


def test_pooling_equals_concatenation():
    rng = np.random.default_rng(3)
    s, t = rng.random((4, 10, 10)), _truth(rng, (4, 10, 10))
    acc = RocAccumulator()
    for a, b in zip(s, t):
        acc.add(a, b)
    assert acc.curve().auc == roc([s.ravel()], [t.ravel()]).auc


def test_degenerate_truth_is_rejected():
    with pytest.raises(EvaluationError):
        roc([np.ones((3, 3))], [np.zeros((3, 3), bool)])
    with pytest.raises(EvaluationError):
        roc([np.ones((3, 3))], [np.ones((3, 3), bool)])


def test_length_and_shape_mismatch():
    with pytest.raises(ValueError):
        roc([np.ones((2, 2))], [])
    with pytest.raises(ValueError):
        RocAccumulator().add(np.ones((2, 2)), np.ones((2, 3), bool))


def test_product_fusion():
    np.testing.assert_allclose(product_fusion(np.array([0.5, 1.0]), np.array([0.4, 0.2])), [0.2, 0.2])


def test_aggregate_examples():
    assert aggregate({"a": 0.8, "b": 0.9}, {"a": "VT", "b": "VT"}) == ({"VT": pytest.approx(0.85)}, pytest.approx(0.85))
    assert aggregate({"a": 0.7}, {"a": "PC"}) == ({"PC": 0.7}, 0.7)
    with pytest.raises(ValueError):
        aggregate({}, {})


def test_aggregate_matches_hand_computed_suite_means():
    aucs = {"vt01": 0.99, "vt02": 0.97, "vt03": 0.95, "vc01": 0.9, "vc02": 0.92, "vc03": 0.94, "vc04": 0.96, "pc01": 0.91, "pc02": 0.93}
    cats = {k: k[:2].upper() for k in aucs}
    means, overall = aggregate(aucs, cats)
    assert means["VT"] == pytest.approx((0.99 + 0.97 + 0.95) / 3)
    assert means["VC"] == pytest.approx((0.9 + 0.92 + 0.94 + 0.96) / 4)
    assert means["PC"] == pytest.approx((0.91 + 0.93) / 2)
    assert overall == pytest.approx(sum(aucs.values()) / 9)


def test_csv_writers(tmp_path):
    write_metrics_csv(tmp_path / "m.csv", [dict(sequence="vt01", category="VT", auc_orientation=0.5, auc_magnitude=0.25, auc_product=1.0, auc_bayes=0.75)])
    assert (tmp_path / "m.csv").read_text() == (
        "sequence,category,auc_orientation,auc_magnitude,auc_product,auc_bayes\n"
        "vt01,VT,0.500000,0.250000,1.000000,0.750000\n"
    )
    rng = np.random.default_rng(4)
    c = roc([rng.random((5, 5))], [_truth(rng, (5, 5))])
    write_roc_csv(tmp_path / "r.csv", {"bayes": c})
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "map,threshold,fpr,tpr" and len(lines) == 259
    assert lines[1].startswith("bayes,inf,0.000000000,0.000000000")
