"""Acceptance suite. Each criterion prints one PASS/FAIL line and then asserts.

The end-to-end criteria run the full nine-scene synthetic suite (180 frames at
640x480) twice, so this module takes tens of minutes on one core.
"""
from __future__ import annotations

import math
import time

import numpy as np
import pytest

from motion_anomaly.descriptor import emd_l1
from motion_anomaly.dictionary import select_representatives, solve_row_group_lasso
from motion_anomaly.evaluation import aggregate, write_metrics_csv
from motion_anomaly.fusion import LikelihoodTable, binarize_prior, fuse, likelihoods, posterior
from motion_anomaly import fusion
from motion_anomaly.pipeline import Detector, PipelineConfig, SequenceScorer
from motion_anomaly.reconstruction import lasso_kkt_residual, solve_lasso
from motion_anomaly.superpixel import slic
from motion_anomaly.synth import iter_frames, standard_suite

from oracles import four_connected, lasso_grid, lasso_objective, prototypes_instance, transport_lp


def report(capsys, name: str, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


def _hists(rng, n, d):
    H = rng.random((n, d)) ** 2
    return H / H.sum(axis=1, keepdims=True)


# -- EMD --------------------------------------------------------------------------


def test_emd_matches_transport_oracle(capsys):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        d = int(rng.integers(2, 9))
        p, q = _hists(rng, 2, d)
        if rng.random() < 0.5:
            p = p * (rng.random(d) < 0.5)
            p[rng.integers(d)] += 0.1
            p /= p.sum()
        worst = max(worst, abs(emd_l1(p, q) - transport_lp(p, q)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 5.0
    report(capsys, "EMD oracle equivalence", ok, f"max |diff| {worst:.2e} over 200 pairs in {elapsed:.2f} s")
    assert ok


# -- group lasso ---------------------------------------------------------------------


def test_group_lasso_solver(capsys):
    rng = np.random.default_rng(7)
    monotone = diag_zero = True
    for _ in range(50):
        n = int(rng.integers(2, 51))
        Y = _hists(rng, n, 30).T
        history: list[float] = []
        C = solve_row_group_lasso(Y, float(rng.uniform(0.005, 0.5)), history=history)
        monotone &= bool(np.all(np.diff(history) <= 0.0))
        diag_zero &= bool(np.all(np.diag(C) == 0.0))
    recovered = 0
    for seed in range(20):
        Y, member, clean = prototypes_instance(seed)
        C = solve_row_group_lasso(Y, lambda1=0.05)
        d = select_representatives(Y, np.zeros((Y.shape[1], 2)), C, M=3)
        top = np.argsort(-np.linalg.norm(C, axis=1), kind="stable")[:3]
        recovered += sorted(member[top]) == [0, 1, 2] and bool(clean[top].all()) and len(d) == 3
    ok = monotone and diag_zero and recovered == 20
    report(capsys, "Group-lasso solver", ok, f"monotone={monotone} diag0={diag_zero} prototypes {recovered}/20")
    assert ok


# -- lasso -------------------------------------------------------------------------


def test_lasso_kkt_and_grid(capsys):
    rng = np.random.default_rng(11)
    worst_kkt = 0.0
    for _ in range(100):
        K = int(rng.integers(1, 13))
        D = _hists(rng, K, 30).T
        y = _hists(rng, 1, 30)[0]
        lam = float(rng.uniform(0.001, 1.0))
        worst_kkt = max(worst_kkt, lasso_kkt_residual(y, D, solve_lasso(y, D, lam), lam))
    worst_gap = 0.0
    for _ in range(100):
        K, d = int(rng.integers(1, 4)), int(rng.integers(2, 8))
        D = _hists(rng, K, d).T
        y = _hists(rng, 1, d)[0]
        lam = float(rng.uniform(0.01, 1.0))
        _, best = lasso_grid(y, D, lam)
        worst_gap = max(worst_gap, abs(lasso_objective(y, D, solve_lasso(y, D, lam), lam) - best))
    ok = worst_kkt <= 1e-6 and worst_gap <= 1e-6
    report(capsys, "Lasso KKT", ok, f"max KKT residual {worst_kkt:.2e}, max grid gap {worst_gap:.2e}")
    assert ok


# -- SLIC --------------------------------------------------------------------------


def test_slic_partition_connectivity_count(capsys):
    rng = np.random.default_rng(5)
    failures = []
    for i in range(20):
        h, w, n = int(rng.integers(24, 97)), int(rng.integers(24, 97)), int(rng.integers(4, 60))
        img = rng.random((h // 8 + 1, w // 8 + 1)).repeat(8, 0).repeat(8, 1)[:h, :w]
        img = np.clip(img + 0.05 * rng.standard_normal((h, w)), 0, 1)
        seg = slic(img, n_target=n)
        sizes = np.bincount(seg.labels.ravel(), minlength=seg.count)
        good = (
            seg.labels.min() == 0
            and seg.labels.max() == seg.count - 1
            and bool(np.all(sizes > 0))
            and 0.5 * n <= seg.count <= 2 * n
            and all(four_connected(seg.labels == k) for k in range(seg.count))
        )
        if not good:
            failures.append(i)
    grid = slic(np.zeros((100, 100)), 25, 10)
    grid_ok = grid.count == 25 and bool(np.all((grid.sizes >= 300) & (grid.sizes <= 500)))
    ok = not failures and grid_ok
    report(capsys, "SLIC", ok, f"random images failing {failures}, uniform grid ok={grid_ok}")
    assert ok


# -- fusion ------------------------------------------------------------------------


def _map(rng):
    cells = rng.random((4, 4))
    cells.flat[0], cells.flat[-1] = 0.0, 1.0
    return cells.repeat(6, 0).repeat(8, 1)


def test_fusion_algebra(capsys):
    rng = np.random.default_rng(3)
    sym = rng_ok = red = mono = 0
    uniform = lambda other, mask, m=10: LikelihoodTable(m, np.full(m, 1 / m), np.full(m, 1 / m), mask, ~mask)
    for _ in range(100):
        a, b = _map(rng), _map(rng)
        sym += bool(np.max(np.abs(fuse(a, b) - fuse(b, a))) <= 1e-12)
        f = fuse(a, b)
        rng_ok += bool(np.all((f >= 0) & (f <= 1)))
        original = fusion.likelihoods
        fusion.likelihoods = uniform
        try:
            red += bool(np.max(np.abs(fuse(a, b) - (a + b) / 2)) <= 1e-12)
        finally:
            fusion.likelihoods = original
        table = likelihoods(b, binarize_prior(a), 10)
        lo = rng.random(a.shape)
        hi = lo + rng.random(a.shape) * (1 - lo)
        mono += bool(np.all(posterior(hi, b, table) >= posterior(lo, b, table)))
    ok = sym == rng_ok == red == mono == 100
    report(capsys, "Fusion algebra", ok, f"symmetry {sym}/100, range {rng_ok}/100, reduction {red}/100, monotone {mono}/100")
    assert ok


# -- end-to-end synthetic suite --------------------------------------------------------


def _run_suite():
    rows, frame_times = [], []
    for spec in standard_suite():
        det = Detector(PipelineConfig())
        scorer = SequenceScorer()
        for _, flow, truth in iter_frames(spec):
            t0 = time.perf_counter()
            res = det.process(flow)
            frame_times.append(time.perf_counter() - t0)
            if res.scored:
                scorer.add(res, truth)
        rows.append(scorer.row(spec.name, spec.category))
    return rows, frame_times


@pytest.fixture(scope="module")
def suite_runs(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    first, times = _run_suite()
    write_metrics_csv(out / "metrics_1.csv", first)
    second, _ = _run_suite()
    write_metrics_csv(out / "metrics_2.csv", second)
    return first, times, out


@pytest.mark.slow
def test_end_to_end_synthetic_suite(suite_runs, capsys):
    rows, _, out = suite_runs
    with capsys.disabled():
        print("\n" + (out / "metrics_1.csv").read_text())
    cats = {r["sequence"]: r["category"] for r in rows}
    bayes = {r["sequence"]: r["auc_bayes"] for r in rows}
    product = {r["sequence"]: r["auc_product"] for r in rows}
    per_seq = min(bayes.values()) >= 0.90
    vt = [r for r in rows if r["category"] == "VT"]
    vt_order = all(r["auc_orientation"] >= r["auc_magnitude"] for r in vt)
    cat_b, mean_b = aggregate(bayes, cats)
    _, mean_p = aggregate(product, cats)
    ordering = mean_b >= mean_p
    report(capsys, "End-to-end B-MO AUC >= 0.90 per sequence", per_seq, f"min {min(bayes.values()):.4f}")
    report(capsys, "End-to-end VT orientation >= magnitude", vt_order,
           ", ".join(f"{r['sequence']} O={r['auc_orientation']:.4f} M={r['auc_magnitude']:.4f}" for r in vt))
    report(capsys, "End-to-end mean B-MO >= mean MO", ordering,
           f"B-MO {mean_b:.4f} vs MO {mean_p:.4f}; per category " + ", ".join(f"{k} {v:.4f}" for k, v in cat_b.items()))
    assert per_seq and vt_order and ordering


@pytest.mark.slow
def test_throughput(suite_runs, capsys):
    _, times, _ = suite_runs
    mean = float(np.mean(times))
    ok = mean <= 1.0
    report(capsys, "Throughput", ok, f"{mean:.3f} s/frame over {len(times)} frames at 640x480, N=125")
    assert ok


@pytest.mark.slow
def test_determinism(suite_runs, capsys):
    _, _, out = suite_runs
    a, b = (out / "metrics_1.csv").read_bytes(), (out / "metrics_2.csv").read_bytes()
    ok = a == b
    report(capsys, "Determinism", ok, f"metrics CSVs identical={ok} ({len(a)} bytes)")
    assert ok
