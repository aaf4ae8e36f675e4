from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motion_anomaly import fusion
from motion_anomaly.fusion import LikelihoodTable, binarize_prior, fuse, likelihoods, posterior, value_bins

from oracles import likelihood_recount

seeds = st.integers(0, 2**31 - 1)


def random_map(rng, shape=(24, 32)):
    """Piecewise-constant [0, 1] map with exact 0 and 1 present, like a max-min normalised map."""
    cells = rng.random((4, 4))
    cells.flat[0], cells.flat[-1] = 0.0, 1.0
    return cells.repeat(shape[0] // 4, 0).repeat(shape[1] // 4, 1)


def uniform_table(m, mask):
    return LikelihoodTable(m, np.full(m, 1.0 / m), np.full(m, 1.0 / m), mask, ~mask)


# -- binarisation / likelihoods -----------------------------------------------------


def test_binarize_examples():
    assert not binarize_prior(np.full((3, 3), 0.4)).any()
    half = np.zeros((2, 4))
    half[:, 2:] = 1.0
    np.testing.assert_array_equal(binarize_prior(half), half == 1.0)


def test_value_bins_put_one_in_last_interval():
    np.testing.assert_array_equal(value_bins(np.array([0.0, 0.0999, 0.1, 0.95, 1.0]), 10), [0, 0, 1, 9, 9])


def test_empty_region_gives_uniform_table():
    t = likelihoods(np.random.default_rng(0).random((5, 5)), np.zeros((5, 5), bool), m=10)
    np.testing.assert_array_equal(t.p_given_A, np.full(10, 0.1))


def test_constant_map_fills_bin_zero():
    mask = np.zeros((4, 4), bool)
    mask[:2] = True
    t = likelihoods(np.full((4, 4), 0.05), mask, m=10)
    assert t.p_given_A[0] == pytest.approx(9 / 18) and t.p_given_N[0] == pytest.approx(9 / 18)
    np.testing.assert_allclose(t.p_given_A[1:], 1 / 18)


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(2, 16))
def test_likelihoods_match_recount(seed, m):
    rng = np.random.default_rng(seed)
    other = rng.random((9, 11))
    other.flat[rng.integers(99)] = 1.0
    mask = rng.random((9, 11)) < 0.3
    t = likelihoods(other, mask, m)
    pa, pn = likelihood_recount(other, mask, m)
    np.testing.assert_allclose(t.p_given_A, pa, atol=1e-12)
    np.testing.assert_allclose(t.p_given_N, pn, atol=1e-12)
    assert abs(t.p_given_A.sum() - 1) <= 1e-9 and abs(t.p_given_N.sum() - 1) <= 1e-9


def test_shape_and_bin_errors():
    with pytest.raises(ValueError):
        likelihoods(np.zeros((3, 3)), np.zeros((3, 4), bool))
    with pytest.raises(ValueError):
        likelihoods(np.zeros((3, 3)), np.zeros((3, 3), bool), m=1)
    with pytest.raises(ValueError):
        fuse(np.zeros((3, 3)), np.zeros((4, 3)))


# -- posterior -------------------------------------------------------------------


def test_posterior_examples():
    mask = np.zeros((1, 3), bool)
    table = LikelihoodTable(2, np.array([0.75, 0.25]), np.array([0.25, 0.75]), mask, ~mask)
    prior = np.array([[0.5, 0.0, 0.3]])
    other = np.array([[0.1, 0.1, 0.1]])  # bin 0: ratio 3:1
    out = posterior(prior, other, table)
    assert out[0, 0] == pytest.approx(0.75)
    assert out[0, 1] == 0.0


def test_zero_denominator_returns_prior():
    mask = np.zeros((1, 2), bool)
    table = LikelihoodTable(2, np.array([0.0, 1.0]), np.array([1.0, 0.0]), mask, ~mask)
    out = posterior(np.array([[1.0, 0.0]]), np.array([[0.1, 0.9]]), table)
    np.testing.assert_array_equal(out, [[1.0, 0.0]])


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_equal_likelihoods_reduce_to_prior(seed):
    rng = np.random.default_rng(seed)
    prior, other = random_map(rng), random_map(rng)
    out = posterior(prior, other, uniform_table(10, binarize_prior(prior)))
    np.testing.assert_allclose(out, prior, atol=1e-12, rtol=0)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_posterior_monotone_in_prior(seed):
    rng = np.random.default_rng(seed)
    a, b = random_map(rng), random_map(rng)
    table = likelihoods(b, binarize_prior(a), 10)
    lo = rng.random(a.shape)
    hi = np.clip(lo + rng.random(a.shape) * (1 - lo), 0, 1)
    assert np.all(posterior(hi, b, table) >= posterior(lo, b, table))


# -- fuse ------------------------------------------------------------------------


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_fuse_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = random_map(rng), random_map(rng)
    np.testing.assert_allclose(fuse(a, b), fuse(b, a), atol=1e-12, rtol=0)


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(2, 20))
def test_fuse_range(seed, m):
    rng = np.random.default_rng(seed)
    out = fuse(random_map(rng), random_map(rng), m)
    assert np.all((out >= 0) & (out <= 1))


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_uniform_tables_reduce_to_mean(seed):
    rng = np.random.default_rng(seed)
    a, b = random_map(rng), random_map(rng)
    original = fusion.likelihoods
    fusion.likelihoods = lambda other, mask, m=10: uniform_table(m, mask)
    try:
        out = fuse(a, b)
    finally:
        fusion.likelihoods = original
    np.testing.assert_allclose(out, (a + b) / 2, atol=1e-12, rtol=0)


def test_zero_maps_fuse_to_zero():
    z = np.zeros((6, 6))
    assert np.all(fuse(z, z) == 0.0)


def test_shared_bright_region_keeps_argmax():
    s = np.zeros((20, 20))
    s[5:10, 5:10] = 1.0
    s[12:16, 0:4] = 0.4
    out = fuse(s, s)
    assert np.unravel_index(np.argmax(out), out.shape) == (5, 5)
    assert out[5:10, 5:10].min() > out[12:16, 0:4].max()
