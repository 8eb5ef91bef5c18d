import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lavrentiev.convex_transform import (SampledFunction1D, SampledFunctionND, biconjugate, biconjugate_factorized,
                                         check_convexity, cross_check_factorized, epigraph_hull_oracle, legendre_1d)
from lavrentiev.integrand import make_exp_double_phase


def brute_conjugate(x, f, y):
    fin = np.isfinite(f)
    return np.max(np.outer(y, x[fin]) - f[fin][None], axis=1)


def test_quadratic_self_conjugate():
    x = np.linspace(-4, 4, 257)
    g = legendre_1d(SampledFunction1D(x, x ** 2 / 2), x)
    assert np.max(np.abs(g.values - x ** 2 / 2)) <= 1e-6


def test_norm_conjugate_is_indicator():
    x = np.linspace(-4, 4, 257)
    y = np.linspace(-2, 2, 81)
    g = legendre_1d(SampledFunction1D(x, np.abs(x)), y)
    inside = np.abs(y) <= 1
    assert np.all(np.abs(g.values[inside]) <= 1e-12)
    # outside [-1, 1] the conjugate grows linearly up to the grid edge
    np.testing.assert_allclose(g.values[~inside], 4 * (np.abs(y[~inside]) - 1), atol=1e-12)


def test_double_well_conjugate_matches_brute_force():
    x = np.linspace(-2, 2, 513)
    f = (x ** 2 - 1) ** 2
    y = np.linspace(-30, 30, 301)
    g = legendre_1d(SampledFunction1D(x, f), y)
    assert np.max(np.abs(g.values - brute_conjugate(x, f, y))) <= 1e-12


def test_double_well_biconjugate():
    x = np.linspace(-2, 2, 401)
    f = (x ** 2 - 1) ** 2
    fb = biconjugate(SampledFunction1D(x, f))
    inside = np.abs(x) <= 1
    assert np.max(np.abs(fb.values[inside])) <= 1e-9
    assert np.max(np.abs(fb.values[~inside] - f[~inside])) <= 1e-9


def test_convex_functions_are_fixed():
    x = np.linspace(-2, 2, 301)
    fb = biconjugate(SampledFunction1D(x, x ** 4))
    assert np.max(np.abs(fb.values - x ** 4)) <= 1e-9
    ax = np.linspace(-1, 1, 21)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    f2 = SampledFunctionND((ax, ax), X ** 2 + Y ** 2)
    assert np.max(np.abs(biconjugate(f2).values - f2.values)) <= 1e-9


def test_errors():
    x = np.linspace(0, 1, 5)
    with pytest.raises(ValueError, match="empty effective domain"):
        SampledFunction1D(x, np.full(5, np.inf))
    with pytest.raises(ValueError):
        SampledFunction1D(x, np.array([0, -np.inf, 0, 0, 0]))
    with pytest.raises(ValueError):
        epigraph_hull_oracle(SampledFunction1D(x, np.array([np.inf, np.inf, 1.0, np.inf, np.inf])))
    ax = np.linspace(0, 1, 2)
    with pytest.raises(ValueError, match="slice sampling"):
        SampledFunctionND((ax,) * 5, np.zeros((2,) * 5))


def test_oracle_examples():
    x = np.linspace(-2, 2, 201)
    h = epigraph_hull_oracle(SampledFunction1D(x, (x ** 2 - 1) ** 2))
    assert np.max(np.abs(h.values[np.abs(x) <= 1])) <= 1e-12
    aff = 3 * x - 1
    assert np.max(np.abs(epigraph_hull_oracle(SampledFunction1D(x, aff)).values - aff)) <= 1e-12


def test_check_convexity_examples():
    x = np.linspace(-2, 2, 201)
    rep = check_convexity(SampledFunction1D(x, x ** 2))
    assert rep.is_convex and rep.worst_violation == 0.0
    rep = check_convexity(SampledFunction1D(x, (x ** 2 - 1) ** 2))
    assert not rep.is_convex
    a, b = rep.witness
    mid = 0.5 * (np.asarray(a) + np.asarray(b))
    assert abs(mid[0]) < 1.0 and max(abs(a[0]), abs(b[0])) > 0.5


def test_nonconvex_G_on_a_ray():
    W = make_exp_double_phase(2, 0.5, 3)
    s = np.linspace(0, 8, 401)
    Xi = np.zeros((s.size, 1, 2))
    Xi[:, 0, 0] = s
    X = np.tile([[0.9, 0.0]], (s.size, 1))
    G = W.nonconvex(X, Xi)
    assert not check_convexity(SampledFunction1D(s, G)).is_convex
    assert check_convexity(SampledFunction1D(s, W(X, Xi))).is_convex


def test_json_roundtrip():
    ax = np.linspace(-1, 1, 4)
    f = SampledFunctionND((ax, ax), np.where(np.eye(4) > 0, np.inf, 1.0))
    g = SampledFunctionND.from_json(f.to_json())
    assert np.array_equal(f.values, g.values)


def test_factorized_cross_check_and_dimension_four():
    ax = np.linspace(-1, 1, 9)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    f = SampledFunctionND((ax, ax), X ** 2 + np.abs(Y))
    assert cross_check_factorized(f) <= 1e-12
    a4 = np.linspace(-1, 1, 5)
    M = np.meshgrid(*([a4] * 4), indexing="ij")
    f4 = SampledFunctionND((a4,) * 4, sum(m ** 2 for m in M))
    fb = biconjugate(f4)
    assert np.all(fb.values <= f4.values)
    assert np.max(np.abs(fb.values - f4.values)) <= 1e-9
    fbf = biconjugate_factorized(f4)
    assert np.all(fbf.values <= f4.values)


def random_1d(seed, n):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(-3, 3, n))
    x = np.unique(x)
    f = rng.normal() * x ** 2 + rng.normal() * x ** 3 + 0.2 * x ** 4 + rng.uniform(0, 2) * np.abs(x - rng.uniform(-1, 1))
    f += rng.normal(size=x.size) * 0.1
    f -= f.min()
    mask = rng.uniform(size=x.size) < 0.1
    mask[rng.integers(0, x.size)] = False
    return SampledFunction1D(x, np.where(mask, np.inf, f))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 300))
def test_biconjugate_properties(seed, n):
    f = random_1d(seed, n)
    if np.isfinite(f.values).sum() < 2:
        return
    fb = biconjugate(f)
    assert np.all(fb.values <= f.values)
    fbb = biconjugate(fb)
    fin = np.isfinite(fb.values)
    assert np.max(np.abs(fbb.values[fin] - fb.values[fin]), initial=0.0) <= 1e-12 * max(1, np.abs(fb.values[fin]).max())
    oracle = epigraph_hull_oracle(f)
    np.testing.assert_array_equal(np.isinf(oracle.values), np.isinf(fb.values))
    assert np.max(np.abs(oracle.values[fin] - fb.values[fin]), initial=0.0) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_conjugate_convex_and_order_reversing(seed):
    f = random_1d(seed, 120)
    g_vals = f.values + np.abs(np.random.default_rng(seed + 1).normal(size=f.values.size))
    g = SampledFunction1D(f.nodes, g_vals)
    y = np.linspace(-20, 20, 257)
    cf = legendre_1d(f, y)
    cg = legendre_1d(g, y)
    assert np.all(cg.values <= cf.values)
    rep = check_convexity(cf, tol=1e-12 / max(1.0, np.abs(cf.values).max()) * 1.0)
    assert rep.worst_violation <= 1e-12 * max(1.0, np.abs(cf.values).max())
