import math

import numpy as np
import pytest

from lavrentiev.cutoff import (annulus_integrals, build_cutoff, cutoff_for, good_radii, product_exponents_ok,
                               shell_integrals, sphere_quadrature, verify_product_bound)
from lavrentiev.fields import AffineField, AnalyticField, ZeroField, random_trig_field


def test_sphere_quadrature_mass():
    for d, area in ((2, 2 * math.pi), (3, 4 * math.pi)):
        Z, w = sphere_quadrature(d)
        assert w.sum() == pytest.approx(area, rel=1e-12)
        np.testing.assert_allclose(np.linalg.norm(Z, axis=1), 1.0, atol=1e-14)


def test_constant_function_shells():
    c = AffineField(np.zeros((1, 2)), [2.0])
    pr = shell_integrals([c], (0, 0), 1.0, 0.5, 2.0, n_shells=32)
    assert np.all(pr.shell_grad_integrals == 0)
    assert np.all(good_radii(pr))


def test_linear_function_closed_form():
    pr = shell_integrals([AffineField([[1.0, 0.0]])], (0, 0), 1.0, 0.5, 2.0, n_shells=64)
    np.testing.assert_allclose(pr.shell_grad_integrals[0], 2 * math.pi, rtol=1e-13)
    # int_0^{2 pi} |r cos phi|^2 dphi = pi r^2
    np.testing.assert_allclose(pr.shell_val_integrals[0], math.pi * pr.radii ** 2, rtol=1e-12)
    Ag, _ = annulus_integrals(pr)
    assert Ag[0] == pytest.approx(2 * math.pi * (1 - 0.25) / 2, rel=1e-12)


def test_gradient_in_subannulus():
    # radial profile constant outside [0.7, 0.8]
    def val(X):
        r = np.linalg.norm(X, axis=1)
        return np.clip(r, 0.7, 0.8)[:, None]

    def grad(X):
        r = np.linalg.norm(X, axis=1)
        band = (r > 0.7) & (r < 0.8)
        return np.where(band[:, None], X / r[:, None], 0.0)[:, None, :]

    pr = shell_integrals([AnalyticField(val, grad, 2, 1)], (0, 0), 1.0, 0.5, 1.0, n_shells=50)
    out = (pr.radii < 0.7) | (pr.radii > 0.8)
    assert np.all(pr.shell_grad_integrals[0, out] == 0)
    assert np.all(pr.shell_grad_integrals[0, ~out] > 0)


def test_narrow_band_excluded():
    # gradient concentrated on one of 64 shells: width dR/64 < dR/4
    edges = 0.5 + 0.5 / 64 * np.arange(65)
    lo, hi = edges[40], edges[41]

    def val(X):
        r = np.linalg.norm(X, axis=1)
        return np.clip((r - lo) / (hi - lo), 0, 1)[:, None]

    def grad(X):
        r = np.linalg.norm(X, axis=1)
        band = (r > lo) & (r < hi)
        return np.where(band[:, None], X / r[:, None] / (hi - lo), 0.0)[:, None, :]

    u = AnalyticField(val, grad, 2, 1)
    pr = shell_integrals([u], (0, 0), 1.0, 0.5, 2.0, n_shells=64)
    U = good_radii(pr)
    assert not U[40]
    assert U[:40].all()


def test_four_functions_measure_guarantee():
    rng = np.random.default_rng(5)
    us = [random_trig_field(2, 1, rng) for _ in range(4)]
    eta = cutoff_for(us, (0, 0), 1.0, 0.25, 2.0, n_shells=128)
    assert eta.U_measure >= 0.25 / 2 - 1e-12
    assert all(eta.invariants().values())


def test_ramp_full_and_half():
    R, dl = 1.0, 0.5
    full = build_cutoff(np.ones(64, bool), R, dl)
    r = np.linspace(0.5, 1.0, 101)
    np.testing.assert_allclose(full.eta_radial(r), (R - r) / (dl * R), atol=1e-14)
    assert full.lipschitz_bound == pytest.approx(1 / (dl * R), rel=1e-12)
    assert full.eta_radial(0.5) == 1.0 and full.eta_radial(1.0) == 0.0
    half = build_cutoff(np.r_[np.zeros(32, bool), np.ones(32, bool)], R, dl)
    assert half.lipschitz_bound == pytest.approx(2 / (dl * R), rel=1e-12)
    assert np.all(half.eta_radial(np.linspace(0.5, 0.75, 20)) == 1.0)
    assert all(half.invariants().values())
    with pytest.raises(ValueError, match=r"\|U\| = 0"):
        build_cutoff(np.zeros(16, bool), R, dl)


def test_eta_grad_matches_finite_difference():
    rng = np.random.default_rng(2)
    eta = cutoff_for([random_trig_field(2, 2, rng)], (0.1, 0), 1.0, 0.5, 2.0, n_shells=64)
    X = rng.uniform(-1, 1, (200, 2))
    hh = 1e-7
    fd = np.stack([(eta.eta(X + hh * e) - eta.eta(X - hh * e)) / (2 * hh) for e in np.eye(2)], -1)
    # skip points within hh of a shell edge
    r = np.linalg.norm(X - eta.center, axis=1)
    ok = np.min(np.abs(r[:, None] - eta.edges[None]), axis=1) > 1e-5
    np.testing.assert_allclose(eta.eta_grad(X)[ok], fd[ok], atol=1e-6)


def test_product_bound_zero_and_exponent_errors():
    eta = build_cutoff(np.ones(32, bool), 1.0, 0.5)
    rep = verify_product_bound(eta, [ZeroField(2)], 2.0, math.inf)
    assert rep.C_measured == 0.0 and rep.lhs[0] == 0.0
    with pytest.raises(ValueError, match="admissible"):
        verify_product_bound(eta, [ZeroField(2)], 2.0, 4.0)
    assert product_exponents_ok(1.5, 6, 3) and not product_exponents_ok(1.5, 6.5, 3)
    assert product_exponents_ok(2, 4, 3) and not product_exponents_ok(2, math.inf, 3)
    assert product_exponents_ok(2, math.inf, 2) and not product_exponents_ok(2, 5, 2)


def test_product_bound_stable_d2_qinf():
    rng = np.random.default_rng(1)
    us = [random_trig_field(2, 2, rng) for _ in range(3)]
    Cs = []
    for dl in (0.5, 0.25, 0.125):
        eta = cutoff_for(us, (0, 0), 1.3, dl, 2.0, n_shells=64)
        Cs.append(verify_product_bound(eta, us, 2.0, math.inf).C_measured)
        # invariance under scalar multiples
        C2 = verify_product_bound(eta, [-3.7 * u for u in us], 2.0, math.inf).C_measured
        assert C2 == pytest.approx(Cs[-1], rel=1e-12)
    assert max(Cs) / min(Cs) <= 2.0


def test_shell_errors():
    with pytest.raises(ValueError):
        shell_integrals([], (0, 0), 1.0, 0.5, 2.0)
    with pytest.raises(ValueError):
        shell_integrals([ZeroField(2)], (0, 0), 1.0, 0.7, 2.0)
    with pytest.raises(ValueError):
        shell_integrals([ZeroField(2)], (0, 0), 1.0, 0.5, 2.0, n_shells=4)
