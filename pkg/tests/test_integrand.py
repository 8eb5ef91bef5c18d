import math

import numpy as np
import pytest

from lavrentiev.domain import Ball
from lavrentiev.fields import AffineField, ZeroField
from lavrentiev.integrand import (CATALOG, ConstraintSet, GrowthMeta, Integrand, add_constraint, check_assumptions,
                                  check_convexity_slices, check_interior_continuity, check_lower_growth,
                                  check_stability, check_upper_growth, exp_double_phase_constants, integrand_from_json,
                                  make_aniso_exp, make_double_phase, make_exp_double_phase, make_power,
                                  omega_envelope, near_alpha_M)

DISK = Ball((0.0, 0.0), 1.0)
X1P = {"kind": "x1_plus"}


def test_double_phase_conditions():
    W = make_double_phase(2, 2.4, alpha=1, d=2, a_spec=X1P)
    assert W.params["condition_stability"]
    W4 = make_double_phase(2, 6, alpha=1, d=4, a_spec=X1P)
    assert W4.params["condition_upper_growth"]
    assert 1 / 2 - 1 / 3 == pytest.approx(1 / 6, abs=1e-15)


def test_double_phase_rejects_negative_coefficient():
    with pytest.raises(ValueError, match="negative"):
        make_double_phase(2, 3, a_fn=lambda X: X[:, 0], d=2)


def test_zero_coefficient_is_power():
    W = make_double_phase(2, 2.5, a_spec={"kind": "zero"})
    X = np.zeros((3, 2))
    Xi = np.random.default_rng(0).normal(size=(3, 1, 2))
    np.testing.assert_allclose(W(X, Xi), np.sum(Xi ** 2, axis=(1, 2)))
    for rep in (check_lower_growth(W, DISK), check_upper_growth(W, DISK),
                check_convexity_slices(W, X[:1])):
        assert rep.passed


def test_exp_double_phase_constants():
    x_star, slope, C_star = exp_double_phase_constants(0.5)
    assert x_star == pytest.approx(4.0, abs=1e-14)
    assert slope == pytest.approx(math.e ** 2 / 4, rel=1e-14)
    assert C_star == pytest.approx(math.e ** 2, rel=1e-14)
    # tangency: the line through 0 meets exp(r^q) with equal slope at x_*
    q = 0.5
    assert slope * x_star == pytest.approx(math.exp(x_star ** q), rel=1e-14)
    assert slope == pytest.approx(math.exp(x_star ** q) * q * x_star ** (q - 1), rel=1e-14)


def test_exp_double_phase_parameter_errors():
    make_exp_double_phase(2, 0.5, 3, d=2)
    with pytest.raises(ValueError, match="alpha > dq"):
        make_exp_double_phase(2, 0.5, 1.0, d=2)
    with pytest.raises(ValueError, match="p > d-1"):
        make_exp_double_phase(1.0, 0.5, 3, d=2)
    with pytest.raises(ValueError, match=r"q <= \(d-1\)/d"):
        make_exp_double_phase(2, 0.7, 3, d=2)


def test_sandwich_on_grid():
    W = make_exp_double_phase(2, 0.5, 3)
    G = W.nonconvex
    C = W.params["C_star"]
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, (5000, 2))
    Xi = rng.normal(size=(5000, 1, 2)) * rng.uniform(0, 10, (5000, 1, 1))
    w, g = W(X, Xi), G(X, Xi)
    assert np.all(w <= g) and np.all(g <= w + C)


def test_aniso_exp_examples():
    A = make_aniso_exp(1.0, 2.0)
    X = np.zeros((1, 2))
    assert A(X, np.zeros((1, 1, 2)))[0] == 1.0
    assert math.isinf(A(X, np.array([[[-1.0, 0.0]]]))[0])
    assert check_convexity_slices(A, np.array([[0.2, 0.1]]), radius=0.9).passed


def test_constraint():
    W = add_constraint(make_power(2), ConstraintSet("ball", {"radius": 1.0}))
    X = np.zeros((2, 2))
    Xi = np.array([[[0.5, 0.0]], [[1.5, 0.0]]])
    v = W(X, Xi)
    assert v[0] == 0.25 and math.isinf(v[1])
    with pytest.raises(ValueError, match="interior"):
        ConstraintSet("ball", {"radius": 0.0})
    with pytest.raises(ValueError, match="interior"):
        ConstraintSet("box", {"lo": [0.0, -1.0], "hi": [1.0, 1.0]})


def test_constraint_biconjugate_straddling_boundary():
    from lavrentiev.convex_transform import SampledFunctionND, biconjugate
    W = add_constraint(make_power(2), ConstraintSet("ball", {"radius": 1.0}))
    ax = np.linspace(-1.5, 1.5, 31)
    M = np.meshgrid(ax, ax, indexing="ij")
    Xi = np.stack([m.ravel() for m in M], -1).reshape(-1, 1, 2)
    vals = W(np.zeros((len(Xi), 2)), Xi).reshape(31, 31)
    fb = biconjugate(SampledFunctionND((ax, ax), vals))
    inside = np.isfinite(vals)
    assert np.all(fb.values[inside] <= vals[inside] + 1e-12)
    assert np.all(fb.values[inside] >= vals[inside] - 1e-9)


def test_lower_growth_failure_has_witness():
    base = make_power(2)
    broken = Integrand(lambda X, Xi: 0.5 * base(X, Xi), 2, 1, GrowthMeta(2, 3, 1.0), "half")
    rep = check_lower_growth(broken, DISK)
    assert not rep.passed and rep.witness is not None
    assert check_lower_growth(make_exp_double_phase(2, 0.5, 3), DISK).passed
    assert check_lower_growth(make_double_phase(2, 2.4, a_spec=X1P), DISK).passed


def test_upper_growth_branches():
    B4 = Ball(np.zeros(4), 1.0)
    ok = check_upper_growth(make_double_phase(2, 6, alpha=1, d=4, a_spec={"kind": "zero"}), B4, sample_budget=400)
    assert ok.passed and ok.details["q_bound"] == pytest.approx(6.0)
    bad = check_upper_growth(make_double_phase(2, 6.5, alpha=1, d=4, a_spec={"kind": "zero"}), B4, sample_budget=400)
    assert not bad.passed and "p <= d-1" in bad.details["reason"]
    A3 = make_aniso_exp(1.0, 2.0, p=3)
    rep = check_upper_growth(A3, DISK)
    assert rep.passed and rep.details["branch"] == "local_sup"


def test_omega_envelope_properties():
    W = make_double_phase(2, 2.4, alpha=1, a_spec=X1P)
    ax = np.linspace(-3, 3, 25)
    x = np.array([0.3, 0.1])
    om = omega_envelope(W, x, 0.1, [ax, ax], DISK)
    M = np.meshgrid(ax, ax, indexing="ij")
    Xi = np.stack([m.ravel() for m in M], -1).reshape(-1, 1, 2)
    direct = W(np.tile([[0.2, 0.1]], (len(Xi), 1)), Xi)
    assert np.max(np.abs(om.values.ravel() - direct)) <= 1e-9
    om_small = omega_envelope(W, x, 0.05, [ax, ax], DISK)
    assert np.all(om_small.values >= om.values - 1e-9)
    W0 = make_power(2)
    om0 = omega_envelope(W0, x, 0.1, [ax, ax], DISK)
    assert np.max(np.abs(om0.values.ravel() - W0(np.zeros((len(Xi), 2)), Xi))) <= 1e-9


def test_omega_envelope_exp_double_phase_far_region():
    W = make_exp_double_phase(2, 0.5, 3)
    dl = 1e-3
    x1 = 0.6
    assert x1 > 2 * dl ** 0.25
    ax = np.linspace(-20, 20, 41)
    om = omega_envelope(W, np.array([x1, 0.0]), dl, [ax, ax], DISK)
    M = np.meshgrid(ax, ax, indexing="ij")
    Xi = np.stack([m.ravel() for m in M], -1).reshape(-1, 1, 2)
    ref = W(np.tile([[x1 - dl, 0.0]], (len(Xi), 1)), Xi)
    assert np.all(om.values.ravel() >= ref * (1 - 1e-12))


def test_omega_envelope_errors():
    W = make_power(2)
    ax = np.linspace(-1, 1, 5)
    with pytest.raises(ValueError, match="does not intersect"):
        omega_envelope(W, np.array([5.0, 5.0]), 0.1, [ax, ax], DISK)


def test_stability_double_phase_uniform():
    W = make_double_phase(2, 2.4, alpha=1, a_spec=X1P)
    for M in (2.0, 8.0):
        rep = check_stability(W, DISK, M=M)
        assert rep.passed and rep.fitted_C_M >= 1
        assert max(rep.per_delta_ratio) <= 2 * min(rep.per_delta_ratio)


def test_stability_x_independent():
    rep = check_stability(make_power(2), DISK, M=2.0, n_x=8)
    assert rep.passed and rep.fitted_C_M == pytest.approx(1.0, abs=1e-9)
    assert rep.fitted_alpha_M_sup <= 1e-9


def test_stability_exp_double_phase_far_constant():
    W = make_exp_double_phase(2, 0.5, 3)
    rep = check_stability(W, DISK, M=8.0, region="far")
    assert rep.passed and rep.fitted_C_M <= math.exp(1 / 4) + 1e-6


def test_near_alpha_M_values():
    # log of the near-region supremum for (d, p, q, alpha) = (2, 2, 1/2, 3)
    logv8, d8 = near_alpha_M(8, 2, 0.5, 3, 2)
    logv2, _ = near_alpha_M(2, 2, 0.5, 3, 2)
    assert math.isfinite(logv8) and math.isfinite(logv2)
    # oracle: stationary point of -2^-a s^(-a/(a+1)) + M^q s^(-dq/p), solved by bisection
    import scipy.optimize as so

    def dexpo(ls, M):
        s = math.exp(ls)
        return (2 ** -3 * 0.75 * s ** -0.75 - M ** 0.5 * 0.5 * s ** -0.5)

    ls = so.brentq(lambda t: dexpo(t, 8), math.log(1e-12), math.log(0.5))
    s = math.exp(ls)
    ref = -2 ** -3 * s ** -0.75 + 8 ** 0.5 * s ** -0.5
    assert logv8 == pytest.approx(ref, rel=1e-8)
    assert d8 == pytest.approx(s, rel=1e-3)


def test_interior_continuity():
    A = make_aniso_exp(1.0, 2.0)
    ok = check_interior_continuity(A, AffineField([[0.3, 0.2]]), 1.25, DISK)
    assert ok.passed
    bad = check_interior_continuity(A, AffineField([[-1.0, 0.0]]), 1.25, DISK)
    assert not bad.passed and "infinite" in bad.details["reason"]
    z = check_interior_continuity(A, ZeroField(2), 1.25, DISK)
    assert z.passed


def test_catalog_and_json():
    assert {"double_phase", "exp_double_phase", "aniso_exp"} <= set(CATALOG)
    assert any("α > dq/(p−dq)" in c for c in CATALOG["exp_double_phase"]["constraints"])
    W = integrand_from_json({"label": "double_phase", "params": {"p": 2, "q": 2.4, "a": X1P}})
    assert W.label == "double_phase"
    with pytest.raises(KeyError):
        integrand_from_json({"label": "nope"})
    Wc = integrand_from_json({"label": "aniso_exp", "params": {"coeffs": 1.0, "exponents": 2.0},
                              "constraint": {"kind": "ball", "radius": 2.0}})
    assert math.isinf(Wc(np.zeros((1, 2)), np.array([[[0.0, 3.0]]]))[0])


def test_check_assumptions_exp_double_phase():
    rep = check_assumptions(make_exp_double_phase(2, 0.5, 3), DISK)
    assert rep["passed"]
    assert all(C <= math.exp(0.25) + 1e-6 for C in rep["fitted_C_M"].values())


def test_stability_detects_violating_double_phase():
    # q/p = 2 > 1 + alpha/d: near the zero set of a the ratio grows like 1 + M^(q-p) delta^(alpha - d(q-p)/p)
    W = make_double_phase(1.5, 3.0, alpha=1, a_spec=X1P)
    rep = check_stability(W, DISK, M=2.0)
    assert not rep.passed and rep.worst_ratio_witness is not None
    ratios = rep.per_delta_ratio
    assert all(b > a for a, b in zip(ratios, ratios[1:]))
    oracle = 1 + 2.0 ** 1.5 * (2.0 ** -9) ** (1 - 2 * 1.5 / 1.5)
    assert ratios[-1] == pytest.approx(oracle, rel=0.05)
