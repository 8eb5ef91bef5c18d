import math

import numpy as np
import pytest

from lavrentiev.domain import (Annulus, Ball, InteriorBall, LipschitzChart, Polygon, RadialDomain, StarChart,
                               build_covering, check_strongly_star_shaped, domain_from_json, grid_weights,
                               inverse_scaling_map, scaling_map, support_margin)
from lavrentiev.fields import TensorGrid

DISK = Ball((0.0, 0.0), 1.0)


def weights(dom, h, pad):
    g = TensorGrid.covering(*dom.bbox(), h, pad=pad)
    return g, grid_weights(dom, g)


@pytest.mark.parametrize("dom,area", [
    (DISK, math.pi),
    (Polygon.square(), 4.0),
    (Annulus(), math.pi * 0.75),
])
def test_grid_weights_exact_area(dom, area):
    _, w = weights(dom, 0.07, 0.1)
    assert w.sum() == pytest.approx(area, abs=1e-12)
    assert w.min() >= -1e-15


def test_grid_weights_star_polygon_and_moment():
    st = Polygon.star()
    _, w = weights(st, 0.05, 0.1)
    assert w.sum() == pytest.approx(st.volume(), abs=1e-12)
    errs = []
    for h in (0.1, 0.05, 0.025):
        g, w = weights(DISK, h, h)
        errs.append(abs(np.sum(w * g.points()[:, 0] ** 2) - math.pi / 4))
    assert errs[-1] < errs[0] / 4


def test_disk_covering_invariants():
    cov = build_covering(DISK)
    charts = list(cov.lipschitz_charts())
    assert charts
    for c in charts:
        assert c.invariant_violations() == []
        assert c.description_mismatch(DISK) <= 0.01
        assert c.kappa < 0
    assert cov.c0() > 0
    X = np.random.default_rng(0).uniform(-1, 1, (4000, 2))
    X = X[DISK.contains(X)]
    P = cov.partition(X)
    assert np.max(np.abs(P.sum(1) - 1)) <= 1e-12


def test_square_covering_has_all_boundary_charts():
    cov = build_covering(Polygon.square())
    labels = [c.label for c in cov.charts]
    assert sum(l.startswith("vertex") for l in labels) == 4
    assert all(c.invariant_violations() == [] for c in cov.lipschitz_charts())


def test_scaling_map_roundtrip():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 2))
    z = np.array([0.2, -0.4])
    for rho in (0.5, 0.9, 0.999):
        np.testing.assert_allclose(inverse_scaling_map(z, rho, scaling_map(z, rho, X)), X, atol=1e-12)


def test_support_margin_scaling():
    cov = build_covering(DISK)
    c0 = cov.c0()
    inner = [c for c in cov.charts if isinstance(c, InteriorBall)]
    cap = min(float(-DISK.signed_distance(np.asarray(c.center)[None])[0]) - c.r for c in inner)
    for rho in (0.99, 0.95):
        assert support_margin(cov, rho) == pytest.approx(min(c0 * (1 / rho - 1), cap), rel=1e-12)
    assert support_margin(cov, 1.0) == 0.0
    with pytest.raises(ValueError):
        support_margin(cov, 0.0)


def test_star_shaped_reports():
    rd = RadialDomain(lambda a: 1 + 0.3 * np.cos(3 * a))
    assert check_strongly_star_shaped(rd).passed
    assert check_strongly_star_shaped(Polygon.star()).passed
    bad = check_strongly_star_shaped(Annulus(), center=(0.75, 0.0))
    assert not bad.passed and bad.witness is not None


def test_radial_domain_star_chart_margin():
    rd = RadialDomain(lambda a: 1 + 0.3 * np.cos(3 * a))
    cov = build_covering(rd)
    assert all(isinstance(c, StarChart) for c in cov.charts)
    m = support_margin(cov, 0.9)
    assert 0 < m < 0.2


def test_domain_json_roundtrip():
    for dom in (DISK, Annulus(), Polygon.square()):
        again = domain_from_json(dom.to_json())
        X = np.random.default_rng(0).uniform(-1.2, 1.2, (200, 2))
        np.testing.assert_array_equal(dom.contains(X), again.contains(X))
