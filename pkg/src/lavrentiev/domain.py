"""Geometry of the reference domain.

Domains (balls, simple polygons, annuli, star-shaped radial sets), nodal
quadrature weights on tensor grids, boundary charts written as Lipschitz
graphs over cylinders, finite coverings with scaling centers, and the
smooth partition seed subordinate to a covering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
import shapely
from shapely.geometry import Polygon as _ShPolygon, box as _sh_box
from shapely.geometry.polygon import orient as _sh_orient

from .fields import TensorGrid

__all__ = [
    "Domain",
    "Ball",
    "Annulus",
    "Polygon",
    "RadialDomain",
    "domain_from_json",
    "LipschitzChart",
    "InteriorBall",
    "StarChart",
    "Covering",
    "build_covering",
    "scaling_map",
    "inverse_scaling_map",
    "support_margin",
    "check_strongly_star_shaped",
    "bump",
    "grid_weights",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def bump(s: np.ndarray) -> np.ndarray:
    """``exp(-1/(1 - s^2))`` for ``|s| < 1``, else 0."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1.0
    out[m] = np.exp(-1.0 / (1.0 - s[m] ** 2))
    return out


def bump_derivative(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1.0
    sm = s[m]
    out[m] = np.exp(-1.0 / (1.0 - sm ** 2)) * (-2.0 * sm / (1.0 - sm ** 2) ** 2)
    return out


# --------------------------------------------------------------------------
# domains


class Domain:
    dim: int

    def contains(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def signed_distance(self, X: np.ndarray) -> np.ndarray:
        """Negative inside, positive outside."""
        raise NotImplementedError

    def bbox(self):
        raise NotImplementedError

    def boundary_samples(self, n: int) -> np.ndarray:
        raise NotImplementedError

    def diameter(self) -> float:
        lo, hi = self.bbox()
        return float(np.linalg.norm(np.asarray(hi) - np.asarray(lo)))

    def cell_moments(self, x0, x1, y0, y1) -> np.ndarray:
        """Integrals of ``1, s, t, st`` over ``cell ∩ Ω`` (``s, t`` local in [0,1])."""
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def signed_distance_grad(self, X: np.ndarray, eps: float = 1e-7) -> np.ndarray:
        g = np.empty_like(X, dtype=float)
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = eps
            g[:, k] = (self.signed_distance(X + e) - self.signed_distance(X - e)) / (2 * eps)
        return g


class Ball(Domain):
    """Open ball of radius ``radius`` (the unit disk by default)."""

    def __init__(self, center=(0.0, 0.0), radius: float = 1.0):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.dim = self.center.size

    def contains(self, X):
        return np.linalg.norm(np.atleast_2d(X) - self.center, axis=1) < self.radius

    def signed_distance(self, X):
        return np.linalg.norm(np.atleast_2d(X) - self.center, axis=1) - self.radius

    def signed_distance_grad(self, X, eps=None):
        D = np.atleast_2d(X) - self.center
        r = np.linalg.norm(D, axis=1)
        r = np.where(r == 0, 1.0, r)
        return D / r[:, None]

    def bbox(self):
        return self.center - self.radius, self.center + self.radius

    def volume(self) -> float:
        d = self.dim
        return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * self.radius ** d

    def boundary_samples(self, n):
        return self.center + self.radius * sphere_directions(self.dim, n)

    def cell_moments(self, x0, x1, y0, y1):
        return _disk_cell_moments(self.center, self.radius, x0, x1, y0, y1)

    def to_json(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}


class Annulus(Domain):
    def __init__(self, center=(0.0, 0.0), r_in: float = 0.5, r_out: float = 1.0):
        self.center = np.asarray(center, dtype=float)
        self.r_in, self.r_out = float(r_in), float(r_out)
        self.dim = self.center.size

    def contains(self, X):
        r = np.linalg.norm(np.atleast_2d(X) - self.center, axis=1)
        return (r > self.r_in) & (r < self.r_out)

    def signed_distance(self, X):
        r = np.linalg.norm(np.atleast_2d(X) - self.center, axis=1)
        return np.maximum(r - self.r_out, self.r_in - r)

    def bbox(self):
        return self.center - self.r_out, self.center + self.r_out

    def boundary_samples(self, n):
        d = sphere_directions(self.dim, n // 2)
        return np.vstack([self.center + self.r_out * d, self.center + self.r_in * d])

    def cell_moments(self, x0, x1, y0, y1):
        return (_disk_cell_moments(self.center, self.r_out, x0, x1, y0, y1)
                - _disk_cell_moments(self.center, self.r_in, x0, x1, y0, y1))

    def to_json(self):
        return {"type": "annulus", "center": self.center.tolist(),
                "r_in": self.r_in, "r_out": self.r_out}


class _ShapelyDomain(Domain):
    dim = 2
    _shape: _ShPolygon

    def contains(self, X):
        X = np.atleast_2d(X)
        return shapely.contains_xy(self._shape, X[:, 0], X[:, 1])

    def signed_distance(self, X):
        X = np.atleast_2d(X)
        pts = shapely.points(X[:, 0], X[:, 1])
        d = shapely.distance(self._shape.exterior, pts)
        inside = self.contains(X)
        return np.where(inside, -d, d)

    def bbox(self):
        b = self._shape.bounds
        return np.array(b[:2]), np.array(b[2:])

    def boundary_samples(self, n):
        ring = self._shape.exterior
        s = np.linspace(0, ring.length, n, endpoint=False)
        return np.array([ring.interpolate(si).coords[0] for si in s])

    def cell_moments(self, x0, x1, y0, y1):
        piece = self._shape.intersection(_sh_box(x0, y0, x1, y1))
        h1, h2 = x1 - x0, y1 - y0
        M = np.zeros(4)
        polys = getattr(piece, "geoms", [piece])
        for poly in polys:
            if poly.is_empty or poly.geom_type != "Polygon":
                continue
            poly = _sh_orient(poly, 1.0)
            for ring in [poly.exterior, *poly.interiors]:
                c = np.asarray(ring.coords)
                s = (c[:, 0] - x0) / h1
                t = (c[:, 1] - y0) / h2
                M += _ring_moments(s, t)
        return M * h1 * h2


def _ring_moments(x, y):
    x0, x1 = x[:-1], x[1:]
    y0, y1 = y[:-1], y[1:]
    c = x0 * y1 - x1 * y0
    A = c.sum() / 2
    Mx = ((x0 + x1) * c).sum() / 6
    My = ((y0 + y1) * c).sum() / 6
    Mxy = (c * (x0 * y1 + 2 * x0 * y0 + 2 * x1 * y1 + x1 * y0)).sum() / 24
    return np.array([A, Mx, My, Mxy])


class Polygon(_ShapelyDomain):
    """Simple polygon given by its vertices (any orientation)."""

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        poly = _sh_orient(_ShPolygon(v), 1.0)
        if not poly.is_valid:
            raise ValueError("polygon is not simple")
        self._shape = poly
        self.vertices = np.asarray(poly.exterior.coords)[:-1]

    @classmethod
    def square(cls, lo=-1.0, hi=1.0) -> "Polygon":
        return cls([(lo, lo), (hi, lo), (hi, hi), (lo, hi)])

    @classmethod
    def star(cls, n_points=5, r_outer=1.0, r_inner=0.45, center=(0.0, 0.0)) -> "Polygon":
        ang = np.pi / 2 + np.arange(2 * n_points) * np.pi / n_points
        rad = np.where(np.arange(2 * n_points) % 2 == 0, r_outer, r_inner)
        c = np.asarray(center, float)
        return cls(c + np.column_stack([rad * np.cos(ang), rad * np.sin(ang)]))

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self._shape.centroid.coords[0])

    def volume(self) -> float:
        return float(self._shape.area)

    def to_json(self):
        return {"type": "polygon", "vertices": self.vertices.tolist()}


class RadialDomain(_ShapelyDomain):
    """``{z + s nu : 0 <= s < r(nu)}`` in the plane.

    ``radius`` is either a callable of the polar angle or an array of radii
    sampled on equispaced angles (periodic linear interpolation).
    """

    def __init__(self, radius, center=(0.0, 0.0), n_poly: int = 4096):
        self.center = np.asarray(center, dtype=float)
        if callable(radius):
            self._r_fn = radius
            self._samples = None
        else:
            r = np.asarray(radius, dtype=float)
            if np.any(r <= 0):
                raise ValueError("radial function must be positive")
            self._samples = r
            ang = np.linspace(0, 2 * np.pi, r.size, endpoint=False)
            self._r_fn = lambda a: np.interp(np.mod(a, 2 * np.pi), np.append(ang, 2 * np.pi),
                                             np.append(r, r[0]))
        a = np.linspace(0, 2 * np.pi, n_poly, endpoint=False)
        ra = self.r_fn(a)
        self._shape = _sh_orient(_ShPolygon(self.center + np.column_stack([ra * np.cos(a), ra * np.sin(a)])), 1.0)

    def r_fn(self, angle):
        return np.asarray(self._r_fn(np.asarray(angle, dtype=float)), dtype=float)

    def r_of_direction(self, nu):
        nu = np.atleast_2d(nu)
        return self.r_fn(np.arctan2(nu[:, 1], nu[:, 0]))

    def contains(self, X):
        D = np.atleast_2d(X) - self.center
        return np.linalg.norm(D, axis=1) < self.r_fn(np.arctan2(D[:, 1], D[:, 0]))

    def to_json(self):
        ang = np.linspace(0, 2 * np.pi, 256, endpoint=False)
        r = self._samples if self._samples is not None else self.r_fn(ang)
        return {"type": "radial", "center": self.center.tolist(), "radii": np.asarray(r).tolist()}


def domain_from_json(spec: dict) -> Domain:
    kind = spec.get("type")
    if kind in ("disk", "ball"):
        c = spec.get("center", [0.0, 0.0])
        return Ball(c, spec.get("radius", 1.0))
    if kind == "annulus":
        return Annulus(spec.get("center", [0.0, 0.0]), spec["r_in"], spec["r_out"])
    if kind == "polygon":
        return Polygon(spec["vertices"])
    if kind == "square":
        return Polygon.square(spec.get("lo", -1.0), spec.get("hi", 1.0))
    if kind == "radial":
        return RadialDomain(np.asarray(spec["radii"], float), spec.get("center", [0.0, 0.0]))
    raise ValueError(f"unknown domain type {kind!r}")


def sphere_directions(d: int, n: int) -> np.ndarray:
    """Deterministic, nearly uniform unit vectors (circle or Fibonacci sphere)."""
    if d == 1:
        return np.array([[-1.0], [1.0]])
    if d == 2:
        a = 2 * np.pi * np.arange(n) / n
        return np.column_stack([np.cos(a), np.sin(a)])
    if d == 3:
        i = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * i / n)
        th = np.pi * (1 + 5 ** 0.5) * i
        return np.column_stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)])
    raise ValueError("geometry kernels are limited to d <= 3")


def _disk_cell_moments(center, R, x0, x1, y0, y1):
    """Exact (to quadrature rounding) bilinear moments of a rectangle ∩ disk."""
    cx, cy = center
    hx, hy = x1 - x0, y1 - y0
    a, b = max(x0, cx - R), min(x1, cx + R)
    if b <= a:
        return np.zeros(4)
    br = {a, b}
    for yv in (y0, y1):
        dy = yv - cy
        if abs(dy) < R:
            w = math.sqrt(R * R - dy * dy)
            for xv in (cx - w, cx + w):
                if a < xv < b:
                    br.add(xv)
    br = sorted(br)
    M = np.zeros(4)
    for p, q in zip(br[:-1], br[1:]):
        if q - p <= 0:
            continue
        # substitute x = cx + R sin(theta): integrand is smooth in theta
        tp = math.asin(max(-1.0, min(1.0, (p - cx) / R)))
        tq = math.asin(max(-1.0, min(1.0, (q - cx) / R)))
        th = 0.5 * (tq - tp) * _GL_X + 0.5 * (tq + tp)
        wts = 0.5 * (tq - tp) * _GL_W * R * np.cos(th)
        x = cx + R * np.sin(th)
        c = R * np.cos(th)
        hi = np.minimum(y1, cy + c)
        lo = np.maximum(y0, cy - c)
        ln = np.maximum(hi - lo, 0.0)
        s = (x - x0) / hx
        t_hi = (hi - y0) / hy
        t_lo = (lo - y0) / hy
        ln_t = ln / hy
        m1 = 0.5 * (t_hi ** 2 - t_lo ** 2) * (ln > 0)
        M += np.array([
            np.sum(wts * ln_t), np.sum(wts * s * ln_t), np.sum(wts * m1), np.sum(wts * s * m1),
        ])
    return M * hy  # dx dy = (hy dt) dx; the dx scale is in the weights


def grid_weights(domain: Domain, grid: TensorGrid, subsample: int = 6) -> np.ndarray:
    """Nodal quadrature weights for integrals over ``Ω``.

    In 2D the weights integrate the bilinear interpolant exactly on every
    cell ∩ Ω (cut cells via exact moments). In 3D cut cells are resolved by
    midpoint subsampling.
    """
    h = grid.h
    shape = grid.shape
    d = grid.dim
    axes = grid.axes
    w = np.zeros(shape)
    cells = [a[:-1] + h / 2 for a in axes]
    C = np.stack(np.meshgrid(*cells, indexing="ij"), -1).reshape(-1, d)
    sd = domain.signed_distance(C)
    half_diag = 0.5 * h * math.sqrt(d) * (1 + 1e-9)
    full = sd < -half_diag
    cut = np.abs(sd) <= half_diag
    cshape = tuple(s - 1 for s in shape)
    full = full.reshape(cshape)
    cut_idx = np.argwhere(cut.reshape(cshape))
    corner = h ** d / 2 ** d
    for off in np.ndindex(*(2,) * d):
        sl = tuple(slice(o, o + s) for o, s in zip(off, cshape))
        w[sl] += corner * full
    if d == 2:
        for i, j in cut_idx:
            x0, y0 = axes[0][i], axes[1][j]
            A, Ms, Mt, Mst = domain.cell_moments(x0, x0 + h, y0, y0 + h)
            w[i, j] += A - Ms - Mt + Mst
            w[i + 1, j] += Ms - Mst
            w[i, j + 1] += Mt - Mst
            w[i + 1, j + 1] += Mst
    else:
        u = (np.arange(subsample) + 0.5) / subsample
        U = np.stack(np.meshgrid(*([u] * d), indexing="ij"), -1).reshape(-1, d)
        dv = h ** d / len(U)
        for idx in cut_idx:
            base = np.array([axes[k][idx[k]] for k in range(d)])
            P = base + h * U
            ins = domain.contains(P)
            if not ins.any():
                continue
            Ui = U[ins]
            for off in np.ndindex(*(2,) * d):
                o = np.asarray(off)
                basis = np.prod(np.where(o == 1, Ui, 1 - Ui), axis=1)
                w[tuple(idx + o)] += dv * basis.sum()
    return w.ravel()


# --------------------------------------------------------------------------
# charts and coverings


def _frame(normal: np.ndarray) -> np.ndarray:
    """Orthonormal frame with the last column equal to ``normal``."""
    n = normal / np.linalg.norm(normal)
    d = n.size
    if d == 2:
        return np.column_stack([[-n[1], n[0]], n])
    M = np.eye(d)
    M[:, 0] = n
    Q, _ = np.linalg.qr(M)
    if Q[:, 0] @ n < 0:
        Q = -Q
    return np.column_stack([Q[:, 1:], Q[:, 0]])


@dataclass
class LipschitzChart:
    """Boundary chart ``Ω ∩ C = {y_d < psi(y')}`` in rotated coordinates.

    Local coordinates are ``y = frame.T @ (x - center)``; the cylinder is
    ``C = B^{d-1}_{r_prime}(0) x (-h, h)`` and the scaling center sits at the
    bottom ``(0, -h)``.
    """

    center: np.ndarray
    frame: np.ndarray
    r_prime: float
    h: float
    psi: Callable
    L: float
    r: float
    label: str = ""
    psi_inf: float = field(init=False)
    psi_sup: float = field(init=False)

    def __post_init__(self):
        self.center = np.asarray(self.center, float)
        yp = self._base_samples()
        vals = self.psi(yp)
        self.psi_inf = float(vals.min())
        self.psi_sup = float(vals.max())

    def _base_samples(self, n: int = 801) -> np.ndarray:
        d = self.center.size
        if d == 2:
            return np.linspace(-self.r_prime, self.r_prime, n)[:, None]
        dirs = sphere_directions(d - 1, 64) if d - 1 >= 2 else np.array([[-1.0], [1.0]])
        rad = np.linspace(0, self.r_prime, 41)
        return (rad[:, None, None] * dirs[None]).reshape(-1, d - 1)

    @property
    def z(self) -> np.ndarray:
        return self.to_global(np.r_[np.zeros(self.center.size - 1), -self.h][None])[0]

    @property
    def kappa(self) -> float:
        return -self.h - self.psi_inf

    def to_local(self, X):
        return (np.atleast_2d(X) - self.center) @ self.frame

    def to_global(self, Y):
        return np.atleast_2d(Y) @ self.frame.T + self.center

    def in_cylinder(self, X):
        Y = self.to_local(X)
        return (np.linalg.norm(Y[:, :-1], axis=1) < self.r_prime) & (np.abs(Y[:, -1]) < self.h)

    def dist_to_cylinder_boundary(self, X):
        Y = self.to_local(X)
        return np.minimum(self.r_prime - np.linalg.norm(Y[:, :-1], axis=1), self.h - np.abs(Y[:, -1]))

    def invariant_violations(self) -> List[str]:
        out = []
        if not (-self.h < self.psi_inf and self.psi_sup < self.h):
            out.append("graph range is not compactly inside (-h, h)")
        if not 2 * self.L * self.r <= self.h + self.psi_inf + 1e-14:
            out.append("2 L r <= h + inf psi fails")
        if not self.kappa < 0:
            out.append("kappa must be negative")
        if not self.r < min(self.r_prime, self.h):
            out.append("chart ball does not fit in the cylinder")
        return out

    def description_mismatch(self, domain: Domain, n: int = 4000, seed: int = 0) -> float:
        """Fraction of cylinder samples where ``Ω`` and the graph description disagree."""
        rng = np.random.default_rng(seed)
        d = self.center.size
        Y = rng.uniform(-1, 1, size=(n, d))
        Y[:, :-1] *= self.r_prime / math.sqrt(max(d - 1, 1))
        Y[:, -1] *= self.h
        X = self.to_global(Y)
        graph = Y[:, -1] < self.psi(Y[:, :-1])
        return float(np.mean(graph != domain.contains(X)))

    def to_json(self):
        return {"kind": "lipschitz", "label": self.label, "center": self.center.tolist(),
                "frame": self.frame.tolist(), "r_prime": self.r_prime, "h": self.h,
                "L": self.L, "r": self.r, "z": self.z.tolist(), "kappa": self.kappa}


@dataclass
class InteriorBall:
    center: np.ndarray
    r: float
    label: str = ""

    @property
    def z(self):
        return np.asarray(self.center, float)

    def to_json(self):
        return {"kind": "interior", "label": self.label, "center": np.asarray(self.center).tolist(), "r": self.r}


@dataclass
class StarChart:
    """Star chart ``U = G ∩ Ω`` with scaling center ``z``; ``G`` is the ball ``B_r(center)``."""

    center: np.ndarray
    r: float
    z: np.ndarray
    domain: Domain
    label: str = ""

    def margin(self, lam: float, n: int = 2048) -> float:
        """``dist((z + lam (Ω - z)) ∩ U, ∂Ω)`` from boundary samples."""
        B = self.domain.boundary_samples(n)
        inside_G = np.linalg.norm(B - self.center, axis=1) < self.r
        P = self.z + lam * (B[inside_G] - self.z)
        return float(np.min(-self.domain.signed_distance(P)))

    def to_json(self):
        return {"kind": "star", "label": self.label, "center": np.asarray(self.center).tolist(),
                "r": self.r, "z": np.asarray(self.z).tolist()}


@dataclass
class Covering:
    """Finite covering of ``closure(Ω)`` plus the smooth partition seed.

    ``seed_radius[i]`` is the support radius of the bump attached to chart
    ``i``; it stays below ``(1 - delta0) r_i``. ``phi_0`` vanishes where
    ``signed_distance <= s0``.
    """

    domain: Domain
    charts: list
    delta0: float
    s0: float
    seed_radius: np.ndarray
    theta_margin: float

    @property
    def size(self) -> int:
        return len(self.charts)

    def centers(self) -> np.ndarray:
        return np.array([np.asarray(c.center, float) for c in self.charts])

    def radii(self) -> np.ndarray:
        return np.array([c.r for c in self.charts])

    def _raw(self, X):
        X = np.atleast_2d(X)
        C = self.centers()
        D = X[:, None, :] - C[None]
        s = np.linalg.norm(D, axis=2) / self.seed_radius[None]
        b = bump(s)
        sd = self.domain.signed_distance(X)
        b0 = bump(np.maximum(0.0, 1.0 - (sd - self.s0) / self.s0)) * (sd > self.s0) / bump(np.array(0.0))
        b0 = np.where(sd >= 2 * self.s0, 1.0, b0)
        return b0, b

    def partition(self, X) -> np.ndarray:
        """``(n, N + 1)`` values of ``phi_0, ..., phi_N``."""
        b0, b = self._raw(X)
        tot = b0 + b.sum(axis=1)
        return np.column_stack([b0, b]) / tot[:, None]

    def phi0(self, X):
        """``phi_0`` and its gradient (exactly zero on ``{sd <= s0}``)."""
        X = np.atleast_2d(X)
        P = self.partition(X)
        p0 = P[:, 0]
        g = np.zeros_like(X, dtype=float)
        act = p0 > 0
        if act.any():
            eps = 1e-6
            for k in range(X.shape[1]):
                e = np.zeros(X.shape[1])
                e[k] = eps
                g[act, k] = (self.partition(X[act] + e)[:, 0] - self.partition(X[act] - e)[:, 0]) / (2 * eps)
        return p0, g

    def c0(self) -> float:
        vals = [abs(c.kappa) / (4 * (c.L + 2)) for c in self.charts if isinstance(c, LipschitzChart)]
        return min(vals) if vals else math.inf

    def lipschitz_charts(self):
        return [c for c in self.charts if isinstance(c, LipschitzChart)]

    def to_json(self):
        return {"domain": self.domain.to_json(), "delta0": self.delta0, "s0": self.s0,
                "theta_margin": self.theta_margin, "seed_radius": self.seed_radius.tolist(),
                "charts": [c.to_json() for c in self.charts]}


def _best_chart_shape(inf_psi_fn, L_fn, size: float):
    """Pick (r', h, r) with r'^2 + h^2 <= size^2 maximizing the chart radius."""
    best = None
    for ang in np.linspace(0.05, 1.5, 300):
        rp, h = size * math.cos(ang), size * math.sin(ang)
        L = L_fn(rp)
        inf_psi = inf_psi_fn(rp)
        if not (-h < inf_psi):
            continue
        lim = (h + inf_psi) / (2 * L) if L > 0 else math.inf
        r = min(0.98 * min(rp, h), lim)
        if r > 0 and (best is None or r > best[2]):
            best = (rp, h, r)
    if best is None:
        raise ValueError("no admissible chart shape")
    return best


def _ball_charts(domain: Ball, n: int, rp_frac: float = 0.55, h_frac: float = 0.9):
    R = domain.radius
    rp = rp_frac * R
    h = h_frac * R
    L = rp / math.sqrt(R * R - rp * rp)
    inf_psi = math.sqrt(R * R - rp * rp) - R
    r = min(0.98 * min(rp, h), (h + inf_psi) / (2 * L))
    charts = []
    for k, nrm in enumerate(sphere_directions(domain.dim, n)):
        center = domain.center + R * nrm
        psi = (lambda Y, R=R: np.sqrt(np.maximum(R * R - np.sum(np.atleast_2d(Y) ** 2, axis=1), 0.0)) - R)
        charts.append(LipschitzChart(center, _frame(nrm), rp, h, psi, L, r, label=f"boundary-{k}"))
    return charts


def _polygon_charts(domain: Polygon, cover: float):
    V = domain.vertices
    nv = len(V)
    edges = [(V[i], V[(i + 1) % nv]) for i in range(nv)]

    def dist_point_edges(p, skip):
        ds = []
        for j, (a, b) in enumerate(edges):
            if j in skip:
                continue
            ab = b - a
            t = np.clip((p - a) @ ab / (ab @ ab), 0, 1)
            ds.append(np.linalg.norm(p - (a + t * ab)))
        return min(ds) if ds else math.inf

    charts = []
    vert_extent = np.zeros(nv)
    for i in range(nv):
        v, vp, vn = V[i], V[i - 1], V[(i + 1) % nv]
        u1 = (vp - v) / np.linalg.norm(vp - v)
        u2 = (vn - v) / np.linalg.norm(vn - v)
        cross = u2[0] * u1[1] - u2[1] * u1[0]
        beta = math.atan2(cross, u1 @ u2) % (2 * math.pi)  # interior angle (CCW polygon)
        if abs(beta - math.pi) < 1e-9:
            continue
        bis = u1 + u2
        bis = bis / np.linalg.norm(bis)
        n_out = -bis if beta < math.pi else bis
        cot = 1.0 / math.tan(beta / 2)
        L = abs(cot)
        size = 0.45 * min(dist_point_edges(v, {i - 1 if i > 0 else nv - 1, i}),
                          np.linalg.norm(vp - v), np.linalg.norm(vn - v))
        rp, h, r = _best_chart_shape(lambda rp: min(0.0, -rp * cot), lambda rp: L, size)
        psi = (lambda Y, c=cot: -np.abs(np.atleast_2d(Y)[:, 0]) * c)
        charts.append(LipschitzChart(v, _frame(n_out), rp, h, psi, L, r, label=f"vertex-{i}"))
        vert_extent[i] = r
    for i, (a, b) in enumerate(edges):
        ab = b - a
        length = np.linalg.norm(ab)
        tdir = ab / length
        n_out = np.array([tdir[1], -tdir[0]])  # CCW polygon: interior on the left

        def chart_radius(s):
            p = a + s * tdir
            rp = min(0.95 * min(s, length - s), 0.95 * dist_point_edges(p, {i}) / math.sqrt(2))
            return p, rp, 0.98 * rp

        # walk along the edge between the two corner charts, placing flat
        # charts so that consecutive seed supports overlap
        cur = cover * vert_extent[i] * 0.8
        stop = length - cover * vert_extent[(i + 1) % nv] * 0.8
        j = 0
        while cur < stop and j < 10000:
            s = cur
            for _ in range(20):
                s = min(cur + 0.7 * cover * chart_radius(s)[2], 0.5 * (cur + length))
            p, rp, r = chart_radius(s)
            if r <= 1e-6 * length:
                raise ValueError("edge charts degenerate; polygon too thin")
            psi = (lambda Y: np.zeros(len(np.atleast_2d(Y))))
            charts.append(LipschitzChart(p, _frame(n_out), rp, rp, psi, 0.0, r, label=f"edge-{i}-{j}"))
            cur = s + 0.7 * cover * r
            j += 1
    return charts


def _coverage_samples(domain: Domain, s0: float, n_per_axis: int):
    lo, hi = domain.bbox()
    pad = 2 * s0
    axes = [np.linspace(l - pad, u + pad, n_per_axis) for l, u in zip(lo, hi)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, domain.dim)
    X = np.vstack([X, domain.boundary_samples(4 * n_per_axis)])
    return X[domain.signed_distance(X) <= s0]


def build_covering(domain: Domain, target_chart_count: int = 8, delta0: float = 0.2,
                   seed_fraction: float = 0.98, s0: Optional[float] = None,
                   extra_interior: Sequence = (), samples_per_axis: int = 81) -> Covering:
    """Finite covering of ``closure(Ω)`` by chart balls and interior balls.

    Boundary charts come first (balls: ``target_chart_count`` charts placed on
    the boundary, increased if the chart balls cannot cover it; polygons:
    one chart per corner plus flat charts along edges; radial domains: one
    star chart). Interior balls are then added greedily until every sample of
    ``{dist(., closure Ω) <= s0}`` lies well inside a partition seed support.
    """
    charts: list = []
    scale = domain.diameter()
    s0 = 0.01 * scale if s0 is None else s0
    shrink = (1 - delta0) * seed_fraction
    if isinstance(domain, Ball):
        n = max(2 if domain.dim == 1 else 3, int(target_chart_count))
        while True:
            charts = _ball_charts(domain, n)
            r = charts[0].r
            gap = domain.radius * (math.sin(math.pi / n) if domain.dim == 2 else 2.2 / math.sqrt(n))
            if shrink * r * 0.9 > gap or n > 512:
                break
            n += 1
    elif isinstance(domain, Polygon):
        charts = _polygon_charts(domain, shrink * 0.92)
    elif isinstance(domain, RadialDomain):
        rmax = float(np.max(np.linalg.norm(domain.boundary_samples(2048) - domain.center, axis=1)))
        R = 1.1 * (rmax + 2 * s0) / shrink
        charts = [StarChart(domain.center, R, domain.center, domain, label="star-0")]
    else:
        raise ValueError("unsupported domain for covering")
    for c in charts:
        if isinstance(c, LipschitzChart):
            bad = c.invariant_violations()
            if bad:
                raise ValueError(f"chart {c.label}: {'; '.join(bad)}")
            if c.description_mismatch(domain) > 0:
                raise ValueError(f"chart {c.label}: graph description does not match the domain")
    for p in extra_interior:
        p = np.asarray(p, float)
        dist = float(-domain.signed_distance(p[None])[0])
        charts.append(InteriorBall(p, 0.9 * dist, label=f"interior-{len(charts)}"))

    X = _coverage_samples(domain, s0, samples_per_axis)

    def covered(charts):
        C = np.array([np.asarray(c.center, float) for c in charts])
        rad = np.array([c.r for c in charts]) * shrink * 0.92
        return np.any(np.linalg.norm(X[:, None] - C[None], axis=2) < rad[None], axis=1)

    # interior candidates: lattice points with their largest admissible ball
    lo, hi = domain.bbox()
    cand_axes = [np.linspace(l, u, 25) for l, u in zip(lo, hi)]
    cand = np.stack(np.meshgrid(*cand_axes, indexing="ij"), -1).reshape(-1, domain.dim)
    cdist = -domain.signed_distance(cand)
    keep = cdist > 0.02 * scale
    cand, crad = cand[keep], 0.9 * cdist[keep]
    cov = covered(charts)
    while not cov.all():
        unc = X[~cov]
        gains = np.array([np.sum(np.linalg.norm(unc - c, axis=1) < r * shrink * 0.92)
                          for c, r in zip(cand, crad)])
        j = int(np.argmax(gains))
        if gains[j] == 0:
            far = unc[0]
            raise ValueError(f"cannot cover the point {far.tolist()} at this resolution")
        charts.append(InteriorBall(cand[j], float(crad[j]), label=f"interior-{len(charts)}"))
        cov = covered(charts)
    radii = np.array([c.r for c in charts])
    return Covering(domain, charts, delta0, s0, shrink * radii, 0.1 * float(radii.min()))


def scaling_map(center, rho: float, X):
    """``T x = z + rho (x - z)``."""
    center = np.asarray(center, float)
    return center + rho * (np.asarray(X, float) - center)


def inverse_scaling_map(center, rho: float, Y):
    """``T^{-1} y = z + (y - z) / rho``."""
    center = np.asarray(center, float)
    return center + (np.asarray(Y, float) - center) / rho


def support_margin(covering: Covering, rho: float) -> float:
    """Width ``4 eps`` of the boundary strip on which the assembled field vanishes.

    Lipschitz charts give ``c0 (1/rho - 1)`` with
    ``c0 = min |kappa_i| / (4 (L_i + 2))``; star charts give the sampled
    containment margin; interior balls cap it by their clearance from
    ``∂Ω``; mixed coverings take the minimum.
    """
    if rho >= 1:
        return 0.0
    if not 0 < rho:
        raise ValueError("rho must lie in (0, 1)")
    vals = []
    c0 = covering.c0()
    if math.isfinite(c0):
        if c0 <= 0:
            raise ValueError("c0 <= 0: chart constants violate their invariants")
        vals.append(c0 * (1 / rho - 1))
    for c in covering.charts:
        if isinstance(c, StarChart):
            vals.append(c.margin(rho))
        elif isinstance(c, InteriorBall):
            # interior balls must stay clear of the strip
            vals.append(float(-covering.domain.signed_distance(np.asarray(c.center, float)[None])[0]) - c.r)
    if not vals:
        return math.inf
    return float(min(vals))


@dataclass
class StarShapeReport:
    passed: bool
    violations: int
    directions: int
    witness: Optional[list]


def check_strongly_star_shaped(domain: Domain, center=None, sample_count: int = 256,
                               levels: int = 6, ray_steps: int = 4000) -> StarShapeReport:
    """Dyadic interior test of segments from ``center`` to boundary points."""
    z = np.asarray(center if center is not None else getattr(domain, "center"), float)
    if not domain.contains(z[None])[0]:
        return StarShapeReport(False, sample_count, sample_count, z.tolist())
    dirs = sphere_directions(domain.dim, sample_count)
    diam = domain.diameter()
    lam = np.linspace(0, 1.5 * diam, ray_steps)[1:]
    s = np.unique(np.concatenate([np.arange(1, 2 ** l) / 2 ** l for l in range(1, levels + 1)]))
    viol = 0
    witness = None
    for nu in dirs:
        if isinstance(domain, RadialDomain):
            r = float(domain.r_of_direction(nu[None])[0])
        else:
            ins = domain.contains(z + lam[:, None] * nu)
            last = np.nonzero(ins)[0]
            r = lam[last[-1]] if last.size else 0.0
            # bisection to the boundary crossing after the last inside sample
            a, b = r, r + lam[0]
            for _ in range(40):
                m = 0.5 * (a + b)
                if domain.contains((z + m * nu)[None])[0]:
                    a = m
                else:
                    b = m
            r = a
        P = z + (s * r)[:, None] * nu
        bad = ~domain.contains(P)
        if bad.any():
            viol += 1
            if witness is None:
                witness = P[np.argmax(bad)].tolist()
    return StarShapeReport(viol == 0, viol, sample_count, witness)
