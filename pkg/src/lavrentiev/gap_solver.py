"""P1 finite-element minimization and the gap probe.

The discrete problem minimizes ``sum_T |T|/3 sum_{q} W(x_q, Du|_T)`` (edge
midpoint rule) over nodal values with the boundary nodes fixed to ``g``.
The solver is a limited-memory quasi-Newton method with an extended-real
safe Armijo backtracking; integrands that fail a sampled differentiability
test fall back to normalized subgradient steps ``1/sqrt(iter)``.
"""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import integrate
from scipy.spatial import Delaunay

from .domain import Annulus, Ball, Domain, Polygon, build_covering
from .fields import Field, GridFunction, TensorGrid
from .integrand import Integrand, _jsonable

__all__ = [
    "SimplicialMesh",
    "MinimizationResult",
    "P1Field",
    "disk_mesh",
    "annulus_mesh",
    "square_mesh",
    "mesh_for",
    "p1_energy",
    "p1_minimize",
    "refine_study",
    "RefineStudy",
    "gap_probe",
    "GapReport",
    "radial_p_energy",
    "differentiability_test",
]


@dataclass
class SimplicialMesh:
    """Triangle mesh with a boundary marker per vertex."""

    vertices: np.ndarray
    cells: np.ndarray
    boundary: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, float)
        self.cells = np.asarray(self.cells, int)
        self.boundary = np.asarray(self.boundary, bool)
        P = self.vertices[self.cells]
        e1, e2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        flip = det < 0
        if flip.any():
            self.cells[flip] = self.cells[flip][:, [0, 2, 1]]
            det = np.abs(det)
        if np.any(det <= 0):
            raise ValueError("mesh has degenerate cells")
        self.area = det / 2
        # barycentric gradients: (n_cells, 3, 2)
        P = self.vertices[self.cells]
        inv = np.empty((len(P), 3, 2))
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            e = P[:, c] - P[:, b]
            inv[:, a, 0] = -e[:, 1]
            inv[:, a, 1] = e[:, 0]
        self.bary_grad = inv / (2 * self.area)[:, None, None]
        self.quad_points = 0.5 * (P + P[:, [1, 2, 0]])

    @property
    def h(self) -> float:
        P = self.vertices[self.cells]
        return float(np.max(np.linalg.norm(P - P[:, [1, 2, 0]], axis=2)))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def to_json(self) -> dict:
        return {"vertices": self.vertices.tolist(), "cells": self.cells.tolist(),
                "boundary": self.boundary.astype(int).tolist(), "label": self.label}

    @classmethod
    def from_json(cls, spec: dict) -> "SimplicialMesh":
        return cls(np.asarray(spec["vertices"]), np.asarray(spec["cells"]),
                   np.asarray(spec["boundary"], bool), spec.get("label", ""))

    def write_csv(self, stem):
        """``stem_vertices.csv`` (x, y, boundary) and ``stem_cells.csv`` (a, b, c)."""
        with open(f"{stem}_vertices.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "boundary"])
            for (x, y), b in zip(self.vertices, self.boundary):
                w.writerow([repr(float(x)), repr(float(y)), int(b)])
        with open(f"{stem}_cells.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["a", "b", "c"])
            w.writerows(self.cells.tolist())

    @classmethod
    def read_csv(cls, stem) -> "SimplicialMesh":
        V = np.loadtxt(f"{stem}_vertices.csv", delimiter=",", skiprows=1, ndmin=2)
        C = np.loadtxt(f"{stem}_cells.csv", delimiter=",", skiprows=1, dtype=int, ndmin=2)
        return cls(V[:, :2], C, V[:, 2].astype(bool))

    def gradients(self, u: np.ndarray) -> np.ndarray:
        """Cellwise gradients ``(n_cells, m, 2)`` of nodal values ``(n, m)``."""
        U = u[self.cells]  # (nc, 3, m)
        return np.einsum("cam,cad->cmd", U, self.bary_grad)

    def check_conforming(self) -> bool:
        """Every interior edge is shared by exactly two cells, boundary edges by one."""
        E = np.sort(np.concatenate([self.cells[:, [0, 1]], self.cells[:, [1, 2]], self.cells[:, [2, 0]]]), axis=1)
        _, counts = np.unique(E, axis=0, return_counts=True)
        return bool(np.all(counts <= 2))


def _ring_points(r_lo: float, r_hi: float, h: float, center, include_center: bool):
    n_r = max(1, int(round((r_hi - r_lo) / h)))
    radii = np.linspace(r_lo, r_hi, n_r + 1)
    step = (r_hi - r_lo) / n_r
    pts, bnd = [], []
    if include_center:
        pts.append(np.zeros((1, 2)))
        bnd.append(np.zeros(1, bool))
        radii = radii[1:]
    for i, r in enumerate(radii):
        # 6 points per radial step keeps ring counts proportional to 1/h
        n = max(6, 6 * int(round(r / step)))
        th = 2 * math.pi * np.arange(n) / n + (0.5 * math.pi / n) * (i % 2)
        pts.append(r * np.column_stack([np.cos(th), np.sin(th)]))
        on_b = (abs(r - r_hi) < 1e-14) or (not include_center and abs(r - r_lo) < 1e-14)
        bnd.append(np.full(n, on_b))
    return np.vstack(pts) + np.asarray(center, float), np.concatenate(bnd)


def disk_mesh(h: float, center=(0.0, 0.0), radius: float = 1.0) -> SimplicialMesh:
    """Concentric rings plus the center, Delaunay-triangulated.

    Ring ``i`` carries ``6 i`` points, so halving ``h`` doubles the boundary
    resolution exactly and the polygonal area error is a clean ``O(h^2)``.
    """
    V, B = _ring_points(0.0, radius, h, center, True)
    tri = Delaunay(V)
    return SimplicialMesh(V, tri.simplices, B, f"disk(h={h})")


def annulus_mesh(h: float, r_in: float, r_out: float, center=(0.0, 0.0)) -> SimplicialMesh:
    V, B = _ring_points(r_in, r_out, h, center, False)
    tri = Delaunay(V)
    C = tri.simplices
    cen = V[C].mean(axis=1) - np.asarray(center, float)
    keep = np.linalg.norm(cen, axis=1) > r_in
    return SimplicialMesh(V, C[keep], B, f"annulus(h={h})")


def square_mesh(h: float, lo: float = -1.0, hi: float = 1.0) -> SimplicialMesh:
    """Structured criss-cross-free triangulation of ``[lo, hi]^2``."""
    n = max(1, int(math.ceil((hi - lo) / h)))
    ax = np.linspace(lo, hi, n + 1)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    V = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a, b, c, d = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel(), idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    C = np.vstack([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    B = (np.isclose(V, lo) | np.isclose(V, hi)).any(axis=1)
    return SimplicialMesh(V, C, B, f"square(h={h})")


def mesh_for(domain: Domain, h: float) -> SimplicialMesh:
    if isinstance(domain, Ball) and domain.dim == 2:
        return disk_mesh(h, domain.center, domain.radius)
    if isinstance(domain, Annulus):
        return annulus_mesh(h, domain.r_in, domain.r_out, domain.center)
    if isinstance(domain, Polygon):
        V = np.asarray(domain.vertices, float)
        lo, hi = V.min(axis=0), V.max(axis=0)
        if len(V) == 4 and np.allclose(hi - lo, hi[0] - lo[0]) and np.allclose(
                np.sort(np.abs(V - lo).sum(axis=1)), np.sort([0, hi[0] - lo[0], hi[0] - lo[0], 2 * (hi[0] - lo[0])])):
            return square_mesh(h, lo[0], hi[0])
    raise ValueError(f"no mesher for {type(domain).__name__}; supply a mesh file")


# --------------------------------------------------------------------------
# energy


def p1_energy(W: Integrand, mesh: SimplicialMesh, u: np.ndarray, with_grad: bool = True):
    """Energy and its gradient with respect to nodal values.

    Any quadrature point with ``W = +inf`` makes the energy ``+inf`` (and the
    gradient ``None``).
    """
    u = u.reshape(mesh.n_vertices, -1)
    Du = mesh.gradients(u)
    nc = len(mesh.cells)
    Xq = mesh.quad_points.reshape(-1, 2)
    Xi = np.repeat(Du, 3, axis=0)
    vals = W(Xq, Xi).reshape(nc, 3)
    if np.any(np.isinf(vals)) or np.any(np.isnan(vals)):
        return math.inf, None
    E = float(np.sum(mesh.area / 3 * vals.sum(axis=1)))
    if not with_grad:
        return E, None
    G = W.grad(Xq, Xi).reshape(nc, 3, *Du.shape[1:]).sum(axis=1) * (mesh.area / 3)[:, None, None]
    contrib = np.einsum("cmd,cad->cam", G, mesh.bary_grad)
    grad = np.zeros_like(u)
    for a in range(3):
        np.add.at(grad, mesh.cells[:, a], contrib[:, a])
    return E, grad


def differentiability_test(W: Integrand, n: int = 64, seed: int = 0, rtol: float = 1e-4) -> bool:
    """Compare ``W.grad`` with central differences at random points and gradients."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-0.9, 0.9, size=(n, W.d)) / math.sqrt(W.d)
    Xi = rng.normal(size=(n, W.m, W.d)) * 0.3
    f0 = W(X, Xi)
    ok = np.isfinite(f0)
    if not ok.any():
        return False
    X, Xi = X[ok], Xi[ok]
    G = W.grad(X, Xi)
    if not np.all(np.isfinite(G)):
        return False
    dirs = rng.normal(size=Xi.shape)
    eps = 1e-6
    fd = (W(X, Xi + eps * dirs) - W(X, Xi - eps * dirs)) / (2 * eps)
    an = np.sum(G * dirs, axis=(1, 2))
    scale = np.maximum(1.0, np.abs(an))
    return bool(np.all(np.abs(fd - an) <= rtol * scale))


@dataclass
class MinimizationResult:
    minimizer: np.ndarray
    energy: float
    iterations: int
    stop_reason: str
    certificate: float
    grad_norm: float
    mesh: SimplicialMesh = field(repr=False, default=None)
    history: list = field(default_factory=list, repr=False)

    def as_field(self, g: Optional[Field] = None) -> "P1Field":
        return P1Field(self.mesh, self.minimizer, outside=g)

    def to_json(self):
        return _jsonable({"energy": self.energy, "iterations": self.iterations, "stop_reason": self.stop_reason,
                          "certificate": self.certificate, "grad_norm": self.grad_norm,
                          "n_vertices": self.mesh.n_vertices if self.mesh is not None else None,
                          "h": self.mesh.h if self.mesh is not None else None})


def _two_loop(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y in reversed(list(zip(S, Y))):
        rho = 1.0 / np.dot(y, s)
        a = rho * np.dot(s, q)
        alphas.append((a, rho, s, y))
        q -= a * y
    if S:
        s, y = S[-1], Y[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for a, rho, s, y in reversed(alphas):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q


def p1_minimize(W: Integrand, mesh: SimplicialMesh, g: Field, u0: Optional[np.ndarray] = None,
                max_iter: int = 100_000, window: int = 50, rtol: float = 1e-10, memory: int = 10,
                gtol: float = 1e-11, convexity_tol: float = 1e-9) -> MinimizationResult:
    """Minimize the P1 energy over ``g + (zero-trace P1 functions)``.

    The start is the nodal interpolant of ``g`` (or ``u0`` with boundary
    values reset to ``g``). Stops when the relative energy decrease over
    ``window`` iterations is below ``rtol``, when the interior gradient
    norm is below ``gtol`` or after ``max_iter`` iterations.

    The certificate is the quasi-Newton decrement ``g . H^-1 g / 2``, an
    estimate of the remaining energy decrease.
    """
    gV = g.values(mesh.vertices)
    m = gV.shape[1]
    u = gV.copy() if u0 is None else np.asarray(u0, float).reshape(-1, m).copy()
    u[mesh.boundary] = gV[mesh.boundary]
    free = ~mesh.boundary
    E, G = p1_energy(W, mesh, u)
    if not math.isfinite(E):
        raise ValueError("no feasible start: the energy of the boundary datum interpolant is infinite")
    smooth = differentiability_test(W)
    hist = [E]
    S, Y = deque(maxlen=memory), deque(maxlen=memory)
    x = u[free].ravel()
    gr = G[free].ravel()
    reason = "max_iter"
    it = 0
    best = (E, u.copy())

    def full(xv):
        uu = u.copy()
        uu[free] = xv.reshape(-1, m)
        return uu

    for it in range(1, max_iter + 1):
        gn = float(np.linalg.norm(gr))
        if gn <= gtol * max(1.0, abs(E)):
            reason = "gradient"
            break
        if smooth:
            d = -_two_loop(gr, list(S), list(Y))
            if np.dot(d, gr) >= 0:
                S.clear()
                Y.clear()
                d = -gr
            step, slope = 1.0, float(np.dot(d, gr))
            while True:
                xn = x + step * d
                En, Gn = p1_energy(W, mesh, full(xn))
                if math.isfinite(En) and En <= E + 1e-4 * step * slope:
                    break
                step *= 0.5
                if step < 1e-20:
                    En = None
                    break
            if En is None:
                if S:
                    S.clear()
                    Y.clear()
                    continue
                reason = "line_search"
                break
            Em, _ = p1_energy(W, mesh, full(x + 0.5 * step * d), with_grad=False)
            if Em > 0.5 * (E + En) + convexity_tol * max(1.0, abs(E)):
                raise RuntimeError(f"non-convexity detected along an accepted step (midpoint excess "
                                   f"{Em - 0.5 * (E + En):.3e})")
            gn_new = Gn[free].ravel()
            s_, y_ = xn - x, gn_new - gr
            if np.dot(s_, y_) > 1e-16 * np.dot(s_, s_):
                S.append(s_)
                Y.append(y_)
            x, gr, E = xn, gn_new, En
        else:
            step = 1.0 / math.sqrt(it) * mesh.h
            xn = x - step * gr / gn
            En, Gn = p1_energy(W, mesh, full(xn))
            while not math.isfinite(En):
                step *= 0.5
                xn = x - step * gr / gn
                En, Gn = p1_energy(W, mesh, full(xn))
            x, gr, E = xn, Gn[free].ravel(), En
        hist.append(E)
        if E < best[0]:
            best = (E, full(x))
        if len(hist) > window and (hist[-window - 1] - E) <= rtol * max(1.0, abs(E)):
            reason = "stalled"
            break
    E, u = best
    _, Gf = p1_energy(W, mesh, u)
    gr = Gf[free].ravel()
    if smooth and S:
        cert = 0.5 * abs(float(np.dot(gr, _two_loop(gr, list(S), list(Y)))))
    else:
        cert = float(np.linalg.norm(gr)) * mesh.h
    return MinimizationResult(u, E, it, reason, cert, float(np.linalg.norm(gr)), mesh, hist)


# --------------------------------------------------------------------------
# P1 functions as fields


class P1Field(Field):
    """Piecewise-linear interpolant of nodal values; ``outside`` (or 0) off the mesh."""

    def __init__(self, mesh: SimplicialMesh, values: np.ndarray, outside: Optional[Field] = None):
        self.mesh = mesh
        self.vals = np.asarray(values, float).reshape(mesh.n_vertices, -1)
        self.dim = 2
        self.ncomp = self.vals.shape[1]
        self.outside = outside
        self._tri = Delaunay(mesh.vertices)
        key = {tuple(sorted(c)): i for i, c in enumerate(mesh.cells.tolist())}
        self._map = np.array([key.get(tuple(sorted(c)), -1) for c in self._tri.simplices.tolist()])
        self._cell_grads = mesh.gradients(self.vals)

    def locate(self, X) -> np.ndarray:
        s = self._tri.find_simplex(X)
        c = np.where(s >= 0, self._map[np.maximum(s, 0)], -1)
        miss = (s >= 0) & (c < 0)
        if miss.any():
            c[miss] = self._brute(X[miss])
        return c

    def _brute(self, X):
        out = np.full(len(X), -1)
        P0 = self.mesh.vertices[self.mesh.cells[:, 0]]
        for i, x in enumerate(X):
            lam = np.einsum("cad,cd->ca", self.mesh.bary_grad, x - P0)
            lam[:, 0] += 1.0
            ok = np.all(lam >= -1e-12, axis=1)
            if ok.any():
                out[i] = int(np.argmax(ok))
        return out

    def values(self, X):
        X = np.atleast_2d(X)
        c = self.locate(X)
        out = np.zeros((len(X), self.ncomp)) if self.outside is None else self.outside.values(X)
        ok = c >= 0
        if ok.any():
            cc = c[ok]
            P0 = self.mesh.vertices[self.mesh.cells[cc, 0]]
            V0 = self.vals[self.mesh.cells[cc, 0]]
            out[ok] = V0 + np.einsum("nmd,nd->nm", self._cell_grads[cc], X[ok] - P0)
        return out

    def grads(self, X):
        X = np.atleast_2d(X)
        c = self.locate(X)
        out = np.zeros((len(X), self.ncomp, 2)) if self.outside is None else self.outside.grads(X)
        ok = c >= 0
        out[ok] = self._cell_grads[c[ok]]
        return out


# --------------------------------------------------------------------------
# refinement and the radial oracle


def radial_p_energy(p: float, r_in: float, r_out: float, a: float, b: float, d: int = 2) -> float:
    """Minimal ``int |Du|^p`` on an annulus with ``u = a`` at ``r_in`` and ``b`` at ``r_out``.

    The radial Euler-Lagrange equation gives ``u' = c r^-gamma`` with
    ``gamma = (d-1)/(p-1)``; the energy is ``|S^{d-1}| |b-a|^p I^{1-p}``
    with ``I = int r^-gamma dr``.
    """
    gamma = (d - 1) / (p - 1)
    I, _ = integrate.quad(lambda r: r ** (-gamma), r_in, r_out, epsabs=0, epsrel=1e-13)
    surf = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    return surf * abs(b - a) ** p * I ** (1 - p)


@dataclass
class RefineStudy:
    hs: list
    energies: list
    certificates: list
    extrapolated: float
    order: Optional[float]
    residual: float
    monotone: bool
    flags: list
    results: list = field(repr=False, default_factory=list)

    def error_bar(self) -> float:
        return self.residual + self.certificates[-1]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["h", "energy", "certificate"])
            for h, e, c in zip(self.hs, self.energies, self.certificates):
                w.writerow([repr(h), repr(e), repr(c)])

    def to_json(self):
        return _jsonable({k: getattr(self, k) for k in
                          ("hs", "energies", "certificates", "extrapolated", "order", "residual", "monotone", "flags")})


def _richardson(hs, E):
    """Fit ``E(h) = A + c h^r`` through the last three levels (h halving)."""
    if len(E) < 3:
        return E[-1], None, abs(E[-1] - E[-2]) if len(E) > 1 else 0.0
    e1, e2, e3 = E[-3:]
    d1, d2 = e1 - e2, e2 - e3
    ratio = hs[-2] / hs[-1]
    if d1 * d2 > 0 and abs(d2) < abs(d1):
        r = math.log(d1 / d2) / math.log(ratio)
        A = e3 - d2 / (ratio ** r - 1)
        return A, r, abs(A - e3)
    return e3, None, max(abs(d1), abs(d2))


def refine_study(W: Integrand, domain: Domain, g: Field, hs=(1 / 8, 1 / 16, 1 / 32), meshes=None,
                 tol: float = 1e-8, **solver) -> RefineStudy:
    """Minimize on a family of meshes (``h`` halving) and extrapolate the limit."""
    meshes = list(meshes) if meshes is not None else [mesh_for(domain, h) for h in hs]
    hs = [m_.h for m_ in meshes] if meshes is not None else list(hs)
    res = [p1_minimize(W, m_, g, **solver) for m_ in meshes]
    E = [r.energy for r in res]
    C = [r.certificate for r in res]
    A, order, resid = _richardson(hs, E)
    flags = []
    mono = all(E[i + 1] <= E[i] + tol * max(1.0, abs(E[i])) + C[i] + C[i + 1] for i in range(len(E) - 1))
    if not mono:
        areas = [float(m_.area.sum()) for m_ in meshes]
        grows = all(b > a for a, b in zip(areas, areas[1:]))
        flags.append("non-monotone energies under refinement" +
                     (" (the meshed area grows with refinement)" if grows else ""))
    if order is None and len(E) >= 3:
        flags.append("Richardson fit unavailable; residual is the last level difference")
    return RefineStudy(list(hs), E, C, A, order, resid, mono, flags, res)


# --------------------------------------------------------------------------
# gap probe


@dataclass
class GapReport:
    A: float
    B: float
    gap_indicator: float
    bar_A: float
    bar_B: float
    within_bars: bool
    assumptions: dict
    flags: list
    refine: dict
    recovery_rows: int
    note: str = ("Conforming P1 minima may approach the smooth-class infimum even when a gap exists, so "
                 "this probe can corroborate absence of a gap but cannot falsify it.")

    def to_json(self):
        return _jsonable(self.__dict__)

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)


def gap_probe(W: Integrand, domain: Domain, g: Field, u_star=None, hs=(1 / 8, 1 / 16, 1 / 32),
              recovery_config=None, grid_h: float = 2 ** -6, assumptions: Optional[dict] = None,
              covering=None, solver: Optional[dict] = None) -> GapReport:
    """Compare the extrapolated P1 infimum ``A`` with the best recovery energy ``B``.

    ``u_star`` defaults to the finest P1 minimizer (boundary values taken
    from ``g`` outside the mesh). The recovery sequence is built for
    ``v = u_star - g`` on a tensor grid of spacing ``grid_h``.
    ``bar_A`` is the extrapolation residual plus the finest certificate;
    ``bar_B`` is the discrepancy between the grid and mesh quadratures of
    ``F(u_star)``.
    """
    from .recovery import RecoveryConfig, convergence_study, energy

    flags = []
    for key, rep in sorted((assumptions or {}).get("reports", {}).items()):
        reps = rep if isinstance(rep, list) else [rep]
        if not all(r.get("passed", True) for r in reps):
            flags.append(f"assumption {key} failed")
    rs = refine_study(W, domain, g, hs, **(solver or {}))
    flags += rs.flags
    fin = rs.results[-1]
    if u_star is None:
        u_star = fin.as_field(g)
        F_mesh = fin.energy
    else:
        F_mesh, _ = p1_energy(W, fin.mesh, u_star.values(fin.mesh.vertices), with_grad=False)
    v = u_star - g
    cfg = recovery_config or RecoveryConfig(k_max=6)
    cov = covering or build_covering(domain, extra_interior=[getattr(domain, "center", np.zeros(domain.dim))])
    study = convergence_study(W, v, g, cov, cfg, grid_h)
    finite = [r.energy for r in study.rows if math.isfinite(r.energy)]
    if not finite:
        flags.append("all recovery energies infinite")
        B = math.inf
    else:
        B = min(finite)
    F_grid = study.target_energy
    bar_A = rs.error_bar()
    bar_B = abs(F_grid - F_mesh)
    gap = B - rs.extrapolated
    within = bool(abs(gap) <= bar_A + bar_B)
    return GapReport(rs.extrapolated, B, gap, bar_A, bar_B, within, assumptions or {}, flags,
                     rs.to_json(), len(study.rows))
