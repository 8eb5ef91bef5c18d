"""Radial Lipschitz cut-offs adapted to a family of functions.

Given ``u_1, ..., u_N`` on a ball ``B_R`` and ``delta`` in ``(0, 1/2]``, the
radii in ``[(1-delta) R, R]`` on which every sphere integral of ``|Du_i|^p``
and ``|u_i|^p`` stays below ``4N`` times its annulus average are kept; the
cut-off decreases linearly in ``r`` on exactly those radii.

The annulus is discretized into ``n_shells`` equal shells evaluated at their
midpoints, and the annulus integrals are taken with the same shells, so the
Fubini argument behind ``|U| >= delta R / 2`` holds exactly for the discrete
sets.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .fields import Field

__all__ = [
    "sphere_quadrature",
    "ShellProfile",
    "CutoffProfile",
    "shell_integrals",
    "annulus_integrals",
    "good_radii",
    "build_cutoff",
    "cutoff_for",
    "verify_product_bound",
    "product_exponents_ok",
]


def sphere_quadrature(d: int, n_theta: Optional[int] = None, n_phi: Optional[int] = None):
    """Nodes and weights on the unit sphere ``S^{d-1}`` (d = 1, 2, 3).

    d=2: ``n_theta`` (default 256) equispaced angles. d=3: Gauss-Legendre in
    ``cos(phi)`` (default 32 nodes) times ``n_theta`` (default 64) equispaced
    azimuths. d=1: the two points ``+-1`` with counting measure.
    """
    if d == 1:
        return np.array([[-1.0], [1.0]]), np.array([1.0, 1.0])
    if d == 2:
        n = n_theta or 256
        a = 2 * np.pi * np.arange(n) / n
        return np.column_stack([np.cos(a), np.sin(a)]), np.full(n, 2 * np.pi / n)
    if d == 3:
        nt = n_theta or 64
        npf = n_phi or 32
        x, w = np.polynomial.legendre.leggauss(npf)
        a = 2 * np.pi * np.arange(nt) / nt
        s = np.sqrt(1 - x ** 2)
        Z = np.column_stack([
            (s[:, None] * np.cos(a)[None]).ravel(),
            (s[:, None] * np.sin(a)[None]).ravel(),
            np.repeat(x, nt),
        ])
        W = np.repeat(w, nt) * (2 * np.pi / nt)
        return Z, W
    raise ValueError("sphere quadrature only for d <= 3")


def product_exponents_ok(p: float, q: float, d: int) -> bool:
    """Admissible ``(p, q)`` pairs of the product estimate."""
    if not (p >= 1 and q > p):
        return False
    if p < d - 1:
        return q <= (d - 1) * p / (d - 1 - p) * (1 + 1e-14)
    if p == d - 1:
        return math.isfinite(q)
    return math.isinf(q)


@dataclass
class ShellProfile:
    """Per-shell sphere integrals ``int_{S_1} |Du_i(r z)|^p`` and ``int_{S_1} |u_i(r z)|^p``."""

    center: np.ndarray
    R: float
    delta: float
    p: float
    radii: np.ndarray
    width: float
    shell_grad_integrals: np.ndarray
    shell_val_integrals: np.ndarray

    @property
    def N(self) -> int:
        return self.shell_grad_integrals.shape[0]

    @property
    def d(self) -> int:
        return self.center.size

    @property
    def edges(self) -> np.ndarray:
        return (1 - self.delta) * self.R + self.width * np.arange(len(self.radii) + 1)


def shell_integrals(u_list: Sequence[Field], center, R: float, delta: float, p: float,
                    n_shells: int = 256, n_theta: Optional[int] = None,
                    n_phi: Optional[int] = None) -> ShellProfile:
    """Sphere integrals of ``|Du_i|^p`` and ``|u_i|^p`` on midpoint shells of ``[(1-delta)R, R]``."""
    if not u_list:
        raise ValueError("need at least one function")
    if not 0 < delta <= 0.5:
        raise ValueError("delta must lie in (0, 1/2]")
    if n_shells < 16:
        raise ValueError("n_shells must be >= 16")
    center = np.asarray(center, float)
    d = center.size
    Z, wz = sphere_quadrature(d, n_theta, n_phi)
    width = delta * R / n_shells
    radii = (1 - delta) * R + width * (np.arange(n_shells) + 0.5)
    P = (center[None, None] + radii[:, None, None] * Z[None]).reshape(-1, d)
    G = np.zeros((len(u_list), n_shells))
    V = np.zeros((len(u_list), n_shells))
    for i, u in enumerate(u_list):
        vals = u.values(P)
        grads = u.grads(P)
        gv = np.sqrt(np.sum(grads ** 2, axis=(1, 2))) ** p
        vv = np.sqrt(np.sum(vals ** 2, axis=1)) ** p
        G[i] = gv.reshape(n_shells, -1) @ wz
        V[i] = vv.reshape(n_shells, -1) @ wz
    return ShellProfile(center, float(R), float(delta), float(p), radii, width, G, V)


def annulus_integrals(profile: ShellProfile):
    """``int_{B_R minus B_(1-delta)R} |Du_i|^p`` and ``|u_i|^p`` from the same shells."""
    jac = profile.radii ** (profile.d - 1) * profile.width
    return profile.shell_grad_integrals @ jac, profile.shell_val_integrals @ jac


def good_radii(profile: ShellProfile, annulus=None) -> np.ndarray:
    """Boolean shell mask of ``U``: every function passes both thresholds (ties count as good)."""
    N = profile.N
    C = 4 * N
    R, dl, d = profile.R, profile.delta, profile.d
    Ag, Av = annulus_integrals(profile) if annulus is None else annulus
    fac = C / (dl * (1 - dl) ** (d - 1) * R ** d)
    ok = np.all(profile.shell_grad_integrals <= fac * Ag[:, None], axis=0)
    ok &= np.all(profile.shell_val_integrals <= fac * Av[:, None], axis=0)
    measure = ok.sum() * profile.width
    if measure < dl * R / 2 - profile.width * (1 + 1e-9):
        raise RuntimeError("good-radii set is smaller than the guaranteed dR/2: shell and annulus "
                           "quadratures are inconsistent")
    return ok


@dataclass
class CutoffProfile:
    """Radial cut-off ``eta(x) = eta~(|x - center|)``.

    ``eta~`` is 1 up to ``(1-delta) R``, decreases with slope ``-1/|U|`` on
    the good shells, is flat elsewhere and vanishes at ``R``.
    """

    center: np.ndarray
    R: float
    delta: float
    U: np.ndarray
    edges: np.ndarray
    knots_r: np.ndarray
    knots_eta: np.ndarray
    N: int

    @property
    def C_threshold(self) -> int:
        return 4 * self.N

    @property
    def U_measure(self) -> float:
        return float(np.sum(np.diff(self.edges)[self.U]))

    @property
    def lipschitz_bound(self) -> float:
        slopes = -np.diff(self.knots_eta) / np.diff(self.knots_r)
        return float(np.max(slopes))

    def eta_radial(self, r) -> np.ndarray:
        r = np.asarray(r, float)
        return np.interp(r, self.knots_r, self.knots_eta, left=1.0, right=0.0)

    def eta(self, X) -> np.ndarray:
        return self.eta_radial(np.linalg.norm(np.atleast_2d(X) - self.center, axis=1))

    def eta_grad(self, X) -> np.ndarray:
        """Gradient of ``eta``; shell boundaries take the value of the shell to the right."""
        D = np.atleast_2d(X) - self.center
        r = np.linalg.norm(D, axis=1)
        j = np.searchsorted(self.edges, r, side="right") - 1
        inside = (j >= 0) & (j < len(self.U))
        slope = np.zeros_like(r)
        jj = np.clip(j, 0, len(self.U) - 1)
        slope[inside] = np.where(self.U[jj[inside]], -1.0 / self.U_measure, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r[:, None] > 0, D / np.where(r > 0, r, 1.0)[:, None], 0.0)
        return slope[:, None] * unit

    def invariants(self) -> dict:
        rr = np.linspace(0, 1.2 * self.R, 2001)
        e = self.eta_radial(rr)
        return {
            "range_ok": bool(np.all((e >= 0) & (e <= 1))),
            "inner_one": bool(np.all(self.eta_radial(rr[rr <= (1 - self.delta) * self.R]) == 1.0)),
            "zero_at_R": bool(self.eta_radial(self.R) == 0.0),
            "lipschitz_ok": bool(self.lipschitz_bound <= 2 / (self.delta * self.R) * (1 + 1e-12)),
            "measure_ok": bool(self.U_measure >= self.delta * self.R / 2 - np.max(np.diff(self.edges)) * (1 + 1e-9)),
        }

    def write_csv(self, path, n: int = 513):
        r = np.linspace(0, self.R, n)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "eta"])
            for a, b in zip(r, self.eta_radial(r)):
                w.writerow([repr(float(a)), repr(float(b))])


def build_cutoff(U: np.ndarray, R: float, delta: float, edges: Optional[np.ndarray] = None,
                 center=None, N: int = 1) -> CutoffProfile:
    """``eta~(r) = |U|^-1 int_r^R chi_U``, integrated exactly shell by shell."""
    U = np.asarray(U, bool)
    if edges is None:
        edges = (1 - delta) * R + delta * R / len(U) * np.arange(len(U) + 1)
    widths = np.diff(edges)
    meas = float(np.sum(widths[U]))
    if not meas > 0:
        raise ValueError("|U| = 0")
    tail = np.concatenate([np.cumsum((widths * U)[::-1])[::-1], [0.0]])
    knots_eta = tail / meas
    knots_eta[0] = 1.0
    d = 2 if center is None else np.asarray(center).size
    c = np.zeros(d) if center is None else np.asarray(center, float)
    return CutoffProfile(c, float(R), float(delta), U, np.asarray(edges, float), np.asarray(edges, float),
                         knots_eta, int(N))


def cutoff_for(u_list: Sequence[Field], center, R: float, delta: float, p: float,
               n_shells: int = 256, **quad) -> CutoffProfile:
    """Shell integrals, good radii and the cut-off in one call."""
    prof = shell_integrals(u_list, center, R, delta, p, n_shells, **quad)
    U = good_radii(prof)
    return build_cutoff(U, R, delta, prof.edges, prof.center, prof.N)


@dataclass
class ProductBoundReport:
    lhs: np.ndarray
    bracket: np.ndarray
    scale: float
    C_measured: float

    def to_json(self):
        return {"lhs": self.lhs.tolist(), "bracket": self.bracket.tolist(), "scale": self.scale,
                "C_measured": self.C_measured}


def verify_product_bound(eta: CutoffProfile, u_list: Sequence[Field], p: float, q: float,
                         n_theta: Optional[int] = None, n_phi: Optional[int] = None) -> ProductBoundReport:
    """Measured constant in ``||grad eta (x) u_i||_q <= C R^(d/q-d/p-1) delta^-(1+1/p-1/q) [...]``.

    The bracket is ``R ||Du_i||_p + ||u_i||_p`` over the annulus. All
    integrals use the shells of ``eta``; ``q = inf`` takes the maximum over
    the quadrature nodes of the good shells.
    """
    d = eta.center.size
    if not product_exponents_ok(p, q, d):
        raise ValueError(f"exponents (p={p}, q={q}) are outside the admissible table for d={d}")
    Z, wz = sphere_quadrature(d, n_theta, n_phi)
    edges = eta.edges
    radii = 0.5 * (edges[:-1] + edges[1:])
    widths = np.diff(edges)
    P = (eta.center[None, None] + radii[:, None, None] * Z[None]).reshape(-1, d)
    R, dl = eta.R, eta.delta
    gslope = 1.0 / eta.U_measure
    lhs, br = [], []
    jac = radii ** (d - 1) * widths
    for u in u_list:
        vals = np.sqrt(np.sum(u.values(P) ** 2, axis=1)).reshape(len(radii), -1)
        grads = np.sqrt(np.sum(u.grads(P) ** 2, axis=(1, 2))).reshape(len(radii), -1)
        if math.isinf(q):
            l = gslope * float(np.max(vals[eta.U], initial=0.0))
        else:
            l = gslope * float(((vals[eta.U] ** q) @ wz) @ jac[eta.U]) ** (1 / q)
        Ag = float(((grads ** p) @ wz) @ jac)
        Av = float(((vals ** p) @ wz) @ jac)
        lhs.append(l)
        br.append(R * Ag ** (1 / p) + Av ** (1 / p))
    dq = 0.0 if math.isinf(q) else d / q
    iq = 0.0 if math.isinf(q) else 1 / q
    scale = R ** (dq - d / p - 1) * dl ** (-(1 + 1 / p - iq))
    lhs, br = np.array(lhs), np.array(br)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(br > 0, lhs / (scale * br), 0.0)
    return ProductBoundReport(lhs, br, scale, float(np.max(ratios)))
