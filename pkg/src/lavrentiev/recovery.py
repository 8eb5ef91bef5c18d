"""Recovery sequences ``u_{k,t} = g + t (phi_k * v_k)`` on tensor grids.

For each ``k`` the target ``v = u - g`` (extended by zero) is pulled in
towards the scaling centers of the covering, glued with a Lipschitz
partition of unity built from adapted radial cut-offs, and mollified at the
scale allowed by the boundary margin. Each ``(k, t)`` row of a study records
the Sobolev distance to ``u``, the energy and the two error-term integrals
of the energy estimate.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import ndimage

from .cutoff import cutoff_for
from .domain import Covering, Domain, grid_weights, support_margin
from .fields import Field, GridFunction, LinearCombination, ScaledField, TensorGrid, ZeroExtendedField
from .integrand import Integrand, _jsonable

__all__ = [
    "RecoveryConfig",
    "RecoveryState",
    "ConvergenceRow",
    "StudyResult",
    "extend_by_zero",
    "pull_in",
    "assemble_state",
    "mollify",
    "mollifier_kernel",
    "energy",
    "energy_field",
    "convergence_study",
    "nonconvex_transfer",
    "check_c1",
    "quadrature_weights",
]


@dataclass
class RecoveryConfig:
    """Schedules and discretization knobs.

    ``t_rule`` selects the ``(k, j)`` rows: ``"triangle"`` (``j <= k``,
    default), ``"full"`` (all ``j <= j_max``) or ``"diagonal"`` (``j = k``).
    """

    k_max: int = 8
    k_min: int = 1
    j_max: Optional[int] = None
    t_rule: str = "triangle"
    delta0: float = 0.2
    s: float = 1.25
    n_shells: int = 64
    n_theta: int = 256
    n_phi: int = 32
    seed: int = 0

    def rho(self, k: int) -> float:
        return 1.0 - 2.0 ** (-k)

    def t(self, j: int) -> float:
        return 1.0 - 2.0 ** (-j)

    def rows(self):
        jm = self.j_max or self.k_max
        out = []
        for k in range(self.k_min, self.k_max + 1):
            if self.t_rule == "full":
                js = range(1, jm + 1)
            elif self.t_rule == "diagonal":
                js = [k]
            elif self.t_rule == "triangle":
                js = range(1, min(k, jm) + 1)
            else:
                raise ValueError(f"unknown t_rule {self.t_rule!r}")
            out.extend((k, j) for j in js)
        return out

    def to_json(self):
        return dict(self.__dict__)


_WEIGHT_CACHE: dict = {}


def quadrature_weights(domain: Domain, grid: TensorGrid) -> np.ndarray:
    key = (json.dumps(_jsonable(domain.to_json()), sort_keys=True), grid)
    if key not in _WEIGHT_CACHE:
        _WEIGHT_CACHE.clear()
        _WEIGHT_CACHE[key] = grid_weights(domain, grid)
    return _WEIGHT_CACHE[key]


def extend_by_zero(v, domain: Domain, tol: float = 1e-12, n_boundary: int = 2048):
    """Zero extension of ``v`` outside ``Ω``.

    ``v`` is a ``Field`` or a ``GridFunction``. Its trace must vanish: for a
    grid function every node outside the open domain must carry 0; for a
    field the values at sampled boundary points must be below ``tol``
    (relative to ``max(1, sup |v|)``).
    """
    if isinstance(v, GridFunction):
        X = v.grid.points()
        outside = ~domain.contains(X)
        bad = outside & np.any(np.abs(v.values) > tol, axis=1)
        if bad.any():
            i = int(np.argmax(bad))
            raise ValueError(f"nonzero trace: value {v.values[i].tolist()} at node {X[i].tolist()}")
        vals = np.where(outside[:, None], 0.0, v.values)
        grads = np.where(outside[:, None, None], 0.0, v.grads)
        return GridFunction(v.grid, vals, grads)
    B = domain.boundary_samples(n_boundary)
    vb = np.abs(v.values(B))
    scale = max(1.0, float(np.max(np.abs(v.values(B * 0.5 + 0.5 * B.mean(axis=0))))))
    if np.max(vb) > tol * scale:
        i = int(np.argmax(np.max(vb, axis=1)))
        raise ValueError(f"nonzero trace: |v| = {float(vb[i].max())} at boundary point {B[i].tolist()}")
    return ZeroExtendedField(v, domain)


def pull_in(u, g, t: float):
    """``g + t (u - g)``."""
    if not 0 < t <= 1:
        raise ValueError("t must lie in (0, 1]")
    if t == 1:
        return u
    if isinstance(u, GridFunction):
        return GridFunction(u.grid, g.values + t * (u.values - g.values), g.grads + t * (u.grads - g.grads))
    return LinearCombination([(1.0 - t, g), (t, u)])


def check_c1(g: Field, grid: TensorGrid, factor: float = 10.0, mask=None) -> dict:
    """Discrete C^1 test: neighbouring nodal gradients differ by at most ``factor h max(1, sup|Dg|)``."""
    G = g.grads(grid.points()).reshape(grid.shape + (-1,))
    mod = 0.0
    for ax in range(grid.dim):
        diff = np.abs(np.diff(G, axis=ax)).max(initial=0.0)
        mod = max(mod, float(diff))
    bound = factor * grid.h * max(1.0, float(np.abs(G).max()))
    return {"modulus": mod, "bound": bound, "passed": bool(mod <= bound)}


# --------------------------------------------------------------------------
# assembly


@dataclass
class RecoveryState:
    """Nodal data of one ``k``.

    Sums over charts are stored directly (the mollifier is linear):
    ``S_main = sum phi_i (Dv_i + Dg_i)``, ``S_err1 = sum phi_i (Dg - Dg_i) +
    grad phi_i (x) (v_i - v)``, ``S_g = sum phi_i Dg``.
    """

    k: int
    rho: float
    eps: float
    margin: float
    delta_k: float
    grid: TensorGrid
    v_k: np.ndarray
    Dv_k: np.ndarray
    S_main: np.ndarray
    S_err1: np.ndarray
    S_g: np.ndarray
    partition_sum: np.ndarray
    denominator_min: float
    cutoffs: list = field(default_factory=list)
    chart_support_nodes: list = field(default_factory=list)


def _chart_ball(ch):
    return np.asarray(ch.center, float), float(ch.r)


def assemble_state(v: Field, g: Field, covering: Covering, config: RecoveryConfig, k: int,
                   grid: TensorGrid, p: float) -> RecoveryState:
    """Pulled-in copies, adapted cut-offs, Lipschitz partition and the glued ``v_k``."""
    rho = config.rho(k)
    domain = covering.domain
    margin4 = support_margin(covering, rho)
    delta_k = 2 * domain.diameter() * abs(1 / rho - 1)
    eps = min(margin4 / 4, delta_k)
    X = grid.points()
    n, dim = X.shape
    m = v.ncomp
    charts = covering.charts
    N = len(charts)
    v_i = [ScaledField(v, np.asarray(c.z, float), rho) for c in charts]
    g_i = [ScaledField(g, np.asarray(c.z, float), rho) for c in charts]
    diffs = [LinearCombination([(1.0, vi), (-1.0, v)]) for vi in v_i]
    cutoffs = []
    for ch in charts:
        cen, r = _chart_ball(ch)
        prof = cutoff_for(diffs, cen, r, config.delta0, p, n_shells=config.n_shells,
                          n_theta=config.n_theta, n_phi=config.n_phi if dim == 3 else None)
        cutoffs.append(prof)
    phi0, dphi0 = covering.phi0(X)
    eta = np.zeros((N, n))
    supp = []
    for i, prof in enumerate(cutoffs):
        cen, r = _chart_ball(charts[i])
        idx = np.nonzero(np.linalg.norm(X - cen, axis=1) < r)[0]
        e = prof.eta(X[idx])
        keep = e > 0
        idx = idx[keep]
        eta[i, idx] = e[keep]
        supp.append(idx)
    den = phi0 + eta.sum(axis=0)
    if np.any(den <= 0):
        j = int(np.argmax(den <= 0))
        raise RuntimeError(f"partition denominator vanishes at {X[j].tolist()}: covering has a hole")
    grad_sum = dphi0.copy()
    grad_eta = []
    for i, prof in enumerate(cutoffs):
        ge = prof.eta_grad(X[supp[i]])
        grad_eta.append(ge)
        grad_sum[supp[i]] += ge
    in_omega = domain.contains(X)
    vX = v.values(X)
    DgX = g.grads(X)
    v_k = np.zeros((n, m))
    Dv_k = np.zeros((n, m, dim))
    S_main = np.zeros((n, m, dim))
    S_err1 = np.zeros((n, m, dim))
    S_g = np.zeros((n, m, dim))
    psum = np.zeros(n)
    sd = domain.signed_distance(X)
    strip = sd >= -margin4
    for i in range(N):
        idx = supp[i]
        if idx.size == 0:
            continue
        Xi = X[idx]
        d_ = den[idx]
        phi = eta[i, idx] / d_
        gphi = grad_eta[i] / d_[:, None] - (eta[i, idx] / d_ ** 2)[:, None] * grad_sum[idx]
        vi = v_i[i].values(Xi)
        Dvi = v_i[i].grads(Xi)
        Dgi = g_i[i].grads(Xi)
        contrib = phi[:, None] * vi
        bad = strip[idx] & np.any(contrib != 0, axis=1)
        if bad.any():
            j = idx[int(np.argmax(bad))]
            raise RuntimeError(f"support invariant violated by chart {charts[i].label or i} "
                               f"at {X[j].tolist()} (4 eps = {margin4:.3e})")
        v_k[idx] += contrib
        Dv_k[idx] += phi[:, None, None] * Dvi + vi[:, :, None] * gphi[:, None, :]
        S_main[idx] += phi[:, None, None] * (Dvi + Dgi)
        S_err1[idx] += phi[:, None, None] * (DgX[idx] - Dgi) + (vi - vX[idx])[:, :, None] * gphi[:, None, :]
        S_g[idx] += phi[:, None, None] * DgX[idx]
        psum[idx] += phi
    return RecoveryState(k, rho, eps, margin4, delta_k, grid, v_k, Dv_k, S_main, S_err1, S_g,
                         psum, float(den[in_omega].min()) if in_omega.any() else math.inf,
                         cutoffs, supp)


# --------------------------------------------------------------------------
# mollification


def mollifier_kernel(eps: float, h: float, dim: int) -> np.ndarray:
    """Normalized ``exp(-1/(1-|y/eps|^2))`` on the grid; the identity when ``eps < h``."""
    rad = int(math.floor(eps / h))
    if rad < 1:
        k = np.zeros((1,) * dim)
        k[(0,) * dim] = 1.0
        return k
    ax = np.arange(-rad, rad + 1) * h
    mesh = np.meshgrid(*([ax] * dim), indexing="ij")
    s2 = sum(m_ ** 2 for m_ in mesh) / eps ** 2
    ker = np.zeros_like(s2)
    inside = s2 < 1
    ker[inside] = np.exp(-1.0 / (1.0 - s2[inside]))
    return ker / ker.sum()


def _convolve(arr: np.ndarray, grid: TensorGrid, ker: np.ndarray) -> np.ndarray:
    if ker.size == 1:
        return arr.copy()
    shp = grid.shape
    flat = arr.reshape(grid.size, -1)
    out = np.empty_like(flat)
    for c in range(flat.shape[1]):
        out[:, c] = ndimage.convolve(flat[:, c].reshape(shp), ker, mode="constant", cval=0.0).ravel()
    return out.reshape(arr.shape)


@dataclass
class MollifiedState:
    w: np.ndarray
    Dw: np.ndarray
    main: np.ndarray
    err1: np.ndarray
    g_conv: np.ndarray
    kernel_radius_nodes: int
    sup_main: float
    sup_bound_ratio: float


def mollify(state: RecoveryState, p: float, domain: Domain) -> MollifiedState:
    """``w_k = phi_k * v_k`` and the convolved sums used by the energy estimate."""
    if state.eps > state.margin / 4 * (1 + 1e-12):
        raise ValueError("mollification radius exceeds a quarter of the support margin")
    grid = state.grid
    ker = mollifier_kernel(state.eps, grid.h, grid.dim)
    w = _convolve(state.v_k, grid, ker)
    Dw = _convolve(state.Dv_k, grid, ker)
    main = _convolve(state.S_main, grid, ker)
    err1 = _convolve(state.S_err1, grid, ker)
    gc = _convolve(state.S_g, grid, ker)
    X = grid.points()
    near = domain.signed_distance(X) >= -state.margin / 2
    if np.any(w[near] != 0):
        j = int(np.argmax(np.any(w != 0, axis=1) & near))
        raise RuntimeError(f"mollified field reaches the boundary strip at {X[j].tolist()}")
    sup_main = float(np.max(np.sqrt(np.sum(main ** 2, axis=(1, 2)))))
    ratio = sup_main * state.eps ** (grid.dim / p)
    return MollifiedState(w, Dw, main, err1, gc, ker.shape[0] // 2, sup_main, ratio)


# --------------------------------------------------------------------------
# energies


def energy(W: Integrand, u: GridFunction, domain: Domain, weights=None) -> float:
    """Nodal quadrature of ``int_Ω W(x, Du)``; any infinite value at a weighted node gives ``+inf``."""
    w = quadrature_weights(domain, u.grid) if weights is None else weights
    X = u.grid.points()
    act = w > 0
    vals = W(X[act], u.grads[act])
    if np.any(np.isinf(vals)):
        return math.inf
    return float(np.dot(vals, w[act]))


def energy_field(W: Integrand, u: Field, domain: Domain, h0: float = 2.0 ** -5, tol: float = 1e-6,
                 max_levels: int = 6) -> dict:
    """Energy of a field by nodal quadrature on halved grids with Richardson extrapolation.

    Stops when consecutive extrapolated values differ by less than ``tol``
    (relative).
    """
    vals, ext = [], []
    h = h0
    lo, hi = domain.bbox()
    for lev in range(max_levels):
        grid = TensorGrid.covering(lo, hi, h, pad=h)
        E = energy(W, GridFunction.sample(u, grid), domain, grid_weights(domain, grid))
        vals.append(E)
        if not math.isfinite(E):
            return {"energy": math.inf, "levels": vals, "h": h}
        if lev >= 1:
            ext.append((4 * vals[-1] - vals[-2]) / 3)
        if len(ext) >= 2 and abs(ext[-1] - ext[-2]) <= tol * abs(ext[-1]):
            return {"energy": ext[-1], "levels": vals, "h": h, "converged": True}
        h /= 2
    return {"energy": ext[-1] if ext else vals[-1], "levels": vals, "h": h * 2, "converged": False}


def _nodal_integral(vals, w):
    act = w > 0
    v = vals[act]
    if np.any(np.isinf(v)):
        return math.inf
    return float(np.dot(v, w[act]))


# --------------------------------------------------------------------------
# convergence study


@dataclass
class ConvergenceRow:
    k: int
    t: float
    sobolev_error: float
    energy: float
    error_term_1: float
    error_term_2: float
    uniform_grad_bound: float
    sup_bound_ratio: float
    eps: float
    split_residual: float
    finite: bool
    error_terms_finite: bool

    CSV_FIELDS = ("k", "t", "sobolev_error", "energy", "err1", "err2", "sup_bound_ratio")

    def csv_row(self):
        return [self.k, repr(self.t), repr(self.sobolev_error), repr(self.energy),
                repr(self.error_term_1), repr(self.error_term_2), repr(self.sup_bound_ratio)]


@dataclass
class StudyResult:
    rows: List[ConvergenceRow]
    target_energy: float
    grid: TensorGrid
    weights: np.ndarray
    Dg: np.ndarray
    Du: np.ndarray
    mollified: dict
    states: dict
    manifest: dict

    def gradient(self, k: int, t: float) -> np.ndarray:
        return self.Dg + t * self.mollified[k].Dw

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(ConvergenceRow.CSV_FIELDS)
            for r in self.rows:
                wr.writerow(r.csv_row())

    def write_manifest(self, path):
        with open(path, "w") as fh:
            json.dump(_jsonable(self.manifest), fh, indent=2, sort_keys=True)

    def final_row(self) -> ConvergenceRow:
        return self.rows[-1]


def convergence_study(W: Integrand, v: Field, g: Field, covering: Covering, config: RecoveryConfig,
                      h: float, keep_states: bool = False, target_u: Optional[Field] = None,
                      manifest_extra: Optional[dict] = None) -> StudyResult:
    """Rows ``(k, t)`` of the recovery construction for ``u = g + v``.

    ``v`` must vanish on ``∂Ω``; it is extended by zero. The grid has
    spacing ``h``, nodes on the lattice ``h Z^d``, and a margin of two cells
    around ``Ω``.
    """
    domain = covering.domain
    p = W.growth.p
    v0 = extend_by_zero(v, domain) if not isinstance(v, ZeroExtendedField) else v
    lo, hi = domain.bbox()
    grid = TensorGrid.covering(lo, hi, h, pad=2 * h)
    X = grid.points()
    w = quadrature_weights(domain, grid)
    act = w > 0
    gX, DgX = g.values(X), g.grads(X)
    vX, DvX = v0.values(X), v0.grads(X)
    uX, DuX = gX + vX, DgX + DvX
    Eu = _nodal_integral(W(X, DuX), w)
    if not math.isfinite(Eu):
        raise ValueError("target energy infinite")
    rows = []
    moll = {}
    states = {}
    schedule = config.rows()
    for k in sorted({k for k, _ in schedule}):
        st = assemble_state(v0, g, covering, config, k, grid, p)
        ms = mollify(st, p, domain)
        moll[k] = ms
        if keep_states:
            states[k] = st
        for kk, j in schedule:
            if kk != k:
                continue
            t = config.t(j)
            Du_kt = DgX + t * ms.Dw
            u_kt = gX + t * ms.w
            E = _nodal_integral(W(X, Du_kt), w)
            diff = np.sum(np.abs(u_kt - uX) ** 2, axis=1) ** (p / 2) + np.sum((Du_kt - DuX) ** 2, axis=(1, 2)) ** (p / 2)
            sob = float(np.dot(diff[act], w[act])) ** (1 / p)
            lam = 2 * t / (1 - t)
            arg1 = DgX + lam * ms.err1
            arg2 = DgX + lam * (st.S_g - ms.g_conv)
            e1 = _nodal_integral(W(X, arg1), w)
            e2 = _nodal_integral(W(X, arg2), w)
            A = t * ms.main
            B = (1 - t) / 2 * arg1
            C = (1 - t) / 2 * arg2
            split = A + B + C
            inside = domain.contains(X)
            res = float(np.max(np.abs(split[inside] - Du_kt[inside]), initial=0.0))
            row = ConvergenceRow(k, t, sob, E, e1, e2, ms.sup_main, ms.sup_bound_ratio, st.eps, res,
                                 bool(math.isfinite(sob) and math.isfinite(E)),
                                 bool(math.isfinite(e1) and math.isfinite(e2)))
            rows.append(row)
    manifest = {
        "domain": domain.to_json(),
        "integrand": W.to_json(),
        "config": config.to_json(),
        "schedules": {"rho": "1 - 2^-k", "t": "1 - 2^-j", "rows": schedule},
        "h": h,
        "grid": {"lo": grid.lo, "hi": grid.hi, "h": grid.h},
        "covering": {"charts": len(covering.charts), "c0": covering.c0(), "delta0": covering.delta0},
        "target_energy": Eu,
        "seed": config.seed,
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    return StudyResult(rows, Eu, grid, w, DgX, DuX, moll, states, manifest)


# --------------------------------------------------------------------------
# non-convex transfer


@dataclass
class TransferReport:
    sandwich_ok: bool
    samples: int
    witness: Optional[dict]
    target_G_energy: float
    rows: list
    final_gap: float

    def to_json(self):
        return _jsonable(self.__dict__)


def nonconvex_transfer(G: Integrand, W: Integrand, C: float, alpha_fn, study: StudyResult,
                       n_samples: int = 100_000, seed: int = 0) -> TransferReport:
    """``G``-energies along a stored recovery sequence.

    First verifies ``W/C - alpha <= G <= C W + alpha`` at ``n_samples``
    points (quadrature nodes paired with gradients from the sequence and
    with random matrices), then integrates ``G`` along every row.
    """
    rng = np.random.default_rng(seed)
    X = study.grid.points()
    act = np.nonzero(study.weights > 0)[0]
    half = n_samples // 2
    ii = rng.choice(act, size=half)
    Xi_seq = study.Du[ii]
    jj = rng.choice(act, size=n_samples - half)
    Xi_rand = rng.normal(size=(n_samples - half, W.m, W.d)) * np.exp(rng.uniform(-3, 3, size=(n_samples - half, 1, 1)))
    XX = np.concatenate([X[ii], X[jj]])
    XI = np.concatenate([Xi_seq, Xi_rand])
    g_ = G(XX, XI)
    w_ = W(XX, XI)
    al = alpha_fn(XX)
    with np.errstate(invalid="ignore"):
        low = w_ / C - al <= g_
        up = g_ <= C * w_ + al
    ok = low & up
    witness = None
    if not ok.all():
        b = int(np.argmin(ok))
        witness = {"x": XX[b].tolist(), "xi": XI[b].tolist(), "G": float(g_[b]), "W": float(w_[b])}
        raise ValueError(f"sandwich violated: {witness}")
    EG = _nodal_integral(G(X, study.Du), study.weights)
    rows = []
    for r in study.rows:
        Eg = _nodal_integral(G(X, study.gradient(r.k, r.t)), study.weights)
        rows.append({"k": r.k, "t": r.t, "G_energy": Eg,
                     "rel_gap": abs(Eg - EG) / abs(EG) if EG != 0 else abs(Eg)})
    return TransferReport(True, int(len(XX)), witness, EG, rows, rows[-1]["rel_gap"] if rows else math.nan)
