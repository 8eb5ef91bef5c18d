"""Integrands ``W(x, xi)`` with ``xi`` an ``m x d`` matrix, the catalog of
test integrands and sampled checks of the structural assumptions.

Convexity and lower semicontinuity in ``xi`` (a1), the lower bound
``|xi|^p <= W`` (a2), the upper growth / local-sup integrability (a3) and
the stability estimate against the convexified ball infimum (a4).

Values are extended reals; ``+inf`` marks points outside the effective
domain of ``W(x, .)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .convex_transform import SampledFunction1D, SampledFunctionND, biconjugate, check_convexity
from .domain import Domain, grid_weights, sphere_directions
from .fields import Field, TensorGrid

__all__ = [
    "GrowthMeta",
    "Integrand",
    "ConstraintSet",
    "CheckReport",
    "StabilityReport",
    "make_power",
    "make_double_phase",
    "make_exp_double_phase",
    "make_aniso_exp",
    "add_constraint",
    "coefficient_from_json",
    "integrand_from_json",
    "CATALOG",
    "check_convexity_slices",
    "check_lower_growth",
    "check_upper_growth",
    "omega_envelope",
    "check_stability",
    "check_interior_continuity",
    "check_assumptions",
    "holder_seminorm",
    "local_sup",
]

WINDOW_CAP = 1e6


@dataclass(frozen=True)
class GrowthMeta:
    """Growth data attached to an integrand.

    ``q = inf`` means there is no polynomial upper bound; then only the
    local-sup branch of (a3) is available. ``stability_split(x, delta)``
    optionally flags points where the stability constant is not expected to
    be multiplicative (those points only feed ``alpha_M``).
    """

    p: float
    q: float
    C: float
    alpha_fn: Callable = field(default=lambda X: np.ones(len(np.atleast_2d(X))))
    theta: float = 1.0
    stability_split: Optional[Callable] = None

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError("p must be >= 1")
        if not self.q > self.p:
            raise ValueError("q must exceed p")
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not self.theta > 0:
            raise ValueError("theta must be positive")


class Integrand:
    """Extended-real energy density.

    Parameters
    ----------
    fn : callable
        ``fn(X, Xi)`` with ``X`` of shape ``(n, d)`` and ``Xi`` of shape
        ``(n, m, d)`` returns ``(n,)`` values in ``[0, inf]``.
    d, m : int
    growth : GrowthMeta
    label : str
    grad_fn : callable, optional
        ``grad_fn(X, Xi) -> (n, m, d)``, a subgradient in ``xi``. Central
        differences are used when absent.
    split : tuple, optional
        ``(V0, V1, a_fn)`` with ``W = V0(xi) + a(x) V1(xi)`` and ``V1 >= 0``;
        lets the ball infimum be taken through ``min a`` exactly.
    radial : bool
        ``W(x, xi)`` depends on ``xi`` only through ``|xi|``.
    """

    def __init__(self, fn, d: int, m: int, growth: GrowthMeta, label: str,
                 grad_fn=None, split=None, params=None, autonomous: bool = False,
                 radial: bool = False):
        self.fn = fn
        self.d, self.m = int(d), int(m)
        self.growth = growth
        self.label = label
        self.grad_fn = grad_fn
        self.split = split
        self.params = dict(params or {})
        self.autonomous = autonomous
        self.radial = radial

    def _prep(self, X, Xi):
        Xi = np.asarray(Xi, dtype=float).reshape(-1, self.m, self.d)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(X) == 1 and len(Xi) > 1:
            X = np.broadcast_to(X, (len(Xi), self.d))
        return X, Xi

    def __call__(self, X, Xi) -> np.ndarray:
        X, Xi = self._prep(X, Xi)
        return np.asarray(self.fn(X, Xi), dtype=float)

    eval = __call__

    def grad(self, X, Xi) -> np.ndarray:
        X, Xi = self._prep(X, Xi)
        if self.grad_fn is not None:
            return np.asarray(self.grad_fn(X, Xi), dtype=float)
        g = np.zeros_like(Xi)
        for i in range(self.m):
            for j in range(self.d):
                e = np.zeros((self.m, self.d))
                hstep = 1e-6 * np.maximum(1.0, np.abs(Xi[:, i, j]))
                e[i, j] = 1.0
                g[:, i, j] = (self.fn(X, Xi + hstep[:, None, None] * e)
                              - self.fn(X, Xi - hstep[:, None, None] * e)) / (2 * hstep)
        return g

    def to_json(self):
        return {"label": self.label, "d": self.d, "m": self.m, "params": self.params,
                "p": self.growth.p, "q": self.growth.q}

    def __repr__(self):
        return f"Integrand({self.label!r}, d={self.d}, m={self.m}, p={self.growth.p}, q={self.growth.q})"


def _norm(Xi):
    return np.sqrt(np.sum(Xi ** 2, axis=(1, 2)))


def _power_and_grad(Xi, p):
    r = _norm(Xi)
    val = r ** p
    with np.errstate(divide="ignore", invalid="ignore"):
        fac = np.where(r > 0, p * r ** (p - 2), 0.0 if p > 1 else 0.0)
    return val, fac[:, None, None] * Xi


# --------------------------------------------------------------------------
# coefficient functions


def coefficient_from_json(spec) -> tuple:
    """Coefficient ``a(x)`` from a JSON description; returns ``(a_fn, holder_exponent, sup)``.

    Kinds: ``zero``; ``constant`` (``value``); ``x1_plus``
    (``scale * max(x_1 - shift, 0)^exponent``).
    """
    if spec is None:
        spec = {"kind": "zero"}
    kind = spec.get("kind", "zero")
    if kind == "zero":
        return (lambda X: np.zeros(len(X))), 1.0, 0.0
    if kind == "constant":
        c = float(spec.get("value", 1.0))
        if c < 0:
            raise ValueError("coefficient must be nonnegative")
        return (lambda X: np.full(len(X), c)), 1.0, c
    if kind == "x1_plus":
        s = float(spec.get("scale", 1.0))
        e = float(spec.get("exponent", 1.0))
        sh = float(spec.get("shift", 0.0))
        if s < 0 or not 0 < e <= 1:
            raise ValueError("x1_plus needs scale >= 0 and exponent in (0, 1]")
        return (lambda X: s * np.maximum(np.atleast_2d(X)[:, 0] - sh, 0.0) ** e), e, s * 2.0 ** e
    raise ValueError(f"unknown coefficient kind {kind!r}")


def holder_seminorm(a_fn, alpha: float, d: int, radius: float = 1.0, levels: int = 12,
                    n: int = 256, seed: int = 0) -> float:
    """Sampled ``C^{0,alpha}`` seminorm on dyadic pairs in ``[-radius, radius]^d``."""
    rng = np.random.default_rng(seed)
    best = 0.0
    for k in range(levels):
        hstep = radius * 2.0 ** (-k)
        X = rng.uniform(-radius, radius, size=(n, d))
        D = rng.normal(size=(n, d))
        D *= hstep / np.linalg.norm(D, axis=1, keepdims=True)
        diff = np.abs(a_fn(X + D) - a_fn(X))
        best = max(best, float(np.max(diff)) / hstep ** alpha)
    return best


# --------------------------------------------------------------------------
# catalog


def make_power(p: float, d: int = 2, m: int = 1) -> Integrand:
    """``W(xi) = |xi|^p`` (Frobenius norm)."""
    if not p >= 1:
        raise ValueError("p must be >= 1")

    def fn(X, Xi):
        return _norm(Xi) ** p

    def grad_fn(X, Xi):
        return _power_and_grad(Xi, p)[1]

    # |xi|^p <= |xi|^(p+1) + 1 gives a valid upper exponent above p
    growth = GrowthMeta(p=p, q=p + 1, C=1.0, alpha_fn=lambda X: np.ones(len(np.atleast_2d(X))), theta=1.0)
    return Integrand(fn, d, m, growth, "power", grad_fn=grad_fn, params={"p": p, "d": d, "m": m},
                     autonomous=True, radial=True)


def make_double_phase(p: float, q: float, a_fn=None, alpha: float = 1.0, d: int = 2, m: int = 1,
                      a_sup: Optional[float] = None, a_spec: Optional[dict] = None,
                      check_points: Optional[np.ndarray] = None) -> Integrand:
    """``W(x, xi) = |xi|^p + a(x) |xi|^q`` with a nonnegative Hölder coefficient.

    The metadata records the two admissibility conditions
    ``1/p - 1/(d-1) <= 1/q`` (upper growth) and ``q/p <= 1 + alpha/d``
    (stability).
    """
    if not p >= 1:
        raise ValueError("p must be >= 1")
    if not q > p:
        raise ValueError("q must exceed p")
    if a_fn is None:
        a_fn, alpha_h, sup = coefficient_from_json(a_spec)
        a_sup = sup if a_sup is None else a_sup
    pts = check_points
    if pts is None:
        pts = np.random.default_rng(0).uniform(-2, 2, size=(4096, d))
    a_vals = np.asarray(a_fn(pts), float)
    if np.any(a_vals < 0):
        i = int(np.argmin(a_vals))
        raise ValueError(f"coefficient is negative at {pts[i].tolist()}")
    if a_sup is None:
        a_sup = float(a_vals.max())
    cond_i = (1 / p - 1 / (d - 1) <= 1 / q + 1e-15) if d > 1 else True
    cond_ii = q / p <= 1 + alpha / d + 1e-15

    def fn(X, Xi):
        r = _norm(Xi)
        return r ** p + a_fn(X) * r ** q

    def grad_fn(X, Xi):
        _, gp = _power_and_grad(Xi, p)
        _, gq = _power_and_grad(Xi, q)
        return gp + a_fn(X)[:, None, None] * gq

    growth = GrowthMeta(p=p, q=q, C=1.0 + a_sup, alpha_fn=lambda X: np.ones(len(np.atleast_2d(X))),
                        theta=1.0)
    V0 = lambda Xi: _norm(Xi) ** p
    V1 = lambda Xi: _norm(Xi) ** q
    params = {"p": p, "q": q, "alpha": alpha, "d": d, "m": m,
              "condition_upper_growth": bool(cond_i), "condition_stability": bool(cond_ii),
              "a_spec": a_spec}
    return Integrand(fn, d, m, growth, "double_phase", grad_fn=grad_fn, split=(V0, V1, a_fn),
                     params=params, radial=True)


def exp_double_phase_constants(q: float):
    """``x_*``, the tangent slope ``exp(x_*^q) q x_*^(q-1)`` and ``C_* = exp(x_*^q)``."""
    x_star = (1.0 / q) ** (1.0 / q)
    slope = math.exp(1.0 / q) * q * x_star ** (q - 1)
    return x_star, slope, math.exp(1.0 / q)


def make_exp_double_phase(p: float, q: float, alpha: float, d: int = 2, m: int = 1) -> Integrand:
    """Convexified double phase with exponential second phase.

    ``G(x, xi) = |xi|^p + a(x_1) exp(|xi|^q)``, ``a(s) = exp(-s^-alpha)`` for
    ``s > 0`` and 0 otherwise. Below ``x_*`` (``x_*^q = 1/q``) the exponential
    is replaced by its tangent through the origin, which gives a convex
    ``W <= G <= W + C_*``. The non-convex ``G`` is attached as ``W.nonconvex``.
    """
    if d == 1:
        if not (p >= 1 and 0 < q < 1):
            raise ValueError("d = 1 needs p >= 1 and 0 < q < 1")
    else:
        if not p > d - 1:
            raise ValueError(f"p > d-1 fails: p={p}, d-1={d - 1}")
        if not 0 < q <= (d - 1) / d:
            raise ValueError(f"0 < q <= (d-1)/d fails: q={q}, (d-1)/d={(d - 1) / d}")
    if not p - d * q > 0:
        raise ValueError(f"alpha > dq/(p-dq) fails: p - dq = {p - d * q} <= 0")
    if not alpha > d * q / (p - d * q):
        raise ValueError(f"alpha > dq/(p-dq) fails: alpha={alpha}, dq/(p-dq)={d * q / (p - d * q)}")
    x_star, slope, C_star = exp_double_phase_constants(q)

    def a(s):
        s = np.asarray(s, float)
        out = np.zeros_like(s)
        pos = s > 0
        with np.errstate(over="ignore", divide="ignore"):
            out[pos] = np.exp(-s[pos] ** (-alpha))
        return out

    a_fn = lambda X: a(np.atleast_2d(X)[:, 0])

    def phi(r):
        with np.errstate(over="ignore"):
            e = np.exp(r ** q)
        # min() keeps the tangent below the exponential after rounding
        return np.where(r > x_star, e, np.minimum(slope * r, e))

    def dphi(r):
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            e = np.exp(r ** q) * q * np.where(r > 0, r, 1.0) ** (q - 1)
        return np.where(r > x_star, e, slope)

    def fn(X, Xi):
        r = _norm(Xi)
        av = a_fn(X)
        with np.errstate(invalid="ignore"):
            return r ** p + np.where(av > 0, av * phi(r), 0.0)

    def grad_fn(X, Xi):
        r = _norm(Xi)
        _, gp = _power_and_grad(Xi, p)
        av = a_fn(X)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            unit = np.where(r[:, None, None] > 0, Xi / np.where(r > 0, r, 1.0)[:, None, None], 0.0)
            extra = np.where(av > 0, av * dphi(r), 0.0)
        return gp + extra[:, None, None] * unit

    def g_fn(X, Xi):
        r = _norm(Xi)
        av = a_fn(X)
        with np.errstate(over="ignore", invalid="ignore"):
            return r ** p + np.where(av > 0, av * np.exp(r ** q), 0.0)

    def split_pred(X, delta):
        return np.atleast_2d(X)[:, 0] <= 2 * delta ** (1 / (alpha + 1))

    growth = GrowthMeta(p=p, q=math.inf, C=1.0, theta=1.0, stability_split=split_pred,
                        alpha_fn=lambda X: np.full(len(np.atleast_2d(X)), C_star))
    params = {"p": p, "q": q, "alpha": alpha, "d": d, "m": m, "x_star": x_star,
              "tangent_slope": slope, "C_star": C_star,
              "C_M_far": math.exp(1 / (alpha + 1))}
    W = Integrand(fn, d, m, growth, "exp_double_phase", grad_fn=grad_fn,
                  split=(lambda Xi: _norm(Xi) ** p, lambda Xi: phi(_norm(Xi)), a_fn), params=params,
                  radial=True)
    G = Integrand(g_fn, d, m, GrowthMeta(p=p, q=math.inf, C=1.0, theta=1.0), "exp_double_phase_G",
                  params=params, radial=True)
    W.nonconvex = G
    W.coefficient = a
    return W


def near_alpha_M(M: float, p: float, q: float, alpha: float, d: int, n: int = 200001) -> float:
    """``sup_{delta in (0, 1/2]} exp(-2^-alpha delta^(-alpha/(alpha+1)) + M^q delta^(-dq/p))``.

    Evaluated in log form on a log-spaced grid refined around the maximizer.
    Returns ``(log value, maximizing delta)``.
    """
    def expo(dl):
        return -2.0 ** (-alpha) * dl ** (-alpha / (alpha + 1)) + M ** q * dl ** (-d * q / p)

    logd = np.linspace(math.log(0.5), math.log(1e-300), n)
    e = expo(np.exp(logd))
    i = int(np.argmax(e))
    lo, hi = logd[min(i + 1, n - 1)], logd[max(i - 1, 0)]
    fine = np.linspace(lo, hi, 20001)
    ef = expo(np.exp(fine))
    j = int(np.argmax(ef))
    return float(ef[j]), float(math.exp(fine[j]))


def make_aniso_exp(coeffs, exponents, p: float = 2.0, d: Optional[int] = None,
                   m: Optional[int] = None) -> Integrand:
    """``exp(sum_ij |a_ij xi_ij|^q_ij)`` on ``{xi_11 > -1}``, ``+inf`` elsewhere.

    ``coeffs`` and ``exponents`` are ``m x d`` arrays; scalars are broadcast
    to the shape ``(m, d)`` (default ``1 x 2``). The exponent sum runs over
    every entry.
    """
    A = np.asarray(coeffs, dtype=float)
    if A.ndim < 2:
        shape = (m or 1, d or 2) if A.ndim == 0 else (m or 1, A.size)
        A = np.broadcast_to(A, shape).copy()
    Q = np.broadcast_to(np.asarray(exponents, dtype=float), A.shape).copy()
    if np.any(Q < 1):
        raise ValueError("exponents must be >= 1")
    m, d = A.shape

    def expo(Xi):
        return np.sum(np.abs(A[None] * Xi) ** Q[None], axis=(1, 2))

    def fn(X, Xi):
        with np.errstate(over="ignore"):
            v = np.exp(expo(Xi))
        return np.where(Xi[:, 0, 0] > -1, v, np.inf)

    def grad_fn(X, Xi):
        v = fn(X, Xi)
        AX = A[None] * Xi
        with np.errstate(invalid="ignore", over="ignore"):
            dexp = Q[None] * np.abs(AX) ** (Q[None] - 1) * np.sign(AX) * A[None]
            return v[:, None, None] * dexp

    growth = GrowthMeta(p=p, q=math.inf, C=1.0, theta=0.5)
    params = {"coeffs": A.tolist(), "exponents": Q.tolist(), "p": p, "d": d, "m": m}
    return Integrand(fn, d, m, growth, "aniso_exp", grad_fn=grad_fn, params=params, autonomous=True)


@dataclass(frozen=True)
class ConstraintSet:
    """Convex set ``K`` of ``m x d`` matrices containing 0 in its interior.

    kinds: ``ball`` (``radius``), ``box`` (``lo``, ``hi`` entrywise),
    ``halfspaces`` (``A``, ``b``: ``A vec(xi) <= b``).
    """

    kind: str
    params: dict

    def __post_init__(self):
        k, P = self.kind, self.params
        if k == "ball":
            if not P["radius"] > 0:
                raise ValueError("0 is not interior to K")
        elif k == "box":
            if not (np.all(np.asarray(P["lo"]) < 0) and np.all(np.asarray(P["hi"]) > 0)):
                raise ValueError("0 is not interior to K")
        elif k == "halfspaces":
            if not np.all(np.asarray(P["b"], float) > 0):
                raise ValueError("0 is not interior to K")
        else:
            raise ValueError(f"unknown constraint kind {k!r}")

    def contains(self, Xi) -> np.ndarray:
        Xi = np.asarray(Xi, float)
        flat = Xi.reshape(len(Xi), -1)
        if self.kind == "ball":
            return np.linalg.norm(flat, axis=1) <= self.params["radius"]
        if self.kind == "box":
            lo = np.asarray(self.params["lo"], float).reshape(-1)
            hi = np.asarray(self.params["hi"], float).reshape(-1)
            return np.all((flat >= lo) & (flat <= hi), axis=1)
        A = np.atleast_2d(np.asarray(self.params["A"], float))
        b = np.asarray(self.params["b"], float)
        return np.all(flat @ A.T <= b, axis=1)


def add_constraint(W: Integrand, K: ConstraintSet) -> Integrand:
    """``W + Phi_K`` with ``Phi_K = 0`` on ``K`` and ``+inf`` outside."""

    def fn(X, Xi):
        v = W.fn(X, Xi)
        return np.where(K.contains(Xi), v, np.inf)

    def grad_fn(X, Xi):
        g = W.grad(X, Xi)
        return np.where(K.contains(Xi)[:, None, None], g, np.nan)

    params = dict(W.params, constraint={"kind": K.kind, **{k: np.asarray(v).tolist() for k, v in K.params.items()}})
    out = Integrand(fn, W.d, W.m, W.growth, W.label + "+constraint", grad_fn=grad_fn,
                    params=params, autonomous=W.autonomous,
                    radial=W.radial and K.kind == "ball")
    out.base = W
    out.constraint = K
    return out


CATALOG = {
    "power": {
        "params": "p",
        "constraints": ["p >= 1"],
    },
    "double_phase": {
        "params": "p, q, a (coefficient spec), alpha (Hölder exponent of a)",
        "constraints": ["p >= 1", "q > p", "a >= 0",
                        "1/p - 1/(d-1) <= 1/q (upper growth)", "q/p <= 1 + alpha/d (stability)"],
    },
    "exp_double_phase": {
        "params": "p, q, alpha",
        "constraints": ["p > d-1", "0 < q <= (d-1)/d", "α > dq/(p−dq)"],
    },
    "aniso_exp": {
        "params": "coeffs a_ij, exponents q_ij, p",
        "constraints": ["q_ij >= 1", "+inf where xi_11 <= -1"],
    },
}


def integrand_from_json(spec: dict, d: int = 2) -> Integrand:
    label = spec.get("label")
    P = dict(spec.get("params", {}))
    d = int(P.pop("d", d))
    if label == "power":
        W = make_power(P["p"], d=d, m=P.get("m", 1))
    elif label == "double_phase":
        W = make_double_phase(P["p"], P["q"], alpha=P.get("alpha", 1.0), d=d, m=P.get("m", 1),
                              a_spec=P.get("a", {"kind": "zero"}))
    elif label == "exp_double_phase":
        W = make_exp_double_phase(P["p"], P["q"], P["alpha"], d=d, m=P.get("m", 1))
    elif label == "aniso_exp":
        m = P.get("m", 1)
        W = make_aniso_exp(np.broadcast_to(np.asarray(P.get("coeffs", 1.0), float), (m, d)),
                           P.get("exponents", 2.0), p=P.get("p", 2.0))
    else:
        raise KeyError(f"unknown integrand label {label!r}")
    if "constraint" in spec:
        c = spec["constraint"]
        W = add_constraint(W, ConstraintSet(c["kind"], {k: v for k, v in c.items() if k != "kind"}))
    return W


# --------------------------------------------------------------------------
# reports


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else ("inf" if f > 0 else ("-inf" if f < 0 else "nan"))
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class CheckReport:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    witness: Optional[dict] = None

    def to_json(self):
        return _jsonable({"name": self.name, "passed": self.passed, "details": self.details,
                          "witness": self.witness})


@dataclass
class StabilityReport:
    M: float
    delta_list: list
    fitted_C_M: float
    fitted_alpha_M_norm: float
    fitted_alpha_M_sup: float
    worst_ratio_witness: Optional[tuple]
    passed: bool
    per_delta_ratio: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_json(self):
        return _jsonable(self.__dict__)


# --------------------------------------------------------------------------
# samplers


def domain_samples(domain: Domain, n: int, seed: int = 0) -> np.ndarray:
    """Deterministic interior points: a Sobol set in the bounding box, rejected to ``Ω``."""
    lo, hi = domain.bbox()
    sob = qmc.Sobol(domain.dim, scramble=True, seed=seed)
    out = []
    while sum(len(o) for o in out) < n:
        P = qmc.scale(sob.random(256), lo, hi)
        out.append(P[domain.contains(P)])
    return np.vstack(out)[:n]


def xi_samples(m: int, d: int, n: int, seed: int = 0, rmin=1e-3, rmax=1e3) -> np.ndarray:
    rng = np.random.default_rng(seed)
    D = rng.normal(size=(n, m * d))
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    r = np.exp(rng.uniform(math.log(rmin), math.log(rmax), size=n))
    return (D * r[:, None]).reshape(n, m, d)


def _ball_directions(k: int, n: int, seed: int = 0) -> np.ndarray:
    if k <= 3:
        base = sphere_directions(k, n) if k > 1 else np.array([[-1.0], [1.0]])
    else:
        rng = np.random.default_rng(seed)
        base = rng.normal(size=(n, k))
        base /= np.linalg.norm(base, axis=1, keepdims=True)
    corners = np.array(np.meshgrid(*([[-1.0, 1.0]] * k), indexing="ij")).reshape(k, -1).T / math.sqrt(k)
    axes = np.vstack([np.eye(k), -np.eye(k)])
    return np.vstack([base, corners, axes])


def local_sup(W: Integrand, X: np.ndarray, theta: float, center=None, n_dir: int = 64) -> np.ndarray:
    """``sup_{|xi| <= theta} W(x, center(x) + xi)`` from sphere and corner samples.

    For convex ``W`` the sup over the ball is attained on its boundary sphere.
    """
    X = np.atleast_2d(X)
    k = W.m * W.d
    dirs = _ball_directions(k, n_dir) * theta
    C = np.zeros((len(X), W.m, W.d)) if center is None else np.asarray(center, float).reshape(len(X), W.m, W.d)
    out = np.full(len(X), -np.inf)
    for dvec in dirs:
        v = W(X, C + dvec.reshape(W.m, W.d))
        out = np.maximum(out, v)
    return np.maximum(out, W(X, C))


def _quadrature(domain: Domain, h: float):
    grid = TensorGrid.covering(*domain.bbox(), h, pad=h)
    w = grid_weights(domain, grid)
    P = grid.points()
    keep = w > 0
    return P[keep], w[keep]


def _integrate(vals, w):
    if np.any(np.isinf(vals) & (w > 0)):
        return math.inf
    return float(np.sum(vals * w))


# --------------------------------------------------------------------------
# checkers


def check_convexity_slices(W: Integrand, X: np.ndarray, n_slices: int = 4, radius: float = 4.0,
                           n: int = 33, tol: float = 1e-8, seed: int = 0) -> CheckReport:
    """(a1) on 2D slices ``xi = s e + t f`` through 0 (a 1D slice when ``m d = 1``)."""
    rng = np.random.default_rng(seed)
    k = W.m * W.d
    worst = 0.0
    witness = None
    checked = 0
    ax = np.linspace(-radius, radius, n)
    for x in np.atleast_2d(X):
        for _ in range(n_slices):
            if k == 1:
                pts = ax[:, None]
                vals = W(x[None], pts.reshape(-1, W.m, W.d))
                f = SampledFunctionND((ax,), vals)
            else:
                B, _ = np.linalg.qr(rng.normal(size=(k, 2)))
                S, T = np.meshgrid(ax, ax, indexing="ij")
                pts = S.reshape(-1, 1) * B[:, 0] + T.reshape(-1, 1) * B[:, 1]
                vals = W(x[None], pts.reshape(-1, W.m, W.d)).reshape(n, n)
                f = SampledFunctionND((ax, ax), vals)
            rep = check_convexity(f, tol=tol, n_random=2000, seed=seed)
            checked += rep.pairs_checked
            if rep.worst_violation > worst:
                worst = rep.worst_violation
                witness = {"x": x.tolist(), "slice_points": rep.witness}
    passed = witness is None or worst <= 0
    return CheckReport("a1_convexity", bool(passed), {"worst_violation": worst, "pairs_checked": checked},
                       witness)


def check_lower_growth(W: Integrand, domain: Domain, sample_budget: int = 20000, seed: int = 0,
                       rel_tol: float = 1e-12) -> CheckReport:
    """(a2): ``|xi|^p <= W(x, xi) (1 + rel_tol)`` on sampled pairs."""
    p = W.growth.p
    nx = max(8, int(math.sqrt(sample_budget)))
    X = domain_samples(domain, nx, seed)
    nxi = max(1, sample_budget // nx)
    Xi = xi_samples(W.m, W.d, nxi, seed + 1)
    Xi = np.concatenate([Xi, np.zeros((1, W.m, W.d))])
    XX = np.repeat(X, len(Xi), axis=0)
    XI = np.tile(Xi, (len(X), 1, 1))
    lhs = _norm(XI) ** p
    with np.errstate(invalid="ignore"):
        rhs = W(XX, XI)
    margin = rhs * (1 + rel_tol) - lhs
    i = int(np.argmin(margin))
    passed = bool(margin[i] >= 0)
    wit = None if passed else {"x": XX[i].tolist(), "xi": XI[i].tolist(), "W": float(rhs[i]),
                               "|xi|^p": float(lhs[i])}
    return CheckReport("a2_lower_growth", passed,
                       {"p": p, "worst_margin": float(margin[i]), "samples": int(len(lhs))}, wit)


def check_upper_growth(W: Integrand, domain: Domain, h: float = 0.05, sample_budget: int = 20000,
                       seed: int = 0) -> CheckReport:
    """(a3): polynomial bound (``p <= d-1``) or integrable local sup (``p > d-1``)."""
    p, q, d = W.growth.p, W.growth.q, W.d
    det = {"p": p, "q": q, "d": d}
    if p <= d - 1:
        det["branch"] = "polynomial"
        if p < d - 1:
            bound = (d - 1) * p / (d - 1 - p)
            det["q_bound"] = bound
            ok = q <= bound * (1 + 1e-14)
        else:
            det["q_bound"] = math.inf
            ok = math.isfinite(q)
        if not ok:
            return CheckReport("a3_upper_growth", False, dict(det, reason="q-bound fails (p <= d-1 branch)"))
        nx = max(8, int(math.sqrt(sample_budget)))
        X = domain_samples(domain, nx, seed)
        Xi = xi_samples(W.m, W.d, max(1, sample_budget // nx), seed + 1)
        XX = np.repeat(X, len(Xi), axis=0)
        XI = np.tile(Xi, (len(X), 1, 1))
        lhs = W(XX, XI)
        rhs = W.growth.C * _norm(XI) ** q + W.growth.alpha_fn(XX)
        slack = rhs - lhs
        i = int(np.argmin(slack))
        det["worst_slack"] = float(slack[i])
        passed = bool(slack[i] >= -1e-12 * max(1.0, abs(rhs[i])))
        wit = None if passed else {"x": XX[i].tolist(), "xi": XI[i].tolist()}
        return CheckReport("a3_upper_growth", passed, det, wit)
    det["branch"] = "local_sup"
    det["theta"] = W.growth.theta
    P, w = _quadrature(domain, h)
    vals = local_sup(W, P, W.growth.theta)
    integral = _integrate(vals, w)
    det["local_sup_integral"] = integral
    passed = math.isfinite(integral)
    wit = None
    if not passed:
        i = int(np.argmax(vals))
        wit = {"x": P[i].tolist()}
    return CheckReport("a3_upper_growth", passed, det, wit)


def _ball_y_samples(domain: Domain, x: np.ndarray, delta: float, n: int = 64) -> np.ndarray:
    d = x.size
    sob = qmc.Sobol(d, scramble=False)
    U = sob.random(2 ** int(math.ceil(math.log2(4 * n))))[1:]
    P = 2 * U - 1
    P = P[np.linalg.norm(P, axis=1) <= 1][:n]
    ext = np.vstack([np.eye(d), -np.eye(d)])
    Y = x + delta * np.vstack([np.zeros((1, d)), P, ext])
    inside = domain.signed_distance(Y) <= 0
    return Y[inside]


def omega_envelope(W: Integrand, x, delta: float, xi_axes: Sequence[np.ndarray],
                   domain: Domain, n_y: int = 64) -> SampledFunctionND:
    """``xi -> (min_{y in B_delta(x) ∩ Ω} W(y, xi))**`` on a tensor ``xi``-grid.

    ``xi_axes`` has one axis per entry of ``xi`` (``m d <= 4``).
    """
    x = np.asarray(x, float)
    if not delta > 0:
        raise ValueError("delta must be positive")
    if len(xi_axes) != W.m * W.d:
        raise ValueError("need one axis per matrix entry")
    if len(xi_axes) > 4:
        raise ValueError("xi grid dimension > 4: use slices")
    Y = _ball_y_samples(domain, x, delta, n_y)
    if len(Y) == 0:
        raise ValueError("ball does not intersect the domain")
    mesh = np.meshgrid(*xi_axes, indexing="ij")
    Xi = np.stack([m_.ravel() for m_ in mesh], -1).reshape(-1, W.m, W.d)
    axes = tuple(np.asarray(a, float) for a in xi_axes)
    if W.radial:
        # the envelope of a radial function is radial: its profile is the 1D
        # envelope of the even extension, which the 1D transform gives exactly
        r = _norm(Xi)
        ur, inv = np.unique(r, return_inverse=True)
        t = np.concatenate([-ur[::-1], ur[1:] if ur[0] == 0 else ur])
        prof = _ball_min(W, Y, _radial_points(np.abs(t), W.m, W.d))
        env = biconjugate(SampledFunction1D(t, prof)).values
        env_r = env[len(ur) - 1:] if ur[0] == 0 else env[len(ur):]
        vals = np.minimum(env_r[inv], _ball_min(W, Y, Xi))
        return SampledFunctionND(axes, vals.reshape(mesh[0].shape))
    vals = _ball_min(W, Y, Xi)
    f = SampledFunctionND(axes, vals.reshape(mesh[0].shape))
    return biconjugate(f)


def _radial_points(r, m, d):
    Xi = np.zeros((len(r), m, d))
    Xi[:, 0, 0] = r
    return Xi


def _ball_min(W, Y, Xi):
    if W.split is not None:
        V0, V1, a_fn = W.split
        amin = float(np.min(a_fn(Y)))
        with np.errstate(invalid="ignore"):
            return V0(Xi) + np.where(amin > 0, amin * V1(Xi), 0.0)
    vals = np.full(len(Xi), np.inf)
    for y in Y:
        vals = np.minimum(vals, W(y[None], Xi))
    return vals


def check_stability(W: Integrand, domain: Domain, M: float = 2.0,
                    delta_list: Sequence[float] = tuple(2.0 ** -k for k in range(3, 10)),
                    n_x: int = 32, n_xi: int = 33, n_scales: int = 3, seed: int = 0,
                    n_slices: int = 3, region: Optional[str] = None,
                    quad_h: float = 0.05, n_adapt: int = 4) -> StabilityReport:
    """(a4) by sampling.

    For every sampled ``x`` and ``delta`` the convexified ball infimum is
    built on nested square ``xi``-windows of half-width
    ``M delta^(-d/p) 16^-j`` (capped at ``1e6``). ``C_M`` is the largest ratio
    ``W / omega`` over the samples outside the optional split region (and at
    least 1); ``alpha_M(x)`` is the largest residual ``(W - C_M omega)^+``.
    For ``m d > 4`` random 2D slices through 0 are used instead (heuristic).

    Besides the fixed x-samples, each ``delta`` adds the ``n_adapt`` points
    of a larger pool with the largest unconvexified ratio
    ``W(x, xi) / min_y W(y, xi)`` on the window boundary; the ratio
    concentrates within ``delta`` of where the x-dependence is steep, which
    fixed samples miss as ``delta`` shrinks. These points enter ``C_M`` only.

    ``region`` restricts the x-samples: ``"far"`` or ``"near"`` relative to
    ``W.growth.stability_split``.
    """
    if not M > 1:
        raise ValueError("M must exceed 1")
    if any(not 0 < dl <= 0.5 for dl in delta_list):
        raise ValueError("deltas must lie in (0, 1/2]")
    p, d = W.growth.p, W.d
    k = W.m * W.d
    rng = np.random.default_rng(seed)
    X = domain_samples(domain, n_x, seed)
    Xc = domain_samples(domain, 16 * n_x, seed + 1) if n_adapt else X[:0]
    split = W.growth.stability_split
    notes = []
    capped = False
    records = []  # (x index, delta, xi, W, omega, near)
    x_of = {}
    for dl in delta_list:
        R = M * dl ** (-d / p)
        if R > WINDOW_CAP:
            R = WINDOW_CAP
            capped = True
        near = split(X, dl) if split is not None else np.zeros(len(X), bool)
        Xa = _worst_screen(W, domain, Xc, dl, R, n_adapt, split, region)
        Xd = np.vstack([X, Xa]) if len(Xa) else X
        near = np.concatenate([near, np.zeros(len(Xa), bool)])
        for ix, x in enumerate(Xd):
            if region == "far" and near[ix]:
                continue
            if region == "near" and not near[ix]:
                continue
            for j in range(n_scales):
                Rj = R * 16.0 ** (-j)
                ax = np.linspace(-Rj, Rj, n_xi)
                if k <= 4:
                    n_ax = n_xi if k <= 2 else (17 if k == 3 else 9)
                    ax = np.linspace(-Rj, Rj, n_ax)
                    om = omega_envelope(W, x, dl, [ax] * k, domain)
                    Xi = om.points().reshape(-1, W.m, W.d)
                    omv = om.values.ravel()
                else:
                    Xi_l, om_l = [], []
                    for _ in range(n_slices):
                        B, _ = np.linalg.qr(rng.normal(size=(k, 2)))
                        om2 = _omega_slice(W, x, dl, ax, B, domain)
                        S, T = np.meshgrid(ax, ax, indexing="ij")
                        pts = S.reshape(-1, 1) * B[:, 0] + T.reshape(-1, 1) * B[:, 1]
                        Xi_l.append(pts.reshape(-1, W.m, W.d))
                        om_l.append(om2.ravel())
                    Xi, omv = np.concatenate(Xi_l), np.concatenate(om_l)
                inwin = _norm(Xi) <= R * (1 + 1e-12)
                Xi, omv = Xi[inwin], omv[inwin]
                wv = W(x[None], Xi)
                records.append((ix, dl, Xi, wv, omv, bool(near[ix])))
                x_of[id(Xi)] = x.tolist()
    if k > 4:
        notes.append("xi-slices used (m d > 4): heuristic")
    if capped:
        notes.append(f"window radius capped at {WINDOW_CAP:g}")
    # stage 1: multiplicative constant from the regular samples
    C_M = 1.0
    witness = None
    per_delta = {dl: 1.0 for dl in delta_list}
    for ix, dl, Xi, wv, omv, nr in records:
        if nr:
            continue
        top = np.max(np.where(np.isfinite(omv), omv, 0.0)) if len(omv) else 0.0
        ok = (omv > 1e-9 * max(top, 1e-300)) & np.isfinite(omv) & np.isfinite(wv)
        if not ok.any():
            continue
        ratio = wv[ok] / omv[ok]
        i = int(np.argmax(ratio))
        per_delta[dl] = max(per_delta[dl], float(ratio[i]))
        if ratio[i] > C_M:
            C_M = float(ratio[i])
            witness = (x_of[id(Xi)], Xi[ok][i].tolist(), dl)
    # stage 2: additive remainder (fixed samples only)
    alpha_sup = np.zeros(len(X))
    for ix, dl, Xi, wv, omv, nr in records:
        if ix >= len(X):
            continue
        with np.errstate(invalid="ignore"):
            res = np.where(np.isinf(wv) & np.isinf(omv), 0.0, wv - C_M * omv)
        alpha_sup[ix] = max(alpha_sup[ix], float(np.max(np.maximum(res, 0.0), initial=0.0)))
    vol = _domain_volume(domain, quad_h)
    used = np.array(sorted({r[0] for r in records if r[0] < len(X)}), int)
    alpha_norm = float(np.mean(alpha_sup[used]) * vol) if len(used) else 0.0
    ratios = [per_delta[dl] for dl in sorted(delta_list, reverse=True)]
    diverging = len(ratios) >= 3 and all(b >= a for a, b in zip(ratios, ratios[1:])) and ratios[-1] > 10 * ratios[0]
    passed = bool(math.isfinite(C_M) and math.isfinite(alpha_norm) and not diverging)
    if diverging:
        notes.append("ratio W/omega grows as delta shrinks")
    return StabilityReport(M, list(delta_list), C_M, alpha_norm,
                           float(np.max(alpha_sup[used], initial=0.0)) if len(used) else 0.0,
                           witness, passed, ratios, notes)


def _worst_screen(W, domain, Xc, dl, R, n, split, region, keep: int = 8):
    """Points with the largest ``W(x, xi) / min_{B_dl(x)} W(y, xi)`` at ``|xi| = R, R/16``.

    The pool is screened, then the best ``keep`` points are jittered at
    scales ``64 dl, 16 dl, 4 dl, dl`` and rescreened (greedy zoom-in).
    """
    if not n or not len(Xc) or region == "near":
        return Xc[:0]
    k = W.m * W.d
    E = np.vstack([np.eye(k), -np.eye(k)])
    Xi = np.concatenate([R * E, R / 16 * E]).reshape(-1, W.m, W.d)
    d = Xc.shape[1]
    offs = 2 * qmc.Sobol(d, scramble=False).random(16)[1:] - 1

    def score(P):
        out = np.zeros(len(P))
        for i, x in enumerate(P):
            Y = _ball_y_samples(domain, x, dl, n=16)
            lo = np.full(len(Xi), np.inf)
            for y in Y:
                lo = np.minimum(lo, W(np.broadcast_to(y, (len(Xi), d)), Xi))
            wx = W(np.broadcast_to(x, (len(Xi), d)), Xi)
            with np.errstate(invalid="ignore", divide="ignore"):
                r = np.where(np.isfinite(wx) & np.isfinite(lo) & (lo > 0), wx / lo, 0.0)
            out[i] = float(r.max(initial=0.0))
        return out

    def admissible(P):
        P = P[domain.contains(P)]
        return P[~split(P, dl)] if split is not None and len(P) else P

    P = admissible(Xc)
    S = score(P)
    for scale in (64, 16, 4, 1):
        top = np.argsort(-S, kind="stable")[:keep]
        P, S = P[top], S[top]
        J = admissible((P[:, None] + scale * dl * offs[None]).reshape(-1, d))
        if len(J):
            P, S = np.vstack([P, J]), np.concatenate([S, score(J)])
    top = np.argsort(-S, kind="stable")[:n]
    return P[top[S[top] > 1.0]]


def _omega_slice(W, x, dl, ax, B, domain):
    Y = _ball_y_samples(domain, x, dl)
    S, T = np.meshgrid(ax, ax, indexing="ij")
    pts = (S.reshape(-1, 1) * B[:, 0] + T.reshape(-1, 1) * B[:, 1]).reshape(-1, W.m, W.d)
    vals = np.full(len(pts), np.inf)
    for y in Y:
        vals = np.minimum(vals, W(y[None], pts))
    return biconjugate(SampledFunctionND((ax, ax), vals.reshape(len(ax), len(ax)))).values


def _domain_volume(domain, h):
    vol = getattr(domain, "volume", None)
    if callable(vol):
        return float(vol())
    _, w = _quadrature(domain, h)
    return float(w.sum())


def check_interior_continuity(W: Integrand, g: Field, s: float, domain: Domain, h: float = 0.02,
                              theta_ladder: Sequence[float] = tuple(2.0 ** -j for j in range(-4, 21)),
                              n_dir: int = 64) -> CheckReport:
    """Finds ``r > 0`` with ``sup_{|xi| <= r} W(., Dg + xi)`` integrable.

    ``theta`` is the largest value on a dyadic ladder whose local sup is
    integrable; the candidate radius is ``r = (s - 1) theta / s``.
    """
    if not s > 1:
        raise ValueError("s must exceed 1")
    P, w = _quadrature(domain, h)
    Dg = g.grads(P)
    det = {"s": s}
    I_s = _integrate(W(P, s * Dg), w)
    det["energy_at_s_Dg"] = I_s
    if not math.isfinite(I_s):
        i = int(np.argmax(~np.isfinite(W(P, s * Dg))))
        return CheckReport("interior_continuity", False, dict(det, reason="integral of W(x, s Dg) is infinite"),
                           {"x": P[i].tolist()})
    theta = None
    for th in sorted(theta_ladder, reverse=True):
        if math.isfinite(_integrate(local_sup(W, P, th, n_dir=n_dir), w)):
            theta = th
            break
    if theta is None:
        return CheckReport("interior_continuity", False, dict(det, reason="no theta with integrable local sup"))
    r = (s - 1) * theta / s
    det.update(theta=theta, r=r)
    sup_int = _integrate(local_sup(W, P, r, center=Dg, n_dir=n_dir), w)
    det["local_sup_integral"] = sup_int
    return CheckReport("interior_continuity", bool(math.isfinite(sup_int)), det)


def check_assumptions(W: Integrand, domain: Domain, M_list: Sequence[float] = (2.0, 8.0), seed: int = 0,
                      n_points: int = 8) -> dict:
    """Run (a1)-(a4) and return their reports plus an overall ``passed`` flag."""
    X = domain_samples(domain, n_points, seed=seed)
    reports = {
        "a1": check_convexity_slices(W, X, seed=seed).to_json(),
        "a2": check_lower_growth(W, domain, seed=seed).to_json(),
        "a3": check_upper_growth(W, domain, seed=seed).to_json(),
    }
    stab = [check_stability(W, domain, M=M, seed=seed) for M in M_list]
    reports["a4"] = [s.to_json() for s in stab]
    passed = all(reports[k]["passed"] for k in ("a1", "a2", "a3")) and all(s.passed for s in stab)
    return {"integrand": W.to_json(), "passed": bool(passed), "reports": reports,
            "fitted_C_M": {str(s.M): s.fitted_C_M for s in stab}}
