"""Discrete convex analysis on sampled functions.

Legendre-Fenchel conjugates, biconjugates (convex envelopes) and sampled
convexity certificates for functions given on tensor grids. Values are
extended reals: ``+inf`` encodes points outside the effective domain,
``-inf`` is rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, QhullError

__all__ = [
    "SampledFunction1D",
    "SampledFunctionND",
    "ConvexityReport",
    "legendre_1d",
    "biconjugate",
    "biconjugate_factorized",
    "conjugate_factorized",
    "cross_check_factorized",
    "check_convexity",
    "epigraph_hull_oracle",
]

MAX_DIM = 4


def _as_axis(a) -> np.ndarray:
    a = np.asarray(a, dtype=float).ravel()
    if a.size < 2:
        raise ValueError("a grid axis needs at least 2 nodes")
    if not np.all(np.diff(a) > 0):
        raise ValueError("grid axis must be strictly increasing")
    return a


def _check_values(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if np.any(np.isnan(values)):
        raise ValueError("values contain NaN")
    if np.any(values == -np.inf):
        raise ValueError("values must never be -inf")
    if not np.any(np.isfinite(values)):
        raise ValueError("empty effective domain")
    return values


@dataclass(frozen=True)
class SampledFunction1D:
    """Extended-real function sampled on an increasing 1D grid.

    ``window`` is the range of slopes inside which a conjugate computed
    from this sample is faithful to the underlying continuous function.
    """

    nodes: np.ndarray
    values: np.ndarray
    window: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        nodes = _as_axis(self.nodes)
        values = _check_values(self.values)
        if values.shape != nodes.shape:
            raise ValueError("nodes and values must have the same length")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.values)

    def to_nd(self) -> "SampledFunctionND":
        return SampledFunctionND((self.nodes,), self.values, self.window)

    def to_json(self) -> dict:
        return self.to_nd().to_json()

    @classmethod
    def from_json(cls, data: dict) -> "SampledFunction1D":
        f = SampledFunctionND.from_json(data)
        if f.ndim != 1:
            raise ValueError("expected a one-dimensional sampled function")
        return f.to_1d()


@dataclass(frozen=True)
class SampledFunctionND:
    """Extended-real function sampled on a tensor grid (dimension <= 4)."""

    axes: Tuple[np.ndarray, ...]
    values: np.ndarray
    window: Optional[object] = None

    def __post_init__(self):
        axes = tuple(_as_axis(a) for a in self.axes)
        if not 1 <= len(axes) <= MAX_DIM:
            raise ValueError(f"dimension must be between 1 and {MAX_DIM}; use slice sampling")
        values = _check_values(self.values)
        shape = tuple(a.size for a in axes)
        if values.shape != shape:
            values = values.reshape(shape)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", values)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    def points(self) -> np.ndarray:
        """Grid nodes as an ``(n, ndim)`` array in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def to_1d(self) -> SampledFunction1D:
        if self.ndim != 1:
            raise ValueError("not one-dimensional")
        return SampledFunction1D(self.axes[0], self.values, self.window)

    def to_json(self) -> dict:
        inf_mask = ~np.isfinite(self.values)
        return {
            "axes": [a.tolist() for a in self.axes],
            "values": np.where(inf_mask, 0.0, self.values).ravel().tolist(),
            "inf_mask": inf_mask.ravel().tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "SampledFunctionND":
        axes = [np.asarray(a, dtype=float) for a in data["axes"]]
        values = np.asarray(data["values"], dtype=float)
        mask = np.asarray(data.get("inf_mask", np.zeros(values.shape, bool)), dtype=bool)
        values = np.where(mask, np.inf, values)
        return cls(tuple(axes), values.reshape([a.size for a in axes]))


@dataclass
class ConvexityReport:
    is_convex: bool
    worst_violation: float
    witness: Optional[Tuple[tuple, tuple]]
    tolerance: float
    pairs_checked: int = 0

    def to_json(self) -> dict:
        return {
            "is_convex": self.is_convex,
            "worst_violation": self.worst_violation,
            "witness": self.witness,
            "tolerance": self.tolerance,
            "pairs_checked": self.pairs_checked,
        }


# --------------------------------------------------------------------------
# one-dimensional transforms


def _upper_envelope(x: np.ndarray, f: np.ndarray):
    """Upper envelope of the affine maps ``y -> x_j y - f_j``.

    ``x`` must be strictly increasing and ``f`` finite. Returns the indices
    of the lines that appear on the envelope (ordered by slope) and the
    breakpoints between consecutive envelope lines.
    """
    stack = []
    for j in range(x.size):
        while len(stack) >= 2:
            a, b = stack[-2], stack[-1]
            # b is dominated once the a/j crossing happens no later than a/b
            y_ab = (f[b] - f[a]) / (x[b] - x[a])
            y_bj = (f[j] - f[b]) / (x[j] - x[b])
            if y_bj <= y_ab:
                stack.pop()
            else:
                break
        stack.append(j)
    idx = np.asarray(stack, dtype=int)
    kinks = (f[idx[1:]] - f[idx[:-1]]) / (x[idx[1:]] - x[idx[:-1]])
    return idx, kinks


def _sweep(x, f, idx, kinks, y: np.ndarray) -> np.ndarray:
    """Evaluate the envelope on increasing ``y`` by a monotone pointer sweep."""
    out = np.empty(y.size)
    k = 0
    nk = kinks.size
    for i, yi in enumerate(y):
        while k < nk and kinks[k] < yi:
            k += 1
        j = idx[k]
        out[i] = x[j] * yi - f[j]
    return out


def _conjugate_row(x: np.ndarray, f: np.ndarray, y: np.ndarray) -> np.ndarray:
    """max_j (x_j y - f_j) for increasing ``y``; -inf when f is identically +inf."""
    fin = np.isfinite(f)
    if not fin.any():
        return np.full(y.size, -np.inf)
    xs, fs = x[fin], f[fin]
    idx, kinks = _upper_envelope(xs, fs)
    order = np.argsort(y, kind="stable")
    out = np.empty(y.size)
    out[order] = _sweep(xs, fs, idx, kinks, y[order])
    return out


def _slope_window(x: np.ndarray, f: np.ndarray) -> Tuple[float, float]:
    fin = np.isfinite(f)
    xs, fs = x[fin], f[fin]
    if xs.size < 2:
        return (0.0, 0.0)
    s = np.diff(fs) / np.diff(xs)
    return (float(s.min()), float(s.max()))


def legendre_1d(f: SampledFunction1D, dual_grid) -> SampledFunction1D:
    """Discrete Legendre-Fenchel transform ``g(y) = max_i (x_i y - f(x_i))``.

    Runs in O(n + m): the upper envelope of the affine pieces is built once
    and the (sorted) dual grid is swept with a monotone argmax pointer.

    Parameters
    ----------
    f : SampledFunction1D
        Function to transform; ``+inf`` entries are ignored.
    dual_grid : array_like
        Strictly increasing slopes at which to evaluate the conjugate.

    Returns
    -------
    SampledFunction1D
        The conjugate on ``dual_grid``. Its ``window`` holds the slope range
        of ``f`` inside which the transform is faithful.
    """
    y = _as_axis(dual_grid)
    if not f.finite.any():
        raise ValueError("empty effective domain")
    g = _conjugate_row(f.nodes, f.values, y)
    return SampledFunction1D(y, g, window=_slope_window(f.nodes, f.values))


def _biconjugate_1d(f: SampledFunction1D) -> np.ndarray:
    x, v = f.nodes, f.values
    fin = np.isfinite(v)
    xs, fs = x[fin], v[fin]
    out = np.full(x.size, np.inf)
    inside = (x >= xs[0]) & (x <= xs[-1])
    if xs.size == 1:
        out[fin] = v[fin]
        return out
    idx, kinks = _upper_envelope(xs, fs)
    # the conjugate is piecewise affine with breakpoints exactly at `kinks`,
    # so sampling it there makes the second transform exact on the grid
    if kinks.size == 1:
        j = idx[0]
        fstar = xs[j] * kinks[0] - fs[j]
        out[inside] = x[inside] * kinks[0] - fstar
    else:
        fstar = _sweep(xs, fs, idx, kinks, kinks)
        out[inside] = _conjugate_row(kinks, fstar, x[inside])
    return np.minimum(out, v)


# --------------------------------------------------------------------------
# tensor-grid transforms


def _apply_along_axis(values: np.ndarray, axis: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    moved = np.moveaxis(values, axis, -1)
    rows = moved.reshape(-1, moved.shape[-1])
    out = np.empty((rows.shape[0], y.size))
    for r in range(rows.shape[0]):
        out[r] = _conjugate_row(x, rows[r], y)
    out = out.reshape(moved.shape[:-1] + (y.size,))
    return np.moveaxis(out, -1, axis)


def conjugate_factorized(values: np.ndarray, axes: Sequence[np.ndarray],
                         dual_axes: Sequence[np.ndarray]) -> np.ndarray:
    """Conjugate on a tensor dual grid by successive 1D transforms.

    Uses ``f*(y) = max_{x_1} (x_1 y_1 + max_{x_2} (x_2 y_2 + ... - f))``:
    after the first axis the running partial maximum ``g`` is transformed
    as the conjugate of ``-g`` along each remaining axis.
    """
    g = np.asarray(values, dtype=float)
    for k in range(len(axes) - 1, -1, -1):
        src = g if k == len(axes) - 1 else -g
        src = np.where(np.isnan(src), np.inf, src)
        g = _apply_along_axis(src, k, np.asarray(axes[k]), np.asarray(dual_axes[k]))
    return g


def _default_dual_axes(f: SampledFunctionND, factor: int = 2):
    duals = []
    for k, ax in enumerate(f.axes):
        vals = np.moveaxis(f.values, k, -1)
        with np.errstate(invalid="ignore"):
            s = np.diff(vals, axis=-1) / np.diff(ax)
        s = s[np.isfinite(s)]
        if s.size == 0:
            lo, hi = -1.0, 1.0
        else:
            lo, hi = float(s.min()), float(s.max())
            if hi - lo < 1e-12:
                lo, hi = lo - 1.0, hi + 1.0
        duals.append(np.linspace(lo, hi, factor * ax.size + 1))
    return duals


def biconjugate_factorized(f: SampledFunctionND, dual_axes=None) -> SampledFunctionND:
    """Biconjugate through a tensor dual grid (exact only for separable data)."""
    if dual_axes is None:
        dual_axes = _default_dual_axes(f)
    fstar = conjugate_factorized(f.values, f.axes, dual_axes)
    fss = conjugate_factorized(fstar, dual_axes, f.axes)
    fss = np.minimum(fss, f.values)
    fss = np.where(np.isnan(fss), np.inf, fss)
    window = [(float(d[0]), float(d[-1])) for d in dual_axes]
    return SampledFunctionND(f.axes, fss, window=window)


def cross_check_factorized(f: SampledFunctionND, dual_axes=None) -> float:
    """Max deviation between factorized and joint brute-force conjugation.

    Both routes use the same dual grid, so any deviation measures a defect
    of the axis-by-axis decomposition rather than grid resolution.
    """
    if f.ndim > 2:
        raise ValueError("joint brute force is limited to dimension <= 2")
    if dual_axes is None:
        dual_axes = _default_dual_axes(f)
    fact = conjugate_factorized(f.values, f.axes, dual_axes)
    X = f.points()
    vals = f.values.ravel()
    fin = np.isfinite(vals)
    Y = SampledFunctionND(tuple(dual_axes), np.zeros([d.size for d in dual_axes])).points()
    joint = np.max(Y @ X[fin].T - vals[fin][None, :], axis=1)
    return float(np.max(np.abs(fact.ravel() - joint)))


def _biconjugate_hull(f: SampledFunctionND) -> np.ndarray:
    X = f.points()
    vals = f.values.ravel()
    fin = np.isfinite(vals)
    P = X[fin]
    fv = vals[fin]
    D = f.ndim
    out = np.full(vals.shape, np.inf)
    # domain of f** on the grid: nodes inside the convex hull of finite nodes
    if fin.all():
        inside = np.ones(vals.shape, bool)
    else:
        try:
            inside = Delaunay(P).find_simplex(X, tol=1e-12) >= 0
        except QhullError:
            inside = fin.copy()
    lifted = np.column_stack([P, fv])
    try:
        try:
            hull = ConvexHull(lifted)
        except QhullError:
            # badly scaled values: let qhull normalize each coordinate
            hull = ConvexHull(lifted, qhull_options="Qt QbB")
    except QhullError:
        # degenerate lifted cloud: the data are affine on an affine subset
        A = np.column_stack([P, np.ones(len(P))])
        coef, *_ = np.linalg.lstsq(A, fv, rcond=None)
        if np.max(np.abs(A @ coef - fv)) > 1e-9 * max(1.0, np.max(np.abs(fv))):
            raise
        out[inside] = np.column_stack([X[inside], np.ones(inside.sum())]) @ coef
        return np.minimum(out, vals).reshape(f.shape)
    eq = hull.equations
    lower = eq[:, D] < -1e-12
    normals = eq[lower, :D]
    last = eq[lower, D]
    offs = eq[lower, D + 1]
    # facet plane: n.x + n_D f + c = 0  =>  f = -(n.x + c) / n_D
    slopes = -normals / last[:, None]
    icpt = -offs / last
    Xi = X[inside]
    best = np.full(Xi.shape[0], -np.inf)
    chunk = max(1, 2_000_000 // max(1, slopes.shape[0]))
    for s in range(0, Xi.shape[0], chunk):
        block = Xi[s:s + chunk] @ slopes.T + icpt[None, :]
        best[s:s + chunk] = block.max(axis=1)
    out[inside] = best
    return np.minimum(out, vals).reshape(f.shape)


def biconjugate(f, method: str = "auto"):
    """Convex envelope ``f**`` on the grid of ``f``.

    Parameters
    ----------
    f : SampledFunction1D or SampledFunctionND
    method : {"auto", "hull", "factorized"}
        In 1D the transform is always exact (the first conjugate is sampled
        at its own breakpoints). In dimension 2-3 ``"auto"`` takes the lower
        hull of the lifted samples; dimension 4 uses the axis-by-axis
        transform on a tensor dual grid.

    Returns
    -------
    Same type as ``f``; satisfies ``f** <= f`` exactly.
    """
    one_d = isinstance(f, SampledFunction1D)
    nd = f.to_nd() if one_d else f
    if nd.ndim > MAX_DIM:
        raise ValueError("use slice sampling")
    if nd.ndim == 1:
        vals = _biconjugate_1d(nd.to_1d())
        res = SampledFunctionND(nd.axes, vals, window=_slope_window(nd.axes[0], nd.values))
    elif method == "factorized" or (method == "auto" and nd.ndim == MAX_DIM):
        res = biconjugate_factorized(nd)
    elif method in ("auto", "hull"):
        res = SampledFunctionND(nd.axes, _biconjugate_hull(nd))
    else:
        raise ValueError(f"unknown method {method!r}")
    return res.to_1d() if one_d else res


# --------------------------------------------------------------------------
# convexity certificate


def _pair_offsets(shape, budget: int):
    D = len(shape)
    kmax = max(1, min(s // 2 for s in shape))
    while True:
        rng = range(-kmax, kmax + 1)
        offs = np.array(np.meshgrid(*([list(rng)] * D), indexing="ij")).reshape(D, -1).T
        # keep one representative of each +-k pair
        nz = offs[np.any(offs != 0, axis=1)]
        first = nz[np.arange(len(nz)), np.argmax(nz != 0, axis=1)]
        offs = nz[first > 0]
        if len(offs) * int(np.prod(shape)) <= budget or kmax == 1:
            return offs
        kmax = max(1, kmax // 2)


def check_convexity(f, tol: float = 1e-8, n_random: int = 10_000, seed: int = 0,
                    pair_budget: int = 5_000_000) -> ConvexityReport:
    """Sampled midpoint-convexity certificate.

    Checks ``f((a+b)/2) <= (f(a) + f(b))/2`` on grid-aligned pairs whose
    midpoint is a grid node (every such pair in 1D, all offsets up to a
    budget in higher dimension) plus ``n_random`` random pairs with
    even index offsets. ``tol`` is relative to ``max(1, max|f|)``.
    """
    nd = f.to_nd() if isinstance(f, SampledFunction1D) else f
    V = nd.values
    shape = V.shape
    D = nd.ndim
    fin = V[np.isfinite(V)]
    scale = max(1.0, float(np.max(np.abs(fin))))
    atol = tol * scale
    worst = 0.0
    witness = None
    checked = 0

    def _score(ia, ib, im):
        nonlocal worst, witness, checked
        fa, fb, fm = V[tuple(ia.T)], V[tuple(ib.T)], V[tuple(im.T)]
        checked += len(ia)
        with np.errstate(invalid="ignore"):
            avg = 0.5 * (fa + fb)
            defect = np.where(np.isfinite(avg), fm - avg, -np.inf)
        if defect.size == 0:
            return
        j = int(np.argmax(defect))
        if defect[j] > worst:
            worst = float(defect[j])
            pa = tuple(float(nd.axes[d][ia[j, d]]) for d in range(D))
            pb = tuple(float(nd.axes[d][ib[j, d]]) for d in range(D))
            witness = (pa, pb)

    if D == 1:
        n = shape[0]
        for k in range(1, (n - 1) // 2 + 1):
            mid = np.arange(k, n - k)[:, None]
            _score(mid - k, mid + k, mid)
    else:
        idx = np.stack(np.meshgrid(*[np.arange(s) for s in shape], indexing="ij"), -1).reshape(-1, D)
        for off in _pair_offsets(shape, pair_budget):
            a = idx - off
            b = idx + off
            ok = np.all((a >= 0) & (a < shape) & (b >= 0) & (b < shape), axis=1)
            if ok.any():
                _score(a[ok], b[ok], idx[ok])
    if n_random:
        rng = np.random.default_rng(seed)
        sh = np.asarray(shape)
        a = rng.integers(0, sh, size=(n_random, D))
        b = rng.integers(0, sh, size=(n_random, D))
        b = b - ((b - a) % 2)  # even offset so the midpoint is a node
        b = np.clip(b, 0, sh - 1)
        b = np.where((b - a) % 2 == 1, a, b)
        _score(a, b, (a + b) // 2)
    return ConvexityReport(worst <= atol, worst, witness, atol, checked)


# --------------------------------------------------------------------------
# independent oracle


def epigraph_hull_oracle(f: SampledFunction1D) -> SampledFunction1D:
    """Lower convex hull of ``{(x_i, f_i) : f_i < inf}`` evaluated on the grid.

    Monotone-chain construction with exact cross-product orientation
    tests; nodes outside the hull's x-range get ``+inf``.
    """
    x, v = f.nodes, f.values
    fin = np.isfinite(v)
    if fin.sum() < 2:
        raise ValueError("need at least two finite values")
    pts = list(zip(x[fin].tolist(), v[fin].tolist()))
    hull = []
    for p in pts:
        while len(hull) >= 2:
            (ox, oy), (ax, ay) = hull[-2], hull[-1]
            cross = (ax - ox) * (p[1] - oy) - (ay - oy) * (p[0] - ox)
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    hx = np.array([h[0] for h in hull])
    hy = np.array([h[1] for h in hull])
    out = np.full(x.size, np.inf)
    inside = (x >= hx[0]) & (x <= hx[-1])
    out[inside] = np.interp(x[inside], hx, hy)
    return SampledFunction1D(x, out)
