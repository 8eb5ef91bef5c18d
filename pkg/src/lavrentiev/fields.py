"""Vector-valued fields on R^d and their samples on tensor grids.

A field maps points ``(n, d)`` to values ``(n, m)`` and gradients
``(n, m, d)``. Fields compose lazily (affine rescaling, extension by
zero, linear combinations); ``GridFunction`` freezes a field on the nodes
of a ``TensorGrid`` together with its nodal gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

__all__ = [
    "Field",
    "AnalyticField",
    "AffineField",
    "ZeroField",
    "LinearCombination",
    "ScaledField",
    "ZeroExtendedField",
    "TensorGrid",
    "GridFunction",
    "random_trig_field",
]


class Field:
    dim: int
    ncomp: int

    def values(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grads(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, X):
        return self.values(np.atleast_2d(X))

    def __add__(self, other: "Field") -> "Field":
        return LinearCombination([(1.0, self), (1.0, other)])

    def __sub__(self, other: "Field") -> "Field":
        return LinearCombination([(1.0, self), (-1.0, other)])

    def __rmul__(self, c: float) -> "Field":
        return LinearCombination([(float(c), self)])


class AnalyticField(Field):
    """Field from vectorized callables.

    ``value_fn(X)`` returns ``(n,)`` or ``(n, m)``; ``grad_fn(X)`` returns
    ``(n, d)`` or ``(n, m, d)``.
    """

    def __init__(self, value_fn: Callable, grad_fn: Callable, dim: int, ncomp: int = 1):
        self.value_fn = value_fn
        self.grad_fn = grad_fn
        self.dim = dim
        self.ncomp = ncomp

    def values(self, X):
        v = np.asarray(self.value_fn(X), dtype=float)
        return v.reshape(len(X), self.ncomp)

    def grads(self, X):
        g = np.asarray(self.grad_fn(X), dtype=float)
        return g.reshape(len(X), self.ncomp, self.dim)


class AffineField(Field):
    """``u(x) = A x + b`` with ``A`` of shape ``(m, d)``."""

    def __init__(self, A, b=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.ncomp, self.dim = self.A.shape
        self.b = np.zeros(self.ncomp) if b is None else np.asarray(b, dtype=float).reshape(self.ncomp)

    def values(self, X):
        return X @ self.A.T + self.b

    def grads(self, X):
        return np.broadcast_to(self.A, (len(X),) + self.A.shape).copy()


class ZeroField(Field):
    def __init__(self, dim: int, ncomp: int = 1):
        self.dim = dim
        self.ncomp = ncomp

    def values(self, X):
        return np.zeros((len(X), self.ncomp))

    def grads(self, X):
        return np.zeros((len(X), self.ncomp, self.dim))


class LinearCombination(Field):
    def __init__(self, terms: Sequence[tuple]):
        self.terms = [(float(c), f) for c, f in terms]
        self.dim = self.terms[0][1].dim
        self.ncomp = self.terms[0][1].ncomp

    def values(self, X):
        return sum(c * f.values(X) for c, f in self.terms)

    def grads(self, X):
        return sum(c * f.grads(X) for c, f in self.terms)


class ScaledField(Field):
    """``x -> rho * f(z + (x - z) / rho)``; its gradient is ``Df`` at the preimage."""

    def __init__(self, base: Field, center, rho: float):
        self.base = base
        self.center = np.asarray(center, dtype=float)
        self.rho = float(rho)
        self.dim = base.dim
        self.ncomp = base.ncomp

    def preimage(self, X):
        return self.center + (X - self.center) / self.rho

    def values(self, X):
        return self.rho * self.base.values(self.preimage(X))

    def grads(self, X):
        return self.base.grads(self.preimage(X))


class ZeroExtendedField(Field):
    """Field set to zero (with zero gradient) outside a domain."""

    def __init__(self, base: Field, domain):
        self.base = base
        self.domain = domain
        self.dim = base.dim
        self.ncomp = base.ncomp

    def values(self, X):
        out = np.zeros((len(X), self.ncomp))
        inside = self.domain.contains(X)
        if inside.any():
            out[inside] = self.base.values(X[inside])
        return out

    def grads(self, X):
        out = np.zeros((len(X), self.ncomp, self.dim))
        inside = self.domain.contains(X)
        if inside.any():
            out[inside] = self.base.grads(X[inside])
        return out


@dataclass(frozen=True)
class TensorGrid:
    """Uniform tensor grid with spacing ``h`` whose nodes include ``origin``."""

    lo: tuple
    hi: tuple
    h: float

    @classmethod
    def covering(cls, bbox_lo, bbox_hi, h: float, pad: float = 0.0, origin=None) -> "TensorGrid":
        lo = np.asarray(bbox_lo, float) - pad
        hi = np.asarray(bbox_hi, float) + pad
        o = np.zeros_like(lo) if origin is None else np.asarray(origin, float)
        lo = o + np.floor((lo - o) / h) * h
        hi = o + np.ceil((hi - o) / h) * h
        return cls(tuple(lo.tolist()), tuple(hi.tolist()), float(h))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def axes(self):
        return [self.lo[k] + self.h * np.arange(self.shape[k]) for k in range(self.dim)]

    @property
    def shape(self):
        return tuple(int(round((b - a) / self.h)) + 1 for a, b in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


class GridFunction:
    """Nodal values ``(N, m)`` and nodal gradients ``(N, m, d)`` on a grid."""

    def __init__(self, grid: TensorGrid, values: np.ndarray, grads: np.ndarray):
        self.grid = grid
        self.values = np.asarray(values, dtype=float)
        self.grads = np.asarray(grads, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.grads.shape != (grid.size, self.values.shape[1], grid.dim):
            raise ValueError("gradient array has the wrong shape")

    @property
    def ncomp(self) -> int:
        return self.values.shape[1]

    @classmethod
    def sample(cls, field: Field, grid: TensorGrid) -> "GridFunction":
        X = grid.points()
        return cls(grid, field.values(X), field.grads(X))

    @classmethod
    def from_values(cls, grid: TensorGrid, values) -> "GridFunction":
        """Nodal values only; gradients by second-order finite differences."""
        v = np.asarray(values, dtype=float).reshape(grid.shape + (-1,))
        m = v.shape[-1]
        g = np.gradient(v, grid.h, axis=tuple(range(grid.dim)))
        g = np.stack(g if grid.dim > 1 else [g], axis=-1)
        return cls(grid, v.reshape(-1, m), g.reshape(grid.size, m, grid.dim))

    def as_field(self) -> Field:
        """Multilinear interpolation of values and gradients (zero off-grid)."""
        shape = self.grid.shape + (self.ncomp,)
        vi = RegularGridInterpolator(self.grid.axes, self.values.reshape(shape),
                                     bounds_error=False, fill_value=0.0)
        gi = RegularGridInterpolator(self.grid.axes,
                                     self.grads.reshape(self.grid.shape + (-1,)),
                                     bounds_error=False, fill_value=0.0)
        m, d = self.ncomp, self.grid.dim
        return AnalyticField(vi, lambda X: gi(X).reshape(len(X), m, d), d, m)


def random_trig_field(dim: int, ncomp: int, rng, n_modes: int = 4, scale: float = 1.0,
                      freq: float = 3.0) -> AnalyticField:
    """Smooth random field ``sum_k a_k sin(w_k . x / scale + phi_k)`` per component."""
    W = rng.normal(size=(ncomp, n_modes, dim)) * freq / scale
    A = rng.normal(size=(ncomp, n_modes))
    Ph = rng.uniform(0, 2 * np.pi, size=(ncomp, n_modes))
    off = rng.normal(size=ncomp)

    def val(X):
        arg = np.einsum("nd,ckd->nck", X, W) + Ph[None]
        return np.sum(A[None] * np.sin(arg), axis=2) + off[None]

    def grad(X):
        arg = np.einsum("nd,ckd->nck", X, W) + Ph[None]
        return np.einsum("nck,ckd->ncd", A[None] * np.cos(arg), W)

    return AnalyticField(val, grad, dim, ncomp)
