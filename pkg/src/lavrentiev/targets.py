"""Closed-form target fields on the unit disk (and balls in general)."""

from __future__ import annotations

import numpy as np

from .fields import AffineField, AnalyticField

__all__ = ["power_singularity", "smooth_bump", "c1_bump", "affine"]


def power_singularity(c: float = 1.0, x0=(0.0, 0.0), beta: float = 0.2, radius: float = 1.0) -> AnalyticField:
    """``c (1 - |x|^2/R^2) |x - x0|^beta``; vanishes on ``|x| = R``.

    Its gradient lies in ``L^s`` for ``s < d / (1 - beta)``. At ``x0`` the
    gradient is set to zero.
    """
    x0 = np.asarray(x0, float)
    d = x0.size

    def val(X):
        r2 = np.sum(X ** 2, axis=1) / radius ** 2
        rho = np.linalg.norm(X - x0, axis=1)
        return c * (1 - r2) * rho ** beta

    def grad(X):
        r2 = np.sum(X ** 2, axis=1) / radius ** 2
        D = X - x0
        rho = np.linalg.norm(D, axis=1)
        safe = np.where(rho > 0, rho, 1.0)
        t1 = (-2 * X / radius ** 2) * (rho ** beta)[:, None]
        t2 = ((1 - r2) * beta * safe ** (beta - 2))[:, None] * D
        g = c * (t1 + np.where(rho[:, None] > 0, t2, 0.0))
        return g

    return AnalyticField(val, grad, d, 1)


def smooth_bump(c: float = 1.0, radius: float = 1.0, d: int = 2) -> AnalyticField:
    """``c (1 - |x|^2/R^2)^2``."""

    def val(X):
        return c * (1 - np.sum(X ** 2, axis=1) / radius ** 2) ** 2

    def grad(X):
        s = 1 - np.sum(X ** 2, axis=1) / radius ** 2
        return c * 2 * s[:, None] * (-2 * X / radius ** 2)

    return AnalyticField(val, grad, d, 1)


def c1_bump(c: float = 1.0, center=(0.0, 0.0), radius: float = 0.5) -> AnalyticField:
    """Compactly supported ``C^1`` bump ``c (1 - |x - a|^2/r^2)_+^2``."""
    center = np.asarray(center, float)

    def val(X):
        s = np.maximum(0.0, 1 - np.sum((X - center) ** 2, axis=1) / radius ** 2)
        return c * s ** 2

    def grad(X):
        s = np.maximum(0.0, 1 - np.sum((X - center) ** 2, axis=1) / radius ** 2)
        return c * 2 * s[:, None] * (-2 * (X - center) / radius ** 2)

    return AnalyticField(val, grad, center.size, 1)


def affine(A, b=None) -> AffineField:
    return AffineField(A, b)
