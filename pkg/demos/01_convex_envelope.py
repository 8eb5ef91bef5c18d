"""Convex envelopes by discrete Legendre-Fenchel transforms.

A double well is flattened on [-1, 1]; the non-convex exponential double
phase integrand is compared with its convexified version along a ray.
"""
import numpy as np

from lavrentiev.convex_transform import SampledFunction1D, biconjugate, check_convexity, epigraph_hull_oracle
from lavrentiev.integrand import make_exp_double_phase

x = np.linspace(-2, 2, 401)
f = SampledFunction1D(x, (x ** 2 - 1) ** 2)
fb = biconjugate(f)
print("double well: max f** on [-1, 1] =", float(np.max(np.abs(fb.values[np.abs(x) <= 1]))))
print("agreement with the hull oracle:", float(np.max(np.abs(fb.values - epigraph_hull_oracle(f).values))))

W = make_exp_double_phase(2, 0.5, 3)
s = np.linspace(0, 8, 9)
Xi = np.zeros((s.size, 1, 2))
Xi[:, 0, 0] = s
X = np.tile([[0.9, 0.0]], (s.size, 1))
print("\n|xi|   G(x, xi)     W(x, xi)    (x = (0.9, 0))")
for r, g, w in zip(s, W.nonconvex(X, Xi), W(X, Xi)):
    print(f"{r:4.1f} {g:11.5f} {w:11.5f}")
ray = np.linspace(0, 8, 401)
Xi = np.zeros((ray.size, 1, 2))
Xi[:, 0, 0] = ray
Xr = np.tile([[0.9, 0.0]], (ray.size, 1))
print("G convex along the ray:", check_convexity(SampledFunction1D(ray, W.nonconvex(Xr, Xi))).is_convex)
print("W convex along the ray:", check_convexity(SampledFunction1D(ray, W(Xr, Xi))).is_convex)
print("tangent point x_* =", W.params["x_star"], " C_* =", W.params["C_star"])
