"""Sampled checks of the structural assumptions on catalog integrands.

The stability check distinguishes a double phase integrand inside the
admissible range q/p <= 1 + alpha/d from one outside it: in the second case
the ratio W / omega grows like 1/delta.
"""
import numpy as np

from lavrentiev.domain import Ball
from lavrentiev.integrand import check_assumptions, check_stability, make_double_phase, make_exp_double_phase

disk = Ball((0.0, 0.0), 1.0)
rep = check_assumptions(make_exp_double_phase(2, 0.5, 3), disk)
print("exp double phase (p, q, alpha) = (2, 1/2, 3): passed =", rep["passed"])
print("  fitted C_M:", {k: round(v, 4) for k, v in rep["fitted_C_M"].items()}, " exp(1/4) =", round(np.exp(0.25), 4))

x1p = {"kind": "x1_plus"}
for p, q in ((2.0, 2.4), (1.5, 3.0)):
    W = make_double_phase(p, q, alpha=1, a_spec=x1p)
    st = check_stability(W, disk, M=2.0)
    print(f"\ndouble phase p={p}, q={q} (q/p = {q / p:.2f}, limit 1.5): passed = {st.passed}")
    print("  W/omega per delta = 2^-3 ... 2^-9:", [round(r, 2) for r in st.per_delta_ratio])
