"""Numerical companion for the absence of a Lavrentiev gap.

Modules
-------
convex_transform
    Discrete Legendre-Fenchel transforms and convex envelopes.
integrand
    Integrand catalog and the assumption checkers.
domain
    Domains, Lipschitz charts, coverings and the scaling maps.
cutoff
    Radial cut-offs adapted to a finite family of Sobolev functions.
recovery
    Recovery sequences and energy-convergence studies.
gap_solver
    P1 minimization and the gap probe.
cli
    Command-line runner.
"""

__version__ = "0.1.0"
