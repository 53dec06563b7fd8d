"""Numerical laboratory for single-point boundary gradient steepening.

Subpackages by role: geometry (domains, charts, offset map), hypotheses
(geometric certification), flowops (boundary-fitted differential operators
and auxiliary-function algebra), initial (bump construction), solver (masked
cut-cell time stepping and the auxiliary Poisson solve), diagnostics
(monitors and reporting), plots (report figures), cli.
"""

__version__ = "0.1.0"
