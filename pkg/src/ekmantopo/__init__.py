"""Ekman boundary layers of fast-rotating fluids over shore topography.

Closed-form approximate solutions of the rotating Stokes system over a
convex island with sloped bathymetry, the verification suites that pin their
exactness and convergence rates, and a direct axisymmetric solver used to
cross-check the slope-modulated Ekman pumping law

    lambda_phi(rho) = sqrt(2 beta) / phi(rho) * (1 + (1 + phi'^2)^(1/4)) / 2.
"""

__version__ = "0.1.0"
