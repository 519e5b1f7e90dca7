"""Numerical laboratory for boundary controllability of 1-D linearized
compressible Navier-Stokes systems (barotropic and non-barotropic) on the
2*pi-periodic interval.

The subpackages follow the pipeline: ``model`` (coefficients and arithmetic
predicates) -> ``spectrum`` (mode-matrix eigenstructure) -> ``fields``
(Fourier fields and weighted norms) -> ``evolution`` (closed-form states and
boundary observations) -> ``observability`` (energies, quotients, Ingham
audit) -> ``control`` (moment-method synthesis) -> ``counterexamples``
(negative results realized constructively) -> ``oracle`` (finite-difference
cross-check) -> ``cli`` (batch driver).
"""

__version__ = "0.1.0"
