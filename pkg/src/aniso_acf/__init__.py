"""Numerical laboratory for Alt-Caffarelli-Friedman monotonicity with anisotropic operators.

Modules
-------
core          anisotropy matrices, pair reduction, kernels and pointwise identities
spectral      arc, band and cap eigenvalues on spheres; partition exponents
functional    ACF-type radial profiles and auxiliary inequality checks
segregation   competition-diffusion solvers and beta-sweep diagnostics
witness       explicit homogeneous segregated pairs with degree sum below 2
cli, io       command line and report bundles
"""
__version__ = "0.1.0"

from .core import AffineMap, AnisotropyMatrix, SpdMatrix, gamma, reduce_pair
from .errors import ConvergenceError, HypothesisViolation, QuadratureError
from .grid import Grid, SampledField

__all__ = [
    "AffineMap",
    "AnisotropyMatrix",
    "ConvergenceError",
    "Grid",
    "HypothesisViolation",
    "QuadratureError",
    "SampledField",
    "SpdMatrix",
    "__version__",
    "gamma",
    "reduce_pair",
]
