"""Limiting spectra of nonlinear random matrices M = (1/m) f(WX/sqrt(n0)) f(WX/sqrt(n0))*.

Modules:

activation  Gaussian functionals theta1, theta2 of an activation
cactus      exact moment formula from counts of admissible graphs
stieltjes   fixed-point equation for the Stieltjes transform, density, ridge trace
montecarlo  finite-size simulation and comparison with the limit
cli         the ``nlrmt`` command
"""
from .activation import ActivationSpec, ThetaParams, compute_thetas, make
from .cactus import MomentSeries, count_table, moment, moments
from .laws import SpectralDensity, mp_law
from .stieltjes import LawParams, density, ridge_trace, solve_G

__version__ = "0.1.0"

__all__ = [
    "ActivationSpec",
    "ThetaParams",
    "compute_thetas",
    "make",
    "MomentSeries",
    "count_table",
    "moment",
    "moments",
    "SpectralDensity",
    "mp_law",
    "LawParams",
    "density",
    "ridge_trace",
    "solve_G",
]
