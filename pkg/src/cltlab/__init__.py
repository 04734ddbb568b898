"""Numerical laboratory for the entropic central limit theorem on a fixed grid."""

from .errors import (
    CheckFailure,
    CltlabError,
    ConfigError,
    DegenerateDensityError,
    GridError,
    InfiniteFisherError,
    ProfileError,
    ResolutionError,
    WindowTooSmallError,
)
from .functionals import entropy, fisher, mgf, psi, rel_entropy, rel_fisher, report
from .grid import Grid, GridDensity, build_grid, default_grid, gaussian_density, standardize
from .profiles import from_profile, make_profile
from .spectral import double, iterated_doubling, n_fold_rescaled, ou_flow, rescaled_convolve

__all__ = [
    "CheckFailure", "CltlabError", "ConfigError", "DegenerateDensityError", "GridError",
    "InfiniteFisherError", "ProfileError", "ResolutionError", "WindowTooSmallError",
    "entropy", "fisher", "mgf", "psi", "rel_entropy", "rel_fisher", "report",
    "Grid", "GridDensity", "build_grid", "default_grid", "gaussian_density", "standardize",
    "from_profile", "make_profile",
    "double", "iterated_doubling", "n_fold_rescaled", "ou_flow", "rescaled_convolve",
]
