import math
from functools import lru_cache

import pytest
from hypothesis import settings

from cltlab.grid import build_grid, default_grid, standardize
from cltlab.profiles import (
    BIMODAL,
    KURTOTIC,
    LAPLACE,
    QUARTIC,
    SYMMETRIC_BIMODAL,
    UNIFORM,
    Gaussian,
    from_profile,
)
from cltlab.spectral import mollify

settings.register_profile("cltlab", max_examples=25, deadline=None)
settings.load_profile("cltlab")


@lru_cache(maxsize=None)
def zoo_density(name: str):
    """Standardized zoo member on the default grid (uniform is mollified)."""
    grid = default_grid()
    if name == "gaussian":
        return from_profile(grid, Gaussian(1.0))
    if name == "mollified_uniform":
        return mollify(from_profile(grid, UNIFORM), 0.05)
    profile = {"bimodal": BIMODAL, "symmetric_bimodal": SYMMETRIC_BIMODAL, "kurtotic": KURTOTIC,
               "laplace": LAPLACE, "quartic": QUARTIC}[name]
    return standardize(from_profile(grid, profile))


ZOO = ("gaussian", "mollified_uniform", "bimodal", "symmetric_bimodal", "kurtotic", "laplace", "quartic")


@pytest.fixture(scope="session")
def grid():
    return default_grid()


@pytest.fixture(scope="session")
def g(grid):
    return from_profile(grid, Gaussian(1.0))


@pytest.fixture(scope="session")
def uniform(grid):
    return from_profile(grid, UNIFORM)


@pytest.fixture(scope="session")
def mollified_uniform():
    return zoo_density("mollified_uniform")


@pytest.fixture(scope="session")
def bimodal():
    return zoo_density("bimodal")


@pytest.fixture(scope="session")
def fine_grid():
    """Grid fine enough to double the raw (discontinuous) uniform without ringing."""
    return build_grid(16.0, 2**20)


SQRT3 = math.sqrt(3.0)
