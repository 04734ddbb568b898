"""Scalar functionals of a grid density.

Entropy ``S``, relative entropy ``D`` against the standard Gaussian, Fisher
information ``I``, relative Fisher information ``J`` (full and truncated to
``|x| >= R``), the tail second moment ``psi(R)``, the moment generating
function and the L1 distance to the Gaussian.

Fisher information of a density with kinks is infinite.  On a grid that
shows up as a value that keeps growing under refinement, so :func:`fisher`
compares the central-difference integral at spacings ``h`` and ``2h`` and
returns ``math.inf`` when they disagree by more than 10%.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .errors import CheckFailure, CltlabError
from .grid import (
    GridDensity,
    abs_moment,
    gaussian_values,
    integrate,
    integrate_core,
    integrate_tails,
    mean,
    variance,
)

LOG_FLOOR = 1e-300
FISHER_SUPPORT = 1e-12
FISHER_STABILITY = 0.10
GAUSSIAN_ENTROPY = 0.5 * math.log(2.0 * math.pi * math.e)
INEQ_SLACK = 1e-8


def _xlogx(v: np.ndarray) -> np.ndarray:
    out = np.zeros_like(v)
    pos = v > LOG_FLOOR
    out[pos] = v[pos] * np.log(v[pos])
    return out


def entropy(rho: GridDensity) -> float:
    """``-int rho ln rho`` with ``0 ln 0 = 0``."""
    return -integrate(_xlogx(rho.values), rho.grid)


def rel_entropy(rho: GridDensity) -> float:
    """``int rho ln(rho / g)``, computed literally (no standardization shortcut)."""
    v, x = rho.values, rho.x
    integrand = np.zeros_like(v)
    pos = v > LOG_FLOOR
    log_g = -0.5 * x[pos] ** 2 - 0.5 * math.log(2.0 * math.pi)
    integrand[pos] = v[pos] * (np.log(v[pos]) - log_g)
    return integrate(integrand, rho.grid)


def _fisher_integrand(v: np.ndarray, x: np.ndarray, h: float, drift: bool) -> np.ndarray:
    root = np.sqrt(v)
    d = np.gradient(root, h)
    if drift:
        d = d + 0.5 * x * root
    out = 4.0 * d * d
    out[v <= FISHER_SUPPORT * v.max()] = 0.0
    return out


def rel_fisher_integrand(rho: GridDensity) -> np.ndarray:
    """Pointwise ``4 |(d/dx + x/2) sqrt rho|^2`` on the Fisher support."""
    return _fisher_integrand(rho.values, rho.x, rho.grid.spacing, True)


def _fisher_raw(rho: GridDensity, stride: int = 1) -> float:
    v = rho.values[::stride]
    x = rho.x[::stride]
    h = rho.grid.spacing * stride
    return float(trapezoid(_fisher_integrand(v, x, h, False), dx=h))


def fisher_is_stable(rho: GridDensity) -> bool:
    fine, coarse = _fisher_raw(rho, 1), _fisher_raw(rho, 2)
    return abs(fine - coarse) <= FISHER_STABILITY * abs(fine)


def fisher(rho: GridDensity) -> float:
    """``4 int |(sqrt rho)'|^2``; ``math.inf`` when the value is not resolved."""
    fine = _fisher_raw(rho, 1)
    if abs(fine - _fisher_raw(rho, 2)) > FISHER_STABILITY * abs(fine):
        return math.inf
    return fine


def rel_fisher(rho: GridDensity, R: float | None = None) -> float:
    """``4 int |(d/dx + x/2) sqrt rho|^2``, over ``|x| >= R`` when R is given.

    Inherits the instability sentinel of :func:`fisher`.
    """
    if not fisher_is_stable(rho):
        return math.inf
    integrand = rel_fisher_integrand(rho)
    if R is None:
        return integrate(integrand, rho.grid)
    return integrate_tails(integrand, rho.grid, R)


def psi(rho: GridDensity, R: float) -> float:
    """Tail second moment ``int_{|x| >= R} x^2 rho``."""
    if R < 0:
        raise CltlabError(f"psi needs R >= 0, got {R!r}")
    return integrate_tails(rho.x**2 * rho.values, rho.grid, R)


def mgf(rho: GridDensity, alpha: float) -> float:
    """``int e^{alpha x} rho``."""
    if abs(alpha) * rho.grid.half_width >= 700:
        raise CltlabError(f"e^(alpha x) overflows on the window for alpha={alpha!r}")
    return integrate(np.exp(alpha * rho.x) * rho.values, rho.grid)


def l1_to_gaussian(rho: GridDensity, R: float | None = None) -> float:
    diff = np.abs(rho.values - gaussian_values(rho.x))
    if R is None:
        return integrate(diff, rho.grid)
    return integrate_core(diff, rho.grid, R)


def _finite(v):
    return v if math.isfinite(v) else "inf"


@dataclass(frozen=True)
class FunctionalReport:
    entropy: float
    rel_entropy: float
    fisher: float
    rel_fisher: float
    l1_to_g: float
    moments: dict = field(default_factory=dict)
    psi_at: dict = field(default_factory=dict)
    mgf_at: dict = field(default_factory=dict)
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if self.rel_entropy < -1e-10:
            raise CheckFailure("rel_entropy_nonnegative", self.rel_entropy, 0.0, 1e-10)
        if self.rel_fisher < -1e-10:
            raise CheckFailure("rel_fisher_nonnegative", self.rel_fisher, 0.0, 1e-10)
        if abs(self.mean) <= 1e-8 and abs(self.variance - 1.0) <= 1e-8:
            gap = GAUSSIAN_ENTROPY - self.entropy
            if abs(self.rel_entropy - gap) > 1e-8:
                raise CheckFailure("rel_entropy_identity", self.rel_entropy, gap, 1e-8)
        if self.l1_to_g**2 > 2.0 * self.rel_entropy + INEQ_SLACK:
            raise CheckFailure("pinsker", self.l1_to_g**2, 2.0 * self.rel_entropy, INEQ_SLACK)
        if self.rel_entropy > 0.5 * self.rel_fisher + INEQ_SLACK:
            raise CheckFailure("stam", self.rel_entropy, 0.5 * self.rel_fisher, INEQ_SLACK)

    def to_dict(self) -> dict:
        return {
            "entropy": self.entropy,
            "rel_entropy": self.rel_entropy,
            "fisher": _finite(self.fisher),
            "rel_fisher": _finite(self.rel_fisher),
            "l1_to_g": self.l1_to_g,
            "moments": {str(k): v for k, v in self.moments.items()},
            "psi": {repr(float(k)): v for k, v in self.psi_at.items()},
            "mgf": {repr(float(k)): v for k, v in self.mgf_at.items()},
        }


def report(rho: GridDensity, Rs=(), alphas=(), ks=(4,)) -> FunctionalReport:
    return FunctionalReport(
        entropy=entropy(rho),
        rel_entropy=rel_entropy(rho),
        fisher=fisher(rho),
        rel_fisher=rel_fisher(rho),
        l1_to_g=l1_to_gaussian(rho),
        moments={int(k): abs_moment(rho, k) for k in ks},
        psi_at={float(R): psi(rho, R) for R in Rs},
        mgf_at={float(a): mgf(rho, a) for a in alphas},
        mean=mean(rho),
        variance=variance(rho),
    )
