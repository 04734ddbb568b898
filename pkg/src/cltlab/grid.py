"""Uniform grids, sampled densities, trapezoid quadrature and standardization.

Every density in cltlab is a :class:`GridDensity`: nonnegative samples on a
symmetric uniform grid ``x_i = -L + i h`` with a power-of-two point count,
normalized to unit trapezoid mass.  Instances are immutable; the sample array
is flagged read-only on construction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.interpolate import CubicSpline

from .errors import DegenerateDensityError, GridError, WindowTooSmallError

MASS_TOL = 1e-8
BOUNDARY_DECAY = 1e-12

DEFAULT_HALF_WIDTH = 16.0
DEFAULT_POINTS = 4096


@dataclass(frozen=True)
class Grid:
    half_width: float
    points: int

    def __post_init__(self):
        p = self.points
        if not isinstance(p, (int, np.integer)) or p < 256 or p & (p - 1):
            raise GridError(f"points must be a power of two >= 256, got {p!r}")
        if not self.half_width > 0 or not math.isfinite(self.half_width):
            raise GridError(f"half_width must be positive, got {self.half_width!r}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.points - 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = -self.half_width + self.spacing * np.arange(self.points)
        x.setflags(write=False)
        return x

    def refine(self) -> "Grid":
        return Grid(self.half_width, 2 * self.points)


def build_grid(half_width: float = DEFAULT_HALF_WIDTH, points: int = DEFAULT_POINTS) -> Grid:
    return Grid(float(half_width), int(points))


def default_grid() -> Grid:
    return build_grid()


def integrate(values: np.ndarray, grid: Grid) -> float:
    """Trapezoid rule on the grid."""
    return float(trapezoid(values, dx=grid.spacing))


def integrate_interval(values: np.ndarray, grid: Grid, lo: float, hi: float) -> float:
    """Integral over ``[lo, hi]`` of the piecewise-linear interpolant of ``values``.

    Agrees with :func:`integrate` on the full window and handles cut points
    between nodes exactly for the interpolant, so indicator-weighted integrals
    stay second-order accurate.
    """
    x0, h, n = -grid.half_width, grid.spacing, grid.points
    lo, hi = max(lo, x0), min(hi, grid.half_width)
    if hi <= lo:
        return 0.0
    y = np.asarray(values, dtype=float)
    cum = np.concatenate(([0.0], np.cumsum(0.5 * h * (y[1:] + y[:-1]))))

    def prim(t):
        j = min(int((t - x0) // h), n - 2)
        u = t - (x0 + j * h)
        slope = (y[j + 1] - y[j]) / h
        return cum[j] + u * y[j] + 0.5 * slope * u * u

    return float(prim(hi) - prim(lo))


def integrate_tails(values: np.ndarray, grid: Grid, radius: float) -> float:
    """Integral over ``|x| >= radius`` (the whole window when radius <= 0)."""
    if radius <= 0:
        return integrate(values, grid)
    L = grid.half_width
    return integrate_interval(values, grid, -L, -radius) + integrate_interval(values, grid, radius, L)


def integrate_core(values: np.ndarray, grid: Grid, radius: float) -> float:
    """Integral over ``|x| < radius``."""
    return integrate_interval(values, grid, -radius, radius)


def tail_profile(values: np.ndarray, grid: Grid):
    """``(R, int_{|x| >= R} values)`` at every nonnegative grid node in one pass.

    Agrees with :func:`integrate_tails` at the nodes.
    """
    x, h, half = grid.x, grid.spacing, grid.points // 2
    y = np.asarray(values, dtype=float)
    # the grid is symmetric with no node at 0: x[half + j] = -x[half - 1 - j]
    core = (
        cumulative_trapezoid(y[half:], dx=h, initial=0.0)
        + cumulative_trapezoid(y[:half][::-1], dx=h, initial=0.0)
        + 0.5 * h * (y[half - 1] + y[half])
    )
    return x[half:].copy(), np.maximum(integrate(y, grid) - core, 0.0)


@dataclass(frozen=True, eq=False)
class GridDensity:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.points,):
            raise GridError(f"expected {self.grid.points} samples, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise GridError("density samples must be finite")
        if np.any(v < 0):
            raise GridError(f"density samples must be nonnegative (min {v.min():.3e})")
        peak = v.max()
        if peak <= 0:
            raise DegenerateDensityError("density is identically zero")
        edge = max(v[0], v[-1])
        if edge >= BOUNDARY_DECAY * peak:
            raise WindowTooSmallError(
                f"boundary value {edge:.3e} >= {BOUNDARY_DECAY:g} x max {peak:.3e}; "
                f"widen the window beyond +-{self.grid.half_width}"
            )
        mass = integrate(v, self.grid)
        if abs(mass - 1.0) > MASS_TOL:
            raise GridError(f"density mass {mass!r} is not 1 within {MASS_TOL:g}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_values(cls, grid: Grid, values) -> "GridDensity":
        """Normalize raw nonnegative samples to unit mass."""
        v = np.asarray(values, dtype=float)
        mass = integrate(v, grid)
        if not mass > 0:
            raise DegenerateDensityError("samples carry no mass")
        return cls(grid, v / mass)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def __len__(self):
        return self.grid.points

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "rho"])
            for xi, ri in zip(self.x, self.values):
                w.writerow([f"{xi:.17g}", f"{ri:.17g}"])

    @classmethod
    def read_csv(cls, path) -> "GridDensity":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows[0] != ["x", "rho"]:
            raise GridError(f"unexpected CSV header {rows[0]!r}")
        data = np.array(rows[1:], dtype=float)
        grid = Grid(-float(data[0, 0]), len(data))
        return cls.from_values(grid, data[:, 1])


def gaussian_values(x: np.ndarray, t: float = 1.0) -> np.ndarray:
    """Centered Gaussian density with variance ``t``."""
    return np.exp(-0.5 * x * x / t) / math.sqrt(2.0 * math.pi * t)


def gaussian_density(grid: Grid, t: float = 1.0) -> GridDensity:
    return GridDensity.from_values(grid, gaussian_values(grid.x, t))


# ---------- moments ----------


def mass(rho: GridDensity) -> float:
    return integrate(rho.values, rho.grid)


def mean(rho: GridDensity) -> float:
    return integrate(rho.x * rho.values, rho.grid)


def variance(rho: GridDensity) -> float:
    return central_moment(rho, 2)


def moment(rho: GridDensity, k: int) -> float:
    """Raw moment of order ``k`` (signed)."""
    return integrate(rho.x**k * rho.values, rho.grid)


def abs_moment(rho: GridDensity, k: float) -> float:
    """``M_k = int |x|^k rho``; for standardized densities ``M_2 = 1``."""
    return integrate(np.abs(rho.x) ** k * rho.values, rho.grid)


def central_moment(rho: GridDensity, k: int) -> float:
    mu = mean(rho)
    return integrate((rho.x - mu) ** k * rho.values, rho.grid)


# ---------- standardization ----------

_STD_MEAN_TOL = 1e-12
_STD_VAR_TOL = 1e-10


def _is_standard(v: np.ndarray, grid: Grid) -> tuple[bool, float, float]:
    m0 = integrate(v, grid)
    mu = integrate(grid.x * v, grid) / m0
    var = integrate((grid.x - mu) ** 2 * v, grid) / m0
    ok = abs(mu) <= _STD_MEAN_TOL and abs(var - 1.0) <= _STD_VAR_TOL
    return ok, mu, var


def affine_resample(values: np.ndarray, grid: Grid, scale: float, shift: float) -> np.ndarray:
    """Samples of ``x -> values(scale * x + shift)`` by cubic-spline interpolation.

    Points mapped outside the window read as zero; spline undershoot below
    zero (only possible next to kinks) is clipped.
    """
    spline = CubicSpline(grid.x, values, bc_type="natural", extrapolate=False)
    out = spline(scale * grid.x + shift)
    out = np.nan_to_num(out, nan=0.0)
    return np.clip(out, 0.0, None)


def standardize(rho: GridDensity, max_iter: int = 6) -> GridDensity:
    """Affine pullback ``x -> sigma x + mu`` to mean 0, variance 1.

    The cubic resample is repeated until the moments sit within 1e-12 (mean)
    and 1e-10 (variance); an input already inside that band is only
    renormalized.
    """
    grid = rho.grid
    v = rho.values / integrate(rho.values, grid)
    for _ in range(max_iter):
        ok, mu, var = _is_standard(v, grid)
        if ok:
            break
        if not var > (2.0 * grid.spacing) ** 2:
            raise DegenerateDensityError(
                f"variance underflow: {var!r} is below the grid resolution"
            )
        sigma = math.sqrt(var)
        v = sigma * affine_resample(v, grid, sigma, mu)
        m0 = integrate(v, grid)
        if not m0 > 0:
            raise DegenerateDensityError("standardization lost all mass")
        v = v / m0
    return GridDensity.from_values(grid, v)


def is_standardized(rho: GridDensity, mean_tol: float = 1e-8, var_tol: float = 1e-6) -> bool:
    return abs(mean(rho)) <= mean_tol and abs(variance(rho) - 1.0) <= var_tol


def sup_distance(a: GridDensity, b: GridDensity) -> float:
    if a.grid != b.grid:
        raise GridError("densities live on different grids")
    return float(np.max(np.abs(a.values - b.values)))
