"""Fourier-side engine: rescaled convolution, convolution powers, OU flow.

Characteristic functions live on the dual grid ``xi_k = (k - P/2) dxi`` with
``dxi = 2 pi / (P h)``.  The discrete transform of the samples is

    phi(xi) = h * sum_i rho_i exp(i xi x_i)

and is evaluated at *dilated* frequencies ``s * xi_k`` exactly (to rounding)
with a Bluestein chirp-z transform.  Dilation in Fourier space is how the
rescaling ``x -> x / lambda`` is carried out, so no real-space resampling is
involved in any of the maps below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CltlabError, GridError, ResolutionError
from .grid import Grid, GridDensity, standardize

RINGING_TOL = 1e-6
# Samples below this multiple of the peak are FFT round-off, not density.
NOISE_FLOOR = 64 * np.finfo(float).eps

_TWO_PI = 2 * np.longdouble(np.pi)


def _phase(arg_ld) -> np.ndarray:
    """exp(i * arg) with the argument reduced mod 2 pi in extended precision."""
    arg = np.asarray(arg_ld, dtype=np.longdouble) % _TWO_PI
    return np.exp(1j * arg.astype(float))


@lru_cache(maxsize=32)
def _bluestein_kernel(points: int, beta: float):
    """FFT of the conjugate chirp used to evaluate sum_n x_n exp(i beta n k)."""
    m = np.arange(-(points - 1), points, dtype=np.longdouble)
    b = np.conj(_phase(np.longdouble(beta) * m * m / 2))
    size = 2 * points
    padded = np.zeros(size, dtype=complex)
    padded[:points] = b[points - 1:]
    padded[size - (points - 1):] = b[: points - 1]
    n = np.arange(points, dtype=np.longdouble)
    chirp = _phase(np.longdouble(beta) * n * n / 2)
    return np.fft.fft(padded), chirp


def _zoom_dft(v: np.ndarray, beta: float) -> np.ndarray:
    points = v.shape[0]
    kernel_hat, chirp = _bluestein_kernel(points, beta)
    conv = np.fft.ifft(np.fft.fft(v * chirp, 2 * points) * kernel_hat)[:points]
    return chirp * conv


@lru_cache(maxsize=32)
def _scaled_phases(points: int, spacing: float, half_width: float, scale: float):
    """Phase factors for phi(scale * xi_k) = h e^{-i s xi_k L} sum_i rho_i e^{i beta (k - P/2) i}."""
    half = points // 2
    idx = np.arange(points, dtype=np.longdouble)
    beta = np.longdouble(scale) * _TWO_PI / points
    pre = _phase(-beta * half * idx)
    # s * xi_k * L with L dxi = pi (P - 1) / P for the symmetric grid
    lphase = np.longdouble(scale) * (idx - half) * np.longdouble(np.pi) * (points - 1) / points
    post = _phase(-lphase)
    return float(beta), pre, post


def characteristic_function(values: np.ndarray, grid: Grid, scale: float = 1.0) -> np.ndarray:
    """phi(scale * xi_k) for every dual-grid frequency, evaluated exactly."""
    beta, pre, post = _scaled_phases(grid.points, grid.spacing, grid.half_width, float(scale))
    if scale == 1.0:
        # beta = 2 pi / P: the zoom transform reduces to a plain inverse FFT
        signs = np.where(np.arange(grid.points) % 2, -1.0, 1.0)
        return grid.spacing * post * (grid.points * np.fft.ifft(values * signs))
    return grid.spacing * post * _zoom_dft(values * pre, beta)


def dual_grid(grid: Grid) -> np.ndarray:
    dxi = 2.0 * math.pi / (grid.points * grid.spacing)
    return (np.arange(grid.points) - grid.points // 2) * dxi


@dataclass(frozen=True, eq=False)
class SpectralDensity:
    grid: Grid
    phi: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=complex)
        if phi.shape != (self.grid.points,):
            raise GridError("spectral samples do not match the grid")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def xi(self) -> np.ndarray:
        return dual_grid(self.grid)

    @property
    def at_zero(self) -> complex:
        return complex(self.phi[self.grid.points // 2])


@dataclass(frozen=True)
class ConvolutionAngle:
    """Weights ``cos(theta), sin(theta)`` of the rotated sum; pi/4 is the CLT map."""

    theta: float = math.pi / 4

    def __post_init__(self):
        if not 0.0 < self.theta < math.pi / 2:
            raise CltlabError(f"theta must lie in (0, pi/2), got {self.theta!r}")

    @property
    def lam(self) -> float:
        if self.theta == math.pi / 4:
            return math.sqrt(0.5)
        return math.cos(self.theta)

    @property
    def mu(self) -> float:
        if self.theta == math.pi / 4:
            return math.sqrt(0.5)
        return math.sin(self.theta)


DOUBLING = ConvolutionAngle()


def to_spectral(rho: GridDensity) -> SpectralDensity:
    return SpectralDensity(rho.grid, characteristic_function(rho.values, rho.grid))


def _inverse(phi: np.ndarray, grid: Grid) -> np.ndarray:
    _, _, post = _scaled_phases(grid.points, grid.spacing, grid.half_width, 1.0)
    signs = np.where(np.arange(grid.points) % 2, -1.0, 1.0)
    vals = np.fft.fft(phi * np.conj(post)) * signs / (grid.points * grid.spacing)
    return vals.real


def _repair(values: np.ndarray, grid: Grid) -> GridDensity:
    """Clip sub-tolerance negative ringing and round-off, renormalize."""
    low = values.min()
    if low < -RINGING_TOL:
        raise ResolutionError(
            f"negative ringing {low:.3e} beyond {RINGING_TOL:g}: grid resolution insufficient"
        )
    v = np.where(values < NOISE_FLOOR * values.max(), 0.0, values)
    return GridDensity.from_values(grid, v)


def from_spectral(spec: SpectralDensity) -> GridDensity:
    if abs(spec.at_zero - 1.0) > 1e-6:
        raise CltlabError(f"phi(0) = {spec.at_zero!r} is not 1")
    return _repair(_inverse(spec.phi, spec.grid), spec.grid)


def rescaled_convolve(rho1: GridDensity, rho2: GridDensity,
                      angle: ConvolutionAngle = DOUBLING) -> GridDensity:
    """Density of ``cos(theta) X1 + sin(theta) X2`` for independent X1 ~ rho1, X2 ~ rho2."""
    if rho1.grid != rho2.grid:
        raise GridError("rescaled_convolve needs a shared grid")
    grid = rho1.grid
    p1 = characteristic_function(rho1.values, grid, angle.lam)
    if rho2 is rho1 and angle.lam == angle.mu:
        p2 = p1
    else:
        p2 = characteristic_function(rho2.values, grid, angle.mu)
    return _repair(_inverse(p1 * p2, grid), grid)


def double(rho: GridDensity) -> GridDensity:
    """One CLT doubling step ``rho -> rho (*) rho`` at theta = pi/4."""
    return rescaled_convolve(rho, rho, DOUBLING)


def n_fold_rescaled(rho: GridDensity, n: int) -> GridDensity:
    """Density of ``(X_1 + ... + X_n) / sqrt(n)``, via the power phi(xi / sqrt n)^n."""
    if int(n) != n or n < 1:
        raise CltlabError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    if n == 1:
        return rho
    phi = characteristic_function(rho.values, rho.grid, 1.0 / math.sqrt(n))
    return _repair(_inverse(phi**n, rho.grid), rho.grid)


def iterated_doubling(rho: GridDensity, k: int) -> GridDensity:
    for _ in range(k):
        rho = double(rho)
    return rho


def ou_flow(rho: GridDensity, t: float) -> GridDensity:
    """Adjoint OU semigroup: density of ``e^{-t} X + sqrt(1 - e^{-2t}) G``."""
    if t < 0:
        raise CltlabError(f"OU time must be nonnegative, got {t!r}")
    if t == 0:
        return rho
    grid = rho.grid
    xi = dual_grid(grid)
    decay = math.exp(-t)
    phi = characteristic_function(rho.values, grid, decay)
    phi = phi * np.exp(-0.5 * (-math.expm1(-2.0 * t)) * xi * xi)
    return _repair(_inverse(phi, grid), grid)


def mollify(rho: GridDensity, t: float) -> GridDensity:
    """``rho (*) g_t`` followed by standardization.

    For centered input this is the density of ``(X + sqrt(t) G) / sqrt(1 + t)``,
    computed in one spectral step.
    """
    if not t > 0:
        raise CltlabError(f"mollification variance must be positive, got {t!r}")
    grid = rho.grid
    xi = dual_grid(grid)
    scale = 1.0 / math.sqrt(1.0 + t)
    phi = characteristic_function(rho.values, grid, scale)
    phi = phi * np.exp(-0.5 * (t / (1.0 + t)) * xi * xi)
    return standardize(_repair(_inverse(phi, grid), grid))


def spectral_mass(spec: SpectralDensity) -> float:
    return float(spec.at_zero.real)

