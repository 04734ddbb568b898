"""Closed-form density families (the zoo) and their sampling onto a grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

from .errors import ProfileError
from .grid import Grid, GridDensity, gaussian_values


@dataclass(frozen=True)
class Gaussian:
    t: float = 1.0
    kind = "gaussian"

    def __post_init__(self):
        if not self.t > 0:
            raise ProfileError(f"gaussian variance must be positive, got {self.t!r}")

    def sample(self, grid: Grid) -> np.ndarray:
        return gaussian_values(grid.x, self.t)


@dataclass(frozen=True)
class Uniform:
    """Uniform density on ``[-a, a]``.

    A step cannot be sampled exactly.  Points strictly inside get weight 1 and
    a single fractional weight on the edge points (the outermost inside point
    or the first outside point, symmetrically) is solved in closed form so the
    discrete measure carries the exact second moment ``a^2/3``.
    """

    a: float = math.sqrt(3.0)
    kind = "uniform"

    def __post_init__(self):
        if not self.a > 0:
            raise ProfileError(f"uniform half-width must be positive, got {self.a!r}")

    def sample(self, grid: Grid) -> np.ndarray:
        x, h, a = grid.x, grid.spacing, self.a
        if a + 2 * h >= grid.half_width:
            raise ProfileError("uniform support does not fit inside the grid window")
        ax = np.abs(x)
        inside = ax <= a
        if inside.sum() < 4:
            raise ProfileError("uniform support is narrower than the grid spacing")
        edge_in = inside & (ax > a - h)
        edge_out = ~inside & (ax < a + h)
        target = a * a / 3.0
        w = inside.astype(float)
        num, den = float(np.sum(x[inside] ** 2)), float(inside.sum())
        # variance(e) = (num + e*B) / (den + e*D), linear-fractional in the edge weight e
        b_out, d_out = float(np.sum(x[edge_out] ** 2)), float(edge_out.sum())
        e = (target * den - num) / (b_out - target * d_out)
        if 0.0 <= e <= 1.0:
            w[edge_out] = e
        else:
            b_in, d_in = float(np.sum(x[edge_in] ** 2)), float(edge_in.sum())
            e = (target * den - num) / (b_in - target * d_in)
            w[edge_in] = 1.0 + min(max(e, -1.0), 0.0)
        return w / (2.0 * a)


@dataclass(frozen=True)
class LaplaceSmoothed:
    """Laplace density of scale ``b`` convolved with a centered Gaussian of
    variance ``smoothing``.  Exponentially (not Gaussian) localized."""

    b: float = 0.25
    smoothing: float = 0.375
    kind = "laplace_smoothed"

    def __post_init__(self):
        if not self.b > 0:
            raise ProfileError(f"laplace scale must be positive, got {self.b!r}")
        if not self.smoothing > 0:
            raise ProfileError(f"smoothing variance must be positive, got {self.smoothing!r}")

    def sample(self, grid: Grid) -> np.ndarray:
        x = grid.x
        r, s = 1.0 / self.b, self.smoothing
        root = math.sqrt(s)
        # (r/2) e^{r^2 s/2} [e^{-rx} Phi((x - rs)/sqrt s) + e^{rx} Phi(-(x + rs)/sqrt s)]
        base = math.log(r / 2.0) + 0.5 * r * r * s
        lo = base - r * x + log_ndtr((x - r * s) / root)
        hi = base + r * x + log_ndtr(-(x + r * s) / root)
        return np.exp(np.logaddexp(lo, hi))


@dataclass(frozen=True)
class GaussianMixture:
    weights: tuple
    means: tuple
    variances: tuple
    kind = "gaussian_mixture"

    def __post_init__(self):
        w, m, v = (tuple(float(t) for t in seq) for seq in (self.weights, self.means, self.variances))
        if not (len(w) == len(m) == len(v)) or not w:
            raise ProfileError("mixture weights, means and variances must have equal nonzero length")
        if any(t < 0 for t in w) or not sum(w) > 0:
            raise ProfileError("mixture weights must be nonnegative with positive sum")
        if any(not t > 0 for t in v):
            raise ProfileError("mixture variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    def sample(self, grid: Grid) -> np.ndarray:
        out = np.zeros(grid.points)
        for w, m, v in zip(self.weights, self.means, self.variances):
            out += w * gaussian_values(grid.x - m, v)
        return out / sum(self.weights)


@dataclass(frozen=True)
class GFQuartic:
    """``g(x) exp(-s x^4)`` (up to normalization): Gaussian times a log-concave factor."""

    s: float = 0.1
    kind = "gF_quartic"

    def __post_init__(self):
        if not self.s >= 0:
            raise ProfileError(f"quartic coefficient must be nonnegative, got {self.s!r}")

    def sample(self, grid: Grid) -> np.ndarray:
        x = grid.x
        return gaussian_values(x) * np.exp(-self.s * x**4)


PROFILE_KINDS = {
    cls.kind: cls for cls in (Gaussian, Uniform, LaplaceSmoothed, GaussianMixture, GFQuartic)
}


def from_profile(grid: Grid, profile) -> GridDensity:
    """Sample a zoo profile onto ``grid`` and normalize to unit mass."""
    return GridDensity.from_values(grid, profile.sample(grid))


def make_profile(kind: str, **params):
    try:
        cls = PROFILE_KINDS[kind]
    except KeyError:
        raise ProfileError(f"unknown profile kind {kind!r}; known: {sorted(PROFILE_KINDS)}") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ProfileError(f"bad parameters for {kind}: {exc}") from None


# Named standard members used throughout the experiments.  Mixture weights are
# unequal on purpose: a symmetric mixture has vanishing third cumulant and its
# relative entropy decays like 1/N^2, not 1/N.
BIMODAL = GaussianMixture(weights=(0.3, 0.7), means=(-1.0, 1.0), variances=(0.25, 0.25))
SYMMETRIC_BIMODAL = GaussianMixture(weights=(0.5, 0.5), means=(-1.0, 1.0), variances=(0.25, 0.25))
# Scale mixture with variance 1 and fourth moment 5: 0.9 a + 0.1 b = 1, 3(0.9 a^2 + 0.1 b^2) = 5.
_B_KURT = 1.0 + math.sqrt(6.0)
KURTOTIC = GaussianMixture(
    weights=(0.9, 0.1), means=(0.0, 0.0), variances=((1.0 - 0.1 * _B_KURT) / 0.9, _B_KURT)
)
# Laplace share of the variance is 1/4, so e^{alpha x} stays integrable up to
# alpha = 2 sqrt 2 after standardization.
LAPLACE = LaplaceSmoothed(b=0.25, smoothing=0.375)
UNIFORM = Uniform(math.sqrt(3.0))
QUARTIC = GFQuartic(0.1)
