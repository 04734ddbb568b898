"""Propagation of localization along the doubling map.

Exponential localization is tracked through the moment generating function,
polynomial localization through ``M_4`` and the tail second moment ``psi``,
and Gaussian localization through the factorization ``rho = g F`` with ``F``
log-concave.  Each sweep returns a small frozen report; ``failures()`` lists
every violated check as a :class:`~cltlab.errors.CheckFailure` without raising,
``assert_ok()`` raises the first one.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .errors import CheckFailure, CltlabError
from .grid import (
    Grid,
    GridDensity,
    abs_moment,
    central_moment,
    gaussian_values,
    integrate,
    tail_profile,
)
from .functionals import mgf, psi
from .spectral import ConvolutionAngle, double, n_fold_rescaled, rescaled_convolve

CORE_FRACTION = 1e-10
LOGCONCAVE_TOL = 1e-6
IDENTITY_DEFECT = 1e-3
EVEN_TOL = 1e-6
PSI_EPS = 0.1
# Second differences of ln(rho) divide sample noise (~1e-16 of the peak, so
# ~1e-6 relative at the core edge) by the squared step; a step of ~0.05 keeps
# that below 1e-3 while staying exact for quadratic ln(rho).
CURVATURE_STEP = 0.05


class _Checked:
    """Mixin for reports carrying a list of failed checks."""

    def failures(self) -> list:
        return list(self.failed)

    @property
    def ok(self) -> bool:
        return not self.failed

    def assert_ok(self):
        if self.failed:
            raise self.failed[0]


def doubling_levels(n_max: int) -> list[int]:
    """Powers of two ``1, 2, 4, ...`` not exceeding ``n_max``."""
    if n_max < 1:
        raise CltlabError(f"n_max must be >= 1, got {n_max!r}")
    out, n = [], 1
    while n <= n_max:
        out.append(n)
        n *= 2
    return out


def _doubling_sequence(rho: GridDensity, ns):
    """Yield ``(n, rho_n)`` for the powers of two in ``ns`` by repeated doubling."""
    ns = sorted(set(int(n) for n in ns))
    if any(n < 1 or n & (n - 1) for n in ns):
        raise CltlabError(f"doubling levels must be powers of two, got {ns!r}")
    cur, n = rho, 1
    for target in ns:
        while n < target:
            cur, n = double(cur), 2 * n
        yield n, cur


# ---------- exponential localization ----------


@dataclass(frozen=True)
class MGFPropagation(_Checked):
    """``L_{rho_n}(alpha)`` two ways and its margin against ``2 e^{alpha^2/2}``."""

    direct: dict       # (n, alpha) -> quadrature on rho_n
    identity: dict     # (n, alpha) -> L_rho(alpha/sqrt n)^n
    margin: dict       # (n, alpha) -> direct / (2 e^{alpha^2/2})
    failed: tuple = ()

    def rel_defect(self, key) -> float:
        d, i = self.direct[key], self.identity[key]
        return abs(d - i) / abs(i)

    def max_rel_defect(self) -> float:
        return max(self.rel_defect(k) for k in self.direct)

    def rows(self):
        for (n, a) in sorted(self.direct):
            yield n, a, self.margin[(n, a)]


def mgf_propagation(rho: GridDensity, n_list, alphas, A: float | None = None) -> MGFPropagation:
    """Check the MGF identity and the exponential-localization bound.

    ``rho_n`` is the direct ``n``-fold rescaled convolution, so ``n`` need not
    be a power of two.  Alphas at or beyond ``A`` are evaluated but exempt
    from the margin check.
    """
    direct, ident, margin, failed = {}, {}, {}, []
    for n in n_list:
        rho_n = n_fold_rescaled(rho, n)
        for a in alphas:
            key = (int(n), float(a))
            d = mgf(rho_n, a)
            i = mgf(rho, a / math.sqrt(n)) ** n
            direct[key], ident[key] = d, i
            margin[key] = d / (2.0 * math.exp(0.5 * a * a))
            if abs(d - i) > IDENTITY_DEFECT * abs(i):
                failed.append(CheckFailure("mgf_identity", d, i, IDENTITY_DEFECT, level=n,
                                           detail=f"alpha={a}"))
            if (A is None or a < A) and margin[key] > 1.0:
                failed.append(CheckFailure("mgf_bound", d, 2.0 * math.exp(0.5 * a * a), 0.0,
                                           level=n, detail=f"alpha={a}"))
    return MGFPropagation(direct, ident, margin, tuple(failed))


# ---------- polynomial localization ----------


def _skewness(rho: GridDensity) -> float:
    var = central_moment(rho, 2)
    return central_moment(rho, 3) / var**1.5


def m4_recursion_check(rho: GridDensity, eta: GridDensity, theta: float = math.pi / 4):
    """Fourth moment of ``cos(theta) Y + sin(theta) X`` (Y ~ eta, X ~ rho), predicted and measured.

    For even standardized inputs the cross terms vanish and

        M4 = cos^4 M4(eta) + 6 cos^2 sin^2 + sin^4 M4(rho).
    """
    for name, d in (("rho", rho), ("eta", eta)):
        if abs(_skewness(d)) > EVEN_TOL:
            raise CltlabError(f"{name} is not even (skewness {_skewness(d):.3e})")
    m4r, m4e = abs_moment(rho, 4), abs_moment(eta, 4)
    if theta == 0.0:
        return m4e, m4e
    if theta == math.pi / 2:
        return m4r, m4r
    angle = ConvolutionAngle(theta)
    c, s = angle.lam, angle.mu
    predicted = c**4 * m4e + 6.0 * c * c * s * s + s**4 * m4r
    measured = abs_moment(rescaled_convolve(eta, rho, angle), 4)
    return predicted, measured


@dataclass(frozen=True)
class MomentPropagation(_Checked):
    ns: tuple
    m4: tuple
    m_n0: tuple
    N0: int
    m4_bound: float
    failed: tuple = ()

    @property
    def sup_m_n0(self) -> float:
        return max(self.m_n0)


def moment_propagation(rho: GridDensity, n_max: int, N0: int = 4) -> MomentPropagation:
    """``M_4`` and ``M_{N0}`` along the doubling sequence ``n = 1, 2, 4, ... <= n_max``.

    Checks the upper bound ``max{M4(rho), 9}``, the lower bound
    ``min{M4(rho), 3}``, and that ``|M4 - 3|`` never grows.
    """
    ns, m4s, mks = [], [], []
    for n, rho_n in _doubling_sequence(rho, doubling_levels(n_max)):
        ns.append(n)
        m4s.append(abs_moment(rho_n, 4))
        mks.append(abs_moment(rho_n, N0))
    upper = max(m4s[0], 9.0)
    lower = min(m4s[0], 3.0)
    failed = []
    for n, m in zip(ns, m4s):
        if m > upper + 1e-6:
            failed.append(CheckFailure("m4_upper", m, upper, 1e-6, level=n))
        if m < lower - 1e-6:
            failed.append(CheckFailure("m4_lower", m, lower, 1e-6, level=n))
    for (n, prev), cur in zip(zip(ns, m4s), m4s[1:]):
        if abs(cur - 3.0) > abs(prev - 3.0) + 1e-9:
            failed.append(CheckFailure("m4_approach", abs(cur - 3.0), abs(prev - 3.0), 1e-9,
                                       level=2 * n))
    return MomentPropagation(tuple(ns), tuple(m4s), tuple(mks), int(N0), upper, tuple(failed))


def psi_curve(rho: GridDensity):
    """``(R, psi(R))`` at every nonnegative grid node."""
    return tail_profile(rho.x**2 * rho.values, rho.grid)


def psi_moment_integral(rho: GridDensity, p: float, eps: float = PSI_EPS) -> float:
    """``int_1^L psi(R) R^(p - 3 - eps) dR`` by trapezoid over the grid nodes."""
    R, ps = psi_curve(rho)
    keep = R >= 1.0
    R, ps = R[keep], ps[keep]
    return float(trapezoid(ps * R ** (p - 3.0 - eps), R))


@dataclass(frozen=True)
class PsiPropagation(_Checked):
    tables: dict      # n -> {R: psi}
    integrals: dict   # n -> int_1^L psi R^(p-3-eps)
    bound: float
    p: float
    failed: tuple = ()

    @property
    def sup_integral(self) -> float:
        return max(self.integrals.values())


def psi_propagation(rho: GridDensity, n_list, R_list, p: float, eps: float = PSI_EPS) -> PsiPropagation:
    """Tail second moments along the doubling sequence and their ``p``-weighted integral.

    The uniform-in-``n`` bound is taken as ``3 max(I_1, I_g)`` where ``I_1``
    is the integral for the starting density and ``I_g`` the Gaussian value on
    the same grid, mirroring the ``max{M4(rho), 9} = max{M4(rho), 3 M4(g)}``
    form of the fourth-moment bound.
    """
    g = GridDensity.from_values(rho.grid, gaussian_values(rho.x))
    i_g = psi_moment_integral(g, p, eps)
    tables, integrals = {}, {}
    for n, rho_n in _doubling_sequence(rho, n_list):
        tables[n] = {float(R): psi(rho_n, R) for R in R_list}
        integrals[n] = psi_moment_integral(rho_n, p, eps)
    first = integrals[min(integrals)]
    bound = 3.0 * max(first, i_g)
    failed = [CheckFailure("psi_integral_bound", v, bound, 0.0, level=n)
              for n, v in integrals.items() if v > bound]
    for n, tab in tables.items():
        Rs = sorted(tab)
        for a, b in zip(Rs, Rs[1:]):
            if tab[b] > tab[a] + 1e-12:
                failed.append(CheckFailure("psi_monotone", tab[b], tab[a], 1e-12, level=n,
                                           detail=f"R={b}"))
    return PsiPropagation(tables, integrals, bound, float(p), tuple(failed))


# ---------- Gaussian localization and log-concavity ----------


def _core_slice(v: np.ndarray) -> slice:
    idx = np.flatnonzero(v > CORE_FRACTION * v.max())
    if idx.size < 3:
        raise CltlabError("core region is empty")
    return slice(int(idx[0]), int(idx[-1]) + 1)


def _second_difference(f: np.ndarray, h: float) -> np.ndarray:
    """Central second difference with step ``k h``, ``k h ~ CURVATURE_STEP``.

    The first and last ``k`` points reuse the nearest interior value.
    """
    k = max(1, int(round(CURVATURE_STEP / h)))
    if f.size < 2 * k + 1:
        raise CltlabError("core region is too narrow for the curvature stencil")
    d2 = np.empty_like(f)
    d2[k:-k] = (f[2 * k:] - 2.0 * f[k:-k] + f[:-2 * k]) / (k * h) ** 2
    d2[:k], d2[-k:] = d2[k], d2[-k - 1]
    return d2


@dataclass(frozen=True, eq=False)
class LogConcaveFactor:
    """``F = rho / g`` on the core ``rho > 1e-10 max`` and its ``(ln F)''``."""

    grid: Grid
    core: slice
    F_values: np.ndarray
    second_log_derivative: np.ndarray
    core_radius: float

    @property
    def x(self) -> np.ndarray:
        return self.grid.x[self.core]

    @property
    def max_second_log_derivative(self) -> float:
        return float(self.second_log_derivative.max())

    @property
    def is_logconcave(self) -> bool:
        return self.max_second_log_derivative <= LOGCONCAVE_TOL


def factorize_gF(rho: GridDensity) -> LogConcaveFactor:
    core = _core_slice(rho.values)
    x = rho.x[core]
    v = rho.values[core]
    g = gaussian_values(x)
    log_f = np.log(v) + 0.5 * x * x + 0.5 * math.log(2.0 * math.pi)
    d2 = _second_difference(log_f, rho.grid.spacing)
    radius = float(min(-x[0], x[-1]))
    return LogConcaveFactor(rho.grid, core, v / g, d2, radius)


def brascamp_lieb_check(F: LogConcaveFactor, m_list=(1, 2, 3, 4)) -> dict:
    """``m -> (int x^2m g F, int x^2m g)`` with ``F`` renormalized so ``int g F = 1``.

    Raises :class:`CheckFailure` when the domination fails and
    :class:`CltlabError` when ``F`` is not log-concave.
    """
    if not F.is_logconcave:
        raise CltlabError(
            f"F is not log-concave (max (ln F)'' = {F.max_second_log_derivative:.3e})"
        )
    full_x = F.grid.x
    gF = np.zeros(F.grid.points)
    gF[F.core] = gaussian_values(F.x) * F.F_values
    gF /= integrate(gF, F.grid)
    g = gaussian_values(full_x)
    out = {}
    for m in m_list:
        w = full_x ** (2 * m)
        lhs, rhs = integrate(w * gF, F.grid), integrate(w * g, F.grid)
        out[int(m)] = (lhs, rhs)
        if lhs > rhs + 1e-8:
            raise CheckFailure("brascamp_lieb", lhs, rhs, 1e-8, detail=f"m={m}")
    return out


def gaussian_tail_norm(rho: GridDensity, beta: float):
    """``(int e^{beta x^2} rho^2, ||rho||_2^2 int e^{beta x^2} g^2)``."""
    if not beta < 1.0:
        raise CltlabError(f"beta must be < 1 (e^(beta x^2) g^2 diverges otherwise), got {beta!r}")
    if beta * rho.grid.half_width ** 2 >= 700:
        raise CltlabError(f"e^(beta x^2) overflows on the window for beta={beta!r}")
    weight = np.exp(beta * rho.x**2)
    value = integrate(weight * rho.values**2, rho.grid)
    g = gaussian_values(rho.x)
    companion = integrate(rho.values**2, rho.grid) * integrate(weight * g * g, rho.grid)
    return value, companion


def min_neg_log_curvature(rho: GridDensity) -> float:
    """``min over the core of -(ln rho)''``."""
    core = _core_slice(rho.values)
    d2 = _second_difference(np.log(rho.values[core]), rho.grid.spacing)
    return float((-d2).min())


def logconcavity_onset(rho: GridDensity, n_max: int, eps: float):
    """First doubling level with ``-(ln rho_n)'' >= 1 - eps`` on the core.

    The comparison carries the same ``LOGCONCAVE_TOL`` slack as the
    log-concavity flag, so round-off at the core edge cannot hide a level.
    Returns ``(n_star or None, {n: min core value})``.
    """
    profile, n_star = {}, None
    for n, rho_n in _doubling_sequence(rho, doubling_levels(n_max)):
        profile[n] = min_neg_log_curvature(rho_n)
        if n_star is None and profile[n] >= 1.0 - eps - LOGCONCAVE_TOL:
            n_star = n
    return n_star, profile


def logconcavity_closure(rho: GridDensity, levels: int):
    """Log-concavity flag of ``F`` at each of ``levels`` doublings (no standardization)."""
    flags = [factorize_gF(rho).is_logconcave]
    cur = rho
    for _ in range(levels):
        cur = double(cur)
        flags.append(factorize_gF(cur).is_logconcave)
    return flags


# ---------- per-level report ----------


def _jsonable(v):
    return v if math.isfinite(v) else "inf"


@dataclass(frozen=True)
class LocalizationReport:
    n: int
    mgf_margin: dict = field(default_factory=dict)
    m4: float = 3.0
    m4_bound: float = 9.0
    psi_curve: dict = field(default_factory=dict)
    gauss_tail: float = 0.0
    logconc_min: float = 1.0

    def __post_init__(self):
        if self.m4 > self.m4_bound + 1e-6:
            raise CheckFailure("m4_upper", self.m4, self.m4_bound, 1e-6, level=self.n)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mgf_margin": {repr(float(a)): _jsonable(m) for a, m in self.mgf_margin.items()},
            "m4": self.m4,
            "m4_bound": self.m4_bound,
            "psi_curve": {repr(float(R)): p for R, p in self.psi_curve.items()},
            "gauss_tail": _jsonable(self.gauss_tail),
            "logconc_min": self.logconc_min,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def localization_report(rho_n: GridDensity, n: int, m4_start: float, alphas=(), Rs=(),
                        beta: float = 0.5) -> LocalizationReport:
    margins = {float(a): mgf(rho_n, a) / (2.0 * math.exp(0.5 * a * a)) for a in alphas}
    return LocalizationReport(
        n=int(n),
        mgf_margin=margins,
        m4=abs_moment(rho_n, 4),
        m4_bound=max(m4_start, 9.0),
        psi_curve={float(R): psi(rho_n, R) for R in Rs},
        gauss_tail=gaussian_tail_norm(rho_n, beta)[0],
        logconc_min=min_neg_log_curvature(rho_n),
    )


def write_rows(path, header, rows) -> None:
    """CSV with 17 significant digits for floats."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
