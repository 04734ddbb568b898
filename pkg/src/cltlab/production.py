"""Entropy production ``S(rho (*) rho) - S(rho)`` and its Fisher-information accounting.

By de Bruijn, for standardized ``rho``

    S(rho (*) rho) - S(rho) = int_0^inf [J(rho_t) - J((rho (*) rho)_t)] dt,

with ``rho_t`` the OU flow.  The time integral is taken with Simpson's rule on
geometrically spaced nodes, which cluster where ``J`` changes fastest.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson, trapezoid

from .errors import CheckFailure, CltlabError, InfiniteFisherError
from .functionals import entropy, psi, rel_entropy, rel_fisher, rel_fisher_integrand
from .grid import GridDensity, gaussian_values, tail_profile
from .parallel import pmap
from .spectral import double, ou_flow

T_MAX = 20.0
TIME_NODES = 64
FIRST_NODE = 1e-4
CORE_FRACTION = 1e-10
IDENTITY_TOL = 1e-3


def time_nodes(T: float = T_MAX, count: int = TIME_NODES) -> np.ndarray:
    """``0`` followed by ``count - 1`` geometric nodes from ``FIRST_NODE * T / 2`` to ``T``."""
    if count < 3:
        raise CltlabError("need at least 3 time nodes")
    first = FIRST_NODE * T / 2.0
    return np.concatenate(([0.0], np.geomspace(first, T, count - 1)))


def time_integral(values, t) -> float:
    return float(simpson(np.asarray(values, dtype=float), x=np.asarray(t, dtype=float)))


def fisher_along_flow(rho: GridDensity, t_nodes) -> np.ndarray:
    """``J(ou_flow(rho, t))`` at every node; raises if any value is unresolved."""
    out = np.array(pmap(lambda t: rel_fisher(ou_flow(rho, t)), t_nodes))
    if not np.all(np.isfinite(out)):
        raise InfiniteFisherError("relative Fisher information is not resolved along the flow")
    return out


def de_bruijn_defect(rho: GridDensity, T: float, count: int = TIME_NODES):
    """``(S(P_T rho) - S(rho), int_0^T J(P_s rho) ds)``."""
    t = time_nodes(T, count)
    gain = entropy(ou_flow(rho, T)) - entropy(rho)
    return gain, time_integral(fisher_along_flow(rho, t), t)


def entropy_production(rho: GridDensity) -> float:
    """``S(rho (*) rho) - S(rho)``."""
    return entropy(double(rho)) - entropy(rho)


@dataclass(frozen=True)
class ProductionCurve:
    t: np.ndarray
    j_rho: np.ndarray
    j_conv: np.ndarray
    production: float

    @property
    def integral(self) -> float:
        """``int [J(rho_t) - J((rho (*) rho)_t)] dt`` (the orientation that closes)."""
        return time_integral(self.j_rho - self.j_conv, self.t)

    @property
    def printed_orientation(self) -> float:
        """The opposite orientation ``int [J((rho (*) rho)_t) - J(rho_t)] dt``, logged only."""
        return -self.integral

    @property
    def defect(self) -> float:
        return abs(self.integral - self.production)

    def failures(self, level=None) -> list:
        out = []
        gap = self.j_rho - self.j_conv
        worst = int(np.argmin(gap))
        if gap[worst] < -1e-6:
            out.append(CheckFailure("blackman_stam_flow", self.j_conv[worst], self.j_rho[worst],
                                    1e-6, level=level, detail=f"t={self.t[worst]!r}"))
        if self.defect > IDENTITY_TOL:
            out.append(CheckFailure("production_identity", self.integral, self.production,
                                    IDENTITY_TOL, level=level))
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "J_rho_t", "J_conv_t"])
            for row in zip(self.t, self.j_rho, self.j_conv):
                w.writerow([f"{v:.17g}" for v in row])


def production_integrand(rho: GridDensity, t_nodes=None) -> ProductionCurve:
    """Relative Fisher information of ``rho_t`` and ``(rho (*) rho)_t`` on ``t_nodes``."""
    t = time_nodes() if t_nodes is None else np.asarray(t_nodes, dtype=float)
    conv = double(rho)
    return ProductionCurve(
        t=t,
        j_rho=fisher_along_flow(rho, t),
        j_conv=fisher_along_flow(conv, t),
        production=entropy(conv) - entropy(rho),
    )


# ---------- linear approximation of the score ----------


def _core(rho: GridDensity) -> slice:
    idx = np.flatnonzero(rho.values > CORE_FRACTION * rho.values.max())
    if idx.size < 3:
        raise CltlabError("core region is empty")
    return slice(int(idx[0]), int(idx[-1]) + 1)


def score_on_core(rho: GridDensity):
    """``(x, u, g)`` with ``u = (ln rho)'`` on the core and ``g`` the Gaussian weight."""
    core = _core(rho)
    x = rho.x[core]
    u = np.gradient(np.log(rho.values[core]), rho.grid.spacing)
    return x, u, gaussian_values(x)


def score_fit(rho: GridDensity):
    """Best affine approximation ``-c x - d`` of the score in ``L^2(g)`` on the core.

    Returns ``(defect, c, d)`` with ``defect = int |u + c x + d|^2 g``.
    """
    x, u, g = score_on_core(rho)
    h = rho.grid.spacing

    def dot(a, b):
        return float(trapezoid(a * b * g, dx=h))

    one = np.ones_like(x)
    gram = np.array([[dot(x, x), dot(x, one)], [dot(one, x), dot(one, one)]])
    rhs = -np.array([dot(u, x), dot(u, one)])
    c, d = np.linalg.solve(gram, rhs)
    r = u + c * x + d
    return dot(r, r), float(c), float(d)


def score_defect(rho: GridDensity) -> float:
    """``inf_{c,d} int |(ln rho)' + c x + d|^2 g`` over the core; zero iff the score is affine."""
    return score_fit(rho)[0]


# ---------- lower-bound diagnostics ----------


def _jsonable(v):
    if isinstance(v, float) and math.isnan(v):
        return None
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


@dataclass(frozen=True)
class ProductionReport:
    production: float
    rel_entropy: float
    ratio: float
    score_defect: float
    K_measured: float
    R_eps: float
    eps: float
    floor_ratio: float
    tail_budget: float
    rel_fisher: float
    integrand_curve: dict = field(default_factory=dict)
    skipped: bool = False

    def __post_init__(self):
        if self.skipped:
            return
        if self.production < -1e-6:
            raise CheckFailure("production_nonnegative", self.production, 0.0, 1e-6)
        if self.rel_entropy > 1e-10 and self.ratio < 0:
            raise CheckFailure("production_ratio_nonnegative", self.ratio, 0.0, 0.0)

    @property
    def meets_printed_reading(self) -> bool:
        """``production >= (K/2) D``, the bound as printed."""
        return self.production >= 0.5 * self.K_measured * self.rel_entropy

    @property
    def meets_dimensional_reading(self) -> bool:
        """``production >= D / (2K)``, the dimensionally consistent reading."""
        return self.production >= self.rel_entropy / (2.0 * self.K_measured)

    def to_dict(self) -> dict:
        out = {k: _jsonable(getattr(self, k)) for k in (
            "production", "rel_entropy", "ratio", "score_defect", "K_measured", "R_eps",
            "eps", "floor_ratio", "tail_budget", "rel_fisher", "skipped")}
        out["meets_printed_reading"] = None if self.skipped else self.meets_printed_reading
        out["meets_dimensional_reading"] = None if self.skipped else self.meets_dimensional_reading
        out["integrand_curve"] = {repr(float(t)): list(v) for t, v in self.integrand_curve.items()}
        return out

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def production_lower_bound_diag(rho: GridDensity, eps_fraction: float = 0.5,
                                with_curve: bool = False) -> ProductionReport:
    """Measured production ratio against the sandwich constant of the density.

    ``eps = eps_fraction * J(rho)``; ``R_eps`` is the smallest grid radius with
    ``J_R(rho) <= eps``; ``K`` is ``sup max(rho/g, g/rho)`` on ``|x| <= R_eps``.
    """
    D = rel_entropy(rho)
    production = entropy_production(rho)
    if D < 1e-12:
        nan = math.nan
        return ProductionReport(production, D, nan, nan, nan, nan, nan, nan, nan, nan,
                                skipped=True)
    J = rel_fisher(rho)
    if not math.isfinite(J):
        raise InfiniteFisherError("production diagnostics need finite relative Fisher information")
    eps = eps_fraction * J
    integrand = rel_fisher_integrand(rho)
    R, tails = tail_profile(integrand, rho.grid)
    R_eps = float(R[np.argmax(tails <= eps)]) if np.any(tails <= eps) else float(R[-1])
    inside = np.abs(rho.x) <= R_eps
    g = gaussian_values(rho.x[inside])
    v = rho.values[inside]
    with np.errstate(divide="ignore"):
        K = float(max(np.max(v / g), np.max(g / v)))
    floor = 0.5 / float(np.max(v / g))
    budget = 2.0 * psi(rho, R_eps) + 8.0 / (1.0 + R_eps**2) * (
        psi(rho, R_eps / 2) + psi(GridDensity.from_values(rho.grid, gaussian_values(rho.x)),
                                  R_eps / 2)
    )
    curve = {}
    if with_curve:
        c = production_integrand(rho)
        curve = {float(t): (a, b) for t, a, b in zip(c.t, c.j_rho, c.j_conv)}
    return ProductionReport(
        production=production,
        rel_entropy=D,
        ratio=production / D,
        score_defect=score_defect(rho),
        K_measured=K,
        R_eps=R_eps,
        eps=eps,
        floor_ratio=floor,
        tail_budget=budget,
        rel_fisher=J,
        integrand_curve=curve,
    )
