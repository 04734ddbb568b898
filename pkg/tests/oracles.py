"""Independent brute-force oracles shared by the unit and acceptance tests."""

import math

import numpy as np
from scipy.integrate import trapezoid

from cltlab.production import score_on_core


def brute_force_score_defect(rho, c0, d0, half_span, steps=201, rounds=4):
    """Dense (c, d) grid search, zoomed in a few times around the running minimizer."""
    x, u, g = score_on_core(rho)
    h = rho.grid.spacing
    best = (math.inf, c0, d0)
    span = half_span
    for _ in range(rounds):
        cs = np.linspace(best[1] - span, best[1] + span, steps)
        ds = np.linspace(best[2] - span, best[2] + span, steps)
        for c in cs:
            r = u[None, :] + c * x[None, :] + ds[:, None]
            vals = trapezoid(r * r * g, dx=h, axis=1)
            i = int(np.argmin(vals))
            if vals[i] < best[0]:
                best = (float(vals[i]), float(c), float(ds[i]))
        span /= 20
    return best
