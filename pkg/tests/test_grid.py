import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from cltlab.errors import DegenerateDensityError, GridError, ProfileError, WindowTooSmallError
from cltlab.grid import (
    GridDensity,
    abs_moment,
    build_grid,
    central_moment,
    integrate_interval,
    mass,
    mean,
    moment,
    standardize,
    sup_distance,
    tail_profile,
    variance,
)
from cltlab.profiles import (
    BIMODAL,
    GaussianMixture,
    GFQuartic,
    Gaussian,
    LaplaceSmoothed,
    Uniform,
    from_profile,
    make_profile,
)


def test_build_grid_spacing():
    assert build_grid(16.0, 4096).spacing == pytest.approx(32 / 4095, rel=1e-15)
    assert build_grid(8.0, 1024).spacing == pytest.approx(16 / 1023, rel=1e-15)


@pytest.mark.parametrize("L, P", [(16.0, 1000), (16.0, 128), (0.0, 1024), (-1.0, 1024)])
def test_build_grid_rejects(L, P):
    with pytest.raises(GridError):
        build_grid(L, P)


def test_grid_covers_window(grid):
    x = grid.x
    assert x[0] == -grid.half_width
    assert x[-1] == pytest.approx(grid.half_width, abs=1e-12)
    assert grid.spacing * (grid.points - 1) == pytest.approx(2 * grid.half_width, rel=1e-14)


def test_gaussian_peak(g):
    # no node sits at 0; the nearest nodes are at +-h/2
    h = g.grid.spacing
    assert g.values.max() == pytest.approx(math.exp(-h * h / 8) / math.sqrt(2 * math.pi), rel=1e-9)
    assert g.values.max() == pytest.approx(0.39894, abs=1e-5)


def test_gaussian_quadrature_exactness(g):
    assert mass(g) == pytest.approx(1.0, abs=1e-12)
    assert mean(g) == pytest.approx(0.0, abs=1e-12)
    assert variance(g) == pytest.approx(1.0, abs=1e-6)
    assert moment(g, 4) == pytest.approx(3.0, abs=1e-6)


def test_uniform_moments(uniform):
    assert variance(uniform) == pytest.approx(1.0, abs=1e-6)
    assert central_moment(uniform, 4) == pytest.approx(1.8, abs=1e-4)


def test_gf_quartic_zero_is_gaussian(grid, g):
    assert sup_distance(from_profile(grid, GFQuartic(0.0)), g) == 0.0


def test_laplace_smoothed_matches_quadrature_convolution(grid):
    prof = LaplaceSmoothed(b=0.5, smoothing=0.25)
    rho = from_profile(grid, prof)
    for x0 in (-1.3, 0.0, 0.7, 2.5):
        oracle, _ = integrate.quad(
            lambda y: stats.laplace.pdf(y, scale=0.5) * stats.norm.pdf(x0 - y, scale=0.5), -np.inf, np.inf)
        assert np.interp(x0, rho.x, rho.values) == pytest.approx(oracle, rel=1e-4)


def test_profile_validation():
    with pytest.raises(ProfileError):
        GFQuartic(-0.1)
    with pytest.raises(ProfileError):
        Gaussian(0.0)
    with pytest.raises(ProfileError):
        GaussianMixture((0.5,), (0.0, 1.0), (1.0,))
    with pytest.raises(ProfileError):
        make_profile("cauchy")
    with pytest.raises(ProfileError):
        make_profile("uniform", width=2.0)


def test_window_too_small():
    with pytest.raises(WindowTooSmallError):
        from_profile(build_grid(4.0, 1024), Gaussian(4.0))


def test_density_invariants(grid):
    with pytest.raises(GridError):
        GridDensity(grid, np.full(grid.points, -1.0))
    with pytest.raises(DegenerateDensityError):
        GridDensity.from_values(grid, np.zeros(grid.points))
    with pytest.raises(GridError):
        GridDensity(grid, 2 * from_profile(grid, Gaussian()).values)


def test_standardize_gaussian4(grid, g):
    assert sup_distance(standardize(from_profile(grid, Gaussian(4.0))), g) < 1e-6


def test_standardize_fixed_point(g):
    assert sup_distance(standardize(g), g) < 1e-10


def test_standardize_contract(bimodal):
    assert mass(bimodal) == pytest.approx(1.0, abs=1e-10)
    assert mean(bimodal) == pytest.approx(0.0, abs=1e-10)
    assert variance(bimodal) == pytest.approx(1.0, abs=1e-8)


def test_standardize_degenerate(grid):
    v = np.zeros(grid.points)
    v[grid.points // 2] = 1.0
    with pytest.raises(DegenerateDensityError):
        standardize(GridDensity.from_values(grid, v))


def test_csv_round_trip(tmp_path, bimodal):
    path = tmp_path / "rho.csv"
    bimodal.to_csv(path)
    assert path.read_text().splitlines()[0] == "x,rho"
    back = GridDensity.read_csv(path)
    assert back.grid.points == bimodal.grid.points
    assert sup_distance(back, bimodal) < 1e-15


def test_integrate_interval_against_quad(g):
    lo, hi = -0.37, 1.91
    oracle = stats.norm.cdf(hi) - stats.norm.cdf(lo)
    # trapezoid error term h^2/12 |f'(hi) - f'(lo)|, doubled for the cut cells
    h = g.grid.spacing
    tol = h * h / 6 * abs(-hi * stats.norm.pdf(hi) + lo * stats.norm.pdf(lo))
    assert integrate_interval(g.values, g.grid, lo, hi) == pytest.approx(oracle, abs=tol)


def test_tail_profile(g):
    R, tails = tail_profile(g.values, g.grid)
    assert np.all(np.diff(tails) <= 1e-15)
    i = np.searchsorted(R, 2.0)
    h = g.grid.spacing
    tol = h * h / 6 * R[i] * stats.norm.pdf(R[i]) * 2
    assert tails[i] == pytest.approx(2 * stats.norm.sf(R[i]), abs=tol)


def test_refinement_invariance(grid):
    from cltlab.functionals import entropy, rel_entropy

    fine = grid.refine()
    for prof in (Gaussian(1.0), BIMODAL, LaplaceSmoothed()):
        a, b = standardize(from_profile(grid, prof)), standardize(from_profile(fine, prof))
        assert entropy(a) == pytest.approx(entropy(b), abs=1e-6)
        assert rel_entropy(a) == pytest.approx(rel_entropy(b), abs=1e-6)
        assert abs_moment(a, 4) == pytest.approx(abs_moment(b, 4), abs=1e-6)


mixtures = st.builds(
    lambda w, m1, m2, v1, v2: GaussianMixture((w, 1 - w), (m1, m2), (v1, v2)),
    st.floats(0.1, 0.9), st.floats(-2, 0), st.floats(0, 2), st.floats(0.2, 1.5), st.floats(0.2, 1.5),
)


@given(mixtures)
def test_standardize_idempotent(prof):
    grid = build_grid(16.0, 4096)
    once = standardize(from_profile(grid, prof))
    assert sup_distance(standardize(once), once) < 1e-9
    assert abs(mean(once)) < 1e-10 and abs(variance(once) - 1) < 1e-8


@given(st.floats(0.3, 4.0))
def test_uniform_variance_any_width(a):
    rho = from_profile(build_grid(16.0, 4096), Uniform(a))
    assert variance(rho) == pytest.approx(a * a / 3, rel=1e-6)
