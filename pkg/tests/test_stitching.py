import json
import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from cltlab.errors import CheckFailure, CltlabError, InfiniteFisherError
from cltlab.functionals import entropy
from cltlab.grid import GridDensity, gaussian_values, mass, mean, sup_distance, variance
from cltlab.spectral import iterated_doubling
from cltlab.stitching import (
    StitchConfig,
    StitchResult,
    cutoff,
    entropy_gap,
    gaussian_floor_margin,
    graft,
    mollifier,
    sandwich_constants,
    stitch,
    stitched_production_gap,
    tail_entropy_bound,
    tail_lq_bound,
    write_sweep_csv,
)

from conftest import ZOO, zoo_density

SWEEP = (4, 16, 64)
SWEEP_C = 0.5


@lru_cache(maxsize=None)
def mixture_level(n):
    return iterated_doubling(zoo_density("bimodal"), n.bit_length() - 1)


@lru_cache(maxsize=None)
def mixture_stitch(n, c=SWEEP_C):
    return stitch(mixture_level(n), StitchConfig(c, n))


def test_mollifier():
    mass, _ = integrate.quad(mollifier, -1, 1, epsabs=1e-13)
    assert mass == pytest.approx(1.0, abs=1e-10)
    assert mollifier(1.0) == 0.0 and mollifier(-1.5) == 0.0
    assert mollifier(0.3) == pytest.approx(mollifier(-0.3), abs=0)


def test_cutoff_shape():
    m = 3.0
    x = np.linspace(-5, 5, 1001)
    chi = cutoff(m, x)
    assert np.all((chi >= 0) & (chi <= 1))
    assert np.all(chi[np.abs(x) <= m - 1] == 1.0)
    assert np.all(chi[np.abs(x) >= m + 1] == 0.0)
    assert cutoff(m, [0.0])[0] == 1.0
    assert cutoff(m, [-m, m]) == pytest.approx([0.5, 0.5], abs=1e-6)


def test_cutoff_against_quadrature():
    m = 2.5
    for x0 in (1.8, 2.2, 3.1):
        oracle, _ = integrate.quad(lambda y: mollifier(x0 - y), -m, m, epsabs=1e-13, points=[x0 - 1, x0 + 1])
        assert cutoff(m, [x0])[0] == pytest.approx(oracle, abs=1e-10)


def test_cutoff_rejects_small_m():
    with pytest.raises(CltlabError):
        cutoff(0.5, [0.0])


def test_config_validation(grid):
    with pytest.raises(CltlabError):
        StitchConfig(c=0.0)
    with pytest.raises(CltlabError):
        StitchConfig(n=0)
    with pytest.raises(CltlabError):
        StitchConfig(mollifier_width=2.0)
    with pytest.raises(CltlabError):
        StitchConfig(1.0, 256).check_window(grid)
    with pytest.raises(CltlabError):
        StitchConfig(0.25, 4).check_window(grid)


def test_graft_regions(bimodal):
    m = 3.0
    grafted = graft(bimodal, m)
    ax = np.abs(bimodal.x)
    assert np.array_equal(grafted[ax <= m - 1], bimodal.values[ax <= m - 1])
    assert np.array_equal(grafted[ax >= m + 1], gaussian_values(bimodal.x[ax >= m + 1]))


def test_stitch_gaussian_identity(g):
    res = stitch(g, StitchConfig(1.0, 16))
    assert sup_distance(res.stitched, g) < 1e-12
    assert res.eps_magnitude < 1e-12
    assert res.sandwich == pytest.approx((1.0, 1.0), abs=1e-9)
    assert abs(res.entropy_gap) < 1e-12


def test_stitch_exact_moments():
    res = stitch(mixture_level(16), StitchConfig(1.0, 16))
    rho = res.stitched
    assert abs(mass(rho) - 1) < 1e-10
    assert abs(mean(rho)) < 1e-10
    assert abs(variance(rho) - 1) < 1e-8


def test_stitch_constants_parameterization():
    res = mixture_stitch(16)
    assert res.c_n == pytest.approx(res.d_n / (1 + res.eps_n[0]), rel=1e-14)
    assert res.eps_n[1] == pytest.approx(res.d_n - 1, abs=0)
    assert res.eps_n[2] == res.e_n


def test_stitch_result_rejects_bad_moments(bimodal):
    res = mixture_stitch(16)
    shifted = GridDensity.from_values(bimodal.grid, np.roll(res.stitched.values, 40))
    with pytest.raises(CheckFailure, match="stitch_mean"):
        StitchResult(16, shifted, res.grafted, res.c_n, res.d_n, res.e_n, res.eps_n, 0.0, res.sandwich)


def test_eps_gap_and_sandwich_sweep():
    results = [mixture_stitch(n) for n in SWEEP]
    eps = [r.eps_magnitude for r in results]
    gaps = [abs(r.entropy_gap) for r in results]
    assert eps[0] > eps[1] > eps[2]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] * 4 < gaps[0]
    c1, c2 = results[-1].sandwich
    assert c1 > 0.1 and c2 < 10
    for r in results:
        lo, hi = sandwich_constants(r)
        assert 0 < lo <= 1 <= hi < math.inf
        assert entropy_gap(mixture_level(r.n), r) == r.entropy_gap


def test_sweep_csv_and_json(tmp_path):
    results = [mixture_stitch(n) for n in SWEEP]
    path = tmp_path / "stitch.csv"
    write_sweep_csv(path, results)
    lines = path.read_text().splitlines()
    assert lines[0] == "n,eps_mass,eps_scale,eps_shift,entropy_gap,c1,c2"
    assert [int(line.split(",")[0]) for line in lines[1:]] == list(SWEEP)
    results[0].to_json(tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text())["n"] == 4


def test_tail_lq_gaussian_against_quad(g):
    lhs, rhs = tail_lq_bound(g, 2.0, 2.0)
    oracle_lhs, _ = integrate.quad(lambda x: 2 * stats.norm.pdf(x) ** 2, 2.0, np.inf)
    oracle_rhs = 1.0 * 2 * stats.norm.sf(2.0)
    assert lhs == pytest.approx(oracle_lhs, rel=1e-4)
    assert rhs == pytest.approx(oracle_rhs, rel=1e-4)
    assert lhs <= rhs


def test_tail_lq_limits(g):
    lhs, rhs = tail_lq_bound(g, 1.0001, 1.0)
    assert lhs == pytest.approx(rhs, rel=2e-3)
    assert tail_lq_bound(g, 2.0, 20.0) == (0.0, 0.0)
    with pytest.raises(CltlabError):
        tail_lq_bound(g, 1.0, 1.0)


def test_tail_entropy_gaussian(g):
    lhs, rhs = tail_entropy_bound(g, 3.0)
    oracle, _ = integrate.quad(lambda x: -2 * stats.norm.pdf(x) * stats.norm.logpdf(x), 3.0, np.inf)
    assert lhs == pytest.approx(oracle, rel=1e-4)
    assert rhs > lhs
    lhs0, rhs0 = tail_entropy_bound(g, 0.0)
    assert lhs0 <= rhs0


def test_tail_lemmas_need_finite_fisher(uniform):
    with pytest.raises(InfiniteFisherError):
        tail_lq_bound(uniform, 2.0, 1.0)
    with pytest.raises(InfiniteFisherError):
        tail_entropy_bound(uniform, 1.0)


@pytest.mark.parametrize("name", ZOO)
def test_tail_lemmas_zoo(name):
    rho = zoo_density(name)
    for q in (1.5, 2.0, 3.0):
        for R in (2.0, 4.0, 6.0):
            lhs, rhs = tail_lq_bound(rho, q, R)
            assert rhs - lhs >= 0
    for R in (0.0, 2.0, 3.0):
        lhs, rhs = tail_entropy_bound(rho, R)
        assert rhs - lhs >= 0


def test_stitched_production_gaussian(g):
    sp = stitched_production_gap(g, StitchConfig(1.0, 4))
    assert sp.lhs == pytest.approx(entropy(g), abs=1e-10)
    assert sp.rhs == pytest.approx(entropy(g), abs=1e-10)


def test_stitched_production_sweep():
    gaps = [stitched_production_gap(mixture_level(n), StitchConfig(SWEEP_C, n)) for n in (16, 64)]
    assert abs(gaps[1].delta) < abs(gaps[0].delta)
    assert abs(gaps[1].B_term) < abs(gaps[0].B_term)


def test_gaussian_floor_margin(g):
    # g e^{x^2/3} = e^{-x^2/6}/sqrt(2 pi), minimal at the window edge |x| = 2c sqrt N
    margin = gaussian_floor_margin(g, 1.0, 4)
    assert margin == pytest.approx(math.exp(-16 / 6) / math.sqrt(2 * math.pi), rel=1e-2)
    assert margin < 1


@given(st.floats(1.0, 6.0), st.floats(-8.0, 8.0))
def test_cutoff_symmetric_and_bounded(m, x):
    a, b = cutoff(m, [x, -x])
    assert a == pytest.approx(b, abs=1e-12)
    assert 0.0 <= a <= 1.0


@given(st.floats(0.6, 2.0), st.sampled_from([4, 16]))
def test_stitch_exactness_property(c, n):
    cfg = StitchConfig(c, n)
    if cfg.m < 1 or cfg.m + 1 > 8:
        return
    res = stitch(mixture_level(n), cfg)
    rho = res.stitched
    assert abs(mean(rho)) < 1e-10 and abs(variance(rho) - 1) < 1e-8
