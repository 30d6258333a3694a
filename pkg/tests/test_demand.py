import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from bidsolve.demand import (
    PRPParams,
    atom_mass,
    bessel_i1,
    bessel_i1e,
    discretize,
    logpdf_continuous,
    logpdf_series,
    moments,
    pdf_continuous,
    pdf_series,
    sample,
)

from .conftest import quadrature_cdf

TANK = PRPParams(40.0, 2.0)


def _quad_moment(params, power):
    mean = params.event_rate / params.duration_rate
    sd = math.sqrt(2 * params.event_rate) / params.duration_rate
    f = lambda d: d**power * pdf_continuous(params, d) if d > 0 else 0.0
    split = [0.0, max(mean, 1.0), mean + 10 * sd + 10 / params.duration_rate]
    total = 0.0
    for a, b in zip(split, split[1:]):
        total += integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    total += integrate.quad(f, split[-1], np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    return total


def test_params_validation():
    with pytest.raises(ValueError):
        PRPParams(-1.0, 1.0)
    with pytest.raises(ValueError):
        PRPParams(1.0, 0.0)


class TestSample:
    def test_no_events_gives_zero(self):
        assert np.all(sample(PRPParams(0.0, 2.0), 1, 1000) == 0.0)
        assert sample(PRPParams(1e-300, 2.0), 1) == 0.0

    def test_nonnegative_and_reproducible(self):
        a = sample(TANK, 42, 5000)
        b = sample(TANK, 42, 5000)
        assert np.array_equal(a, b)
        assert np.all(a >= 0)

    def test_zero_fraction_matches_atom(self):
        n = 10**6
        d = sample(PRPParams(2.0, 1.0), 7, n)
        p0 = math.exp(-2.0)
        se = math.sqrt(p0 * (1 - p0) / n)
        assert abs(np.mean(d == 0) - p0) <= 3 * se

    def test_mean_reference_parameters(self):
        d = sample(TANK, 11, 10**6)
        # independent reference: first moment by quadrature of the density
        ref = _quad_moment(TANK, 1)
        assert ref == pytest.approx(20.0, rel=1e-9)
        assert abs(d.mean() - ref) <= 0.005 * ref

    def test_sum_of_exponentials_construction(self):
        # conditional on e events the draw is Gamma(e, 1/mu): check the e=1 slice shape
        rng = np.random.default_rng(3)
        d = sample(PRPParams(0.05, 0.5), rng, 200_000)
        pos = d[d > 0]
        # with rate 0.05, ~97.5% of positive draws are single events (Exp(0.5))
        assert np.median(pos) == pytest.approx(2 * math.log(2), rel=0.08)


class TestDensity:
    def test_leading_term_small_argument(self):
        lam, mu, d = 0.5, 0.1, 1e-8
        lead = lam * mu * math.exp(-lam - mu * d)
        assert pdf_continuous(PRPParams(lam, mu), d) == pytest.approx(lead, rel=1e-8)

    def test_integrates_to_one_minus_atom(self):
        for params in (TANK, PRPParams(0.5, 0.1), PRPParams(5.0, 10.0)):
            total = _quad_moment(params, 0)
            assert abs(total - (1 - atom_mass(params))) <= 1e-8

    def test_bessel_and_series_agree_at_reference_point(self):
        a = pdf_continuous(TANK, 20.0)
        b = pdf_series(TANK, 20.0)
        assert abs(a - b) <= 1e-10 * abs(b)

    @pytest.mark.parametrize("lam", [0.5, 5.0, 40.0])
    @pytest.mark.parametrize("mu", [0.1, 2.0, 10.0])
    def test_forms_agree_on_log_grid(self, lam, mu):
        d = np.logspace(-6, 3, 121)
        params = PRPParams(lam, mu)
        # relative difference of the densities is expm1 of the log difference,
        # which stays meaningful where the density underflows
        rel = np.abs(np.expm1(logpdf_continuous(params, d) - logpdf_series(params, d)))
        assert rel.max() <= 1e-10

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            pdf_continuous(TANK, 0.0)
        with pytest.raises(ValueError):
            pdf_series(TANK, -1.0)


class TestBessel:
    def test_against_scipy(self):
        z = np.concatenate([[0.0, 1e-10], np.logspace(-3, 1.4, 40)])
        np.testing.assert_allclose(bessel_i1(z), special.i1(z), rtol=1e-13)

    def test_scaled_large_arguments(self):
        z = np.array([29.0, 31.0, 100.0, 1000.0, 5000.0])
        np.testing.assert_allclose(bessel_i1e(z), special.i1e(z), rtol=1e-10)

    def test_scalar_in_scalar_out(self):
        assert isinstance(bessel_i1(1.0), float)


class TestAtomAndMoments:
    def test_atom_mass(self):
        assert atom_mass(PRPParams(0.0, 1.0)) == 1.0
        assert atom_mass(TANK) == math.exp(-40.0)
        assert atom_mass(PRPParams(math.log(2), 1.0)) == pytest.approx(0.5, rel=1e-15)

    @pytest.mark.parametrize("params, expected", [(TANK, (20.0, 20.0)), (PRPParams(1.0, 1.0), (1.0, 2.0))])
    def test_moments_against_quadrature(self, params, expected):
        mean, var = moments(params)
        assert (mean, var) == pytest.approx(expected, rel=1e-15)
        q_mean = _quad_moment(params, 1)
        q_var = _quad_moment(params, 2) - q_mean**2
        assert q_mean == pytest.approx(mean, rel=1e-6)
        assert q_var == pytest.approx(var, rel=1e-6)

    @pytest.mark.parametrize("params", [TANK, PRPParams(1.0, 1.0)])
    def test_moments_against_monte_carlo(self, params):
        d = sample(params, 5, 10**6)
        mean, var = moments(params)
        assert d.mean() == pytest.approx(mean, rel=0.01)
        assert d.var() == pytest.approx(var, rel=0.02)

    @given(st.floats(0.1, 50), st.floats(0.1, 10))
    def test_doubling_volume_rate_halves_mean(self, lam, mu):
        assert moments(PRPParams(lam, 2 * mu))[0] == pytest.approx(moments(PRPParams(lam, mu))[0] / 2)


class TestDiscretize:
    def test_all_zero_draws_collapse_to_single_atom(self):
        noise = discretize(PRPParams(1e-12, 2.0), 100, seed=0)
        assert noise.values.tolist() == [0.0]
        assert noise.probs.tolist() == [1.0]

    def test_deterministic(self):
        a = discretize(TANK, 200, seed=9)
        b = discretize(TANK, 200, seed=9)
        assert np.array_equal(a.values, b.values) and np.array_equal(a.probs, b.probs)

    def test_sorted_equal_weight(self):
        noise = discretize(TANK, 500, seed=0)
        assert np.all(np.diff(noise.values) > 0)
        assert np.allclose(noise.probs, 1 / 500)
        assert abs(noise.probs.sum() - 1) <= 1e-12

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32))
    def test_atom_mean_within_five_sigma(self, seed):
        noise = discretize(TANK, 500, seed=seed)
        assert abs(noise.mean() - 20.0) <= 5 * math.sqrt(20.0) / math.sqrt(500)

    def test_needs_two_atoms(self):
        with pytest.raises(ValueError):
            discretize(TANK, 1)


def test_ks_positive_part_against_quadrature_cdf():
    params = PRPParams(5.0, 2.0)
    d = sample(params, 21, 120_000)
    pos = d[d > 0][:100_000]
    grid, cdf = quadrature_cdf(params, 40.0)
    mass = 1 - atom_mass(params)
    assert abs(cdf[-1] - mass) <= 1e-8
    res = stats.kstest(pos, lambda s: np.interp(s, grid, cdf) / mass)
    assert res.pvalue > 1e-3
    zero = np.mean(d == 0)
    se = math.sqrt(atom_mass(params) * (1 - atom_mass(params)) / d.size)
    assert abs(zero - atom_mass(params)) <= 4 * se
