import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from flexregion.powerflow import solve_fixed_point_batch
from flexregion.synthetic import CLOUDY_MIXTURE
from flexregion.uncertainty import (ErrorScenarioTable, Gmm, RiskConfig, UncertainInjection, _em_once,
                                    fit_error_table, fit_gmm, fit_gmm_curves, gmm_moments, k_epsilon,
                                    power_bin, propagate, read_error_history, sample_gmm)


def test_k_epsilon_values():
    assert k_epsilon(0.5) == 1.0
    assert k_epsilon(0.05) == pytest.approx(math.sqrt(19), abs=1e-12)
    assert k_epsilon(0.9) == pytest.approx(1 / 3, abs=1e-12)


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_k_epsilon_domain(eps):
    with pytest.raises(ValueError):
        k_epsilon(eps)


@settings(max_examples=100)
@given(a=st.floats(1e-6, 1 - 1e-6), b=st.floats(1e-6, 1 - 1e-6))
def test_k_epsilon_decreasing_and_reciprocal(a, b):
    if a < b:
        assert k_epsilon(a) > k_epsilon(b)
    assert k_epsilon(a) * k_epsilon(1 - a) == pytest.approx(1.0, rel=1e-9)


def test_risk_config_recomputes():
    r = RiskConfig(0.2, 0.05, 0.1)
    assert (r.k_p, r.k_v, r.k_i) == (k_epsilon(0.2), k_epsilon(0.05), k_epsilon(0.1))
    with pytest.raises(ValueError):
        RiskConfig(eps_v=1.0)


def test_single_gaussian_selects_one():
    x = np.random.default_rng(0).normal(0, 0.01, 5000)
    assert fit_gmm(x, 4).n_components == 1


def test_cloudy_mixture_bic_curve_minimum_at_three():
    x = sample_gmm(CLOUDY_MIXTURE, 5000, seed=2)
    fit = fit_gmm_curves(x, 10, restarts=3, seed=0)
    assert fit.ks == list(range(1, 11))
    assert int(np.argmin(fit.bic)) + 1 == 3
    assert fit.best.n_components == 3
    assert len(fit.aic) == 10 and all(np.isfinite(fit.aic))


def test_em_likelihood_never_decreases():
    x = sample_gmm(CLOUDY_MIXTURE, 3000, seed=4)
    for k in (2, 3, 4):
        _, _, hist = _em_once(x, k, np.random.default_rng(k), 1e-10, 300, 1e-10)
        h = np.array(hist)
        assert np.all(np.diff(h) >= -1e-9 * np.abs(h[1:]))


def test_degenerate_samples():
    g = fit_gmm(np.full(100, 0.3), 3)
    assert g.n_components == 1 and g.means[0] == 0.3 and g.variances[0] == 1e-10


def test_fit_preconditions():
    with pytest.raises(ValueError, match="no samples"):
        fit_gmm([], 2)
    with pytest.raises(ValueError):
        fit_gmm(np.arange(20.0), 5)


def test_gmm_validation():
    with pytest.raises(ValueError):
        Gmm([0.5, 0.6], [0, 1], [1, 1])
    with pytest.raises(ValueError):
        Gmm([1.0], [0.0], [0.0])


def test_moments():
    assert gmm_moments(Gmm([1.0], [0.3], [0.04])) == pytest.approx((0.3, 0.04))
    mean, var = gmm_moments(CLOUDY_MIXTURE)
    assert mean == pytest.approx(0.01662, abs=5e-6)
    x = sample_gmm(CLOUDY_MIXTURE, 1_000_000, seed=9)
    assert x.mean() == pytest.approx(mean, rel=0.01)
    assert x.var() == pytest.approx(var, rel=0.01)
    assert var >= CLOUDY_MIXTURE.variances.min()


def test_sampling_basics():
    g = Gmm([1.0], [0.2], [0.01])
    assert sample_gmm(g, 0, seed=1).size == 0
    np.testing.assert_array_equal(sample_gmm(g, 50, seed=3), sample_gmm(g, 50, seed=3))
    x = sample_gmm(g, 100_000, seed=1)
    assert abs(x.mean() - 0.2) < 3 * 0.1 / math.sqrt(x.size)


def test_sampling_matches_cdf():
    x = sample_gmm(CLOUDY_MIXTURE, 100_000, seed=5)
    ks = stats.kstest(x, CLOUDY_MIXTURE.cdf).statistic
    assert ks < 0.02
    edges = CLOUDY_MIXTURE.ppf(np.linspace(0, 1, 41)[1:-1])
    counts = np.bincount(np.searchsorted(edges, x), minlength=40)
    assert stats.chisquare(counts).pvalue > 0.05


def test_ppf_inverts_cdf():
    u = np.linspace(0.001, 0.999, 50)
    np.testing.assert_allclose(CLOUDY_MIXTURE.cdf(CLOUDY_MIXTURE.ppf(u)), u, atol=1e-10)


def test_power_bins():
    assert [power_bin(p) for p in (0.0, 0.24, 0.25, 0.6, 0.99, 1.0, 1.3)] == [0, 0, 1, 2, 3, 3, 3]


def test_table_fallback_and_round_trip(table, tmp_path):
    g1 = Gmm([1.0], [0.0], [1e-4])
    t = ErrorScenarioTable({("sunny", 1): g1, ("sunny", 3): Gmm([1.0], [0.1], [1e-4])})
    assert t.lookup_bin("sunny", 2) is g1
    assert t.lookup_bin("sunny", 0) is g1
    with pytest.raises(KeyError):
        t.lookup("overcast", 0.3)
    p = tmp_path / "t.json"
    table.save(p)
    back = ErrorScenarioTable.load(p)
    assert back.to_dict() == table.to_dict()
    assert json.loads(p.read_text()) == table.to_dict()


def test_bundled_table_resolves_everything(table):
    for day in ("sunny", "cloudy", "overcast"):
        for b in range(4):
            assert table.lookup_bin(day, b).n_components >= 1


def test_small_bin_pools_with_warning():
    rng = np.random.default_rng(0)
    rows = [("sunny", 0.1, e) for e in rng.normal(0, 0.01, 300)] + [("sunny", 0.9, 0.0)] * 5
    with pytest.warns(UserWarning, match="pooled"):
        t = fit_error_table(rows, k_max=2, restarts=2)
    assert len(t.notes) == 1 and "bin 3" in t.notes[0]
    assert t.models[("sunny", 3)].n_samples == 305


def test_read_history_columns(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("day_type,power\nsunny,0.1\n")
    with pytest.raises(ValueError, match="error_pu"):
        read_error_history(p)


def test_injection_covariance_psd(make_state):
    u = make_state("12:00").uncertainty
    s = u.sigma_xi
    assert np.array_equal(s, s.T)
    assert np.linalg.eigvalsh(s).min() >= -1e-15


class _Affine:
    def __init__(self, b):
        self.v_coef = np.atleast_2d(b)
        self.v_const = np.zeros(1)
        self.i_coef = np.atleast_2d(b)
        self.i_const = np.zeros(1)


def test_propagate_scalar_and_zero():
    p = propagate(_Affine([-3.0]), UncertainInjection.from_moments([0.0], [[0.04]]))
    assert p.sigma_v[0] == pytest.approx(0.6)
    p0 = propagate(_Affine([2.0, 1.0]), UncertainInjection.from_moments([0.1, 0.0], np.zeros((2, 2))))
    assert p0.sigma_v[0] == 0.0 and p0.mu_v[0] == pytest.approx(0.2)
    pn = propagate(_Affine([2.0]), UncertainInjection.none(1))
    assert pn.sigma_v[0] == 0.0


@settings(max_examples=30, deadline=None)
@given(c=st.floats(0.0, 10.0))
def test_propagate_linear_in_covariance(make_state, c):
    st_ = make_state("12:00")
    a = propagate(st_.ma, st_.uncertainty)
    b = propagate(st_.ma, st_.uncertainty.scaled(c))
    np.testing.assert_allclose(b.sigma_v, c * a.sigma_v, rtol=1e-10, atol=1e-18)
    np.testing.assert_allclose(b.sigma_i, c * a.sigma_i, rtol=1e-10, atol=1e-18)


@pytest.mark.parametrize("day", ["sunny", "cloudy"])
def test_propagation_matches_monte_carlo(make_state, day):
    st_ = make_state("12:00", day)
    g, u = st_.grid, st_.uncertainty
    pr = propagate(st_.ma, u, st_.base_injection.vector())
    e = u.sample_sources(100_000, np.random.default_rng(0))
    x = st_.base_injection.vector()[:, None] + u.loadings @ e
    pf = solve_fixed_point_batch(g, x[: g.n_y] + 1j * x[g.n_y: 2 * g.n_y])
    assert pf.converged.all()
    v = np.abs(pf.v[g.load_idx])
    sig = pr.sigma_v[g.load_idx]
    keep = sig > 1e-6
    assert keep.sum() > 10
    assert np.max(np.abs(v.std(axis=1)[keep] / sig[keep] - 1)) < 0.05
