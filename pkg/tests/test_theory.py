import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from toruslab.spectral import FOUR_PI_SQ, nonzero_mode_heat_sum
from toruslab.theory import (CRITICAL, SUBCRITICAL, SUPERCRITICAL, DeviationParams,
                             bernstein_bound, cosine_lp_norm, epsilon_schedule,
                             gamma_rate, heat_trace_weyl_check, m_functional,
                             psi_second_moment_symmetric, regime, renorm_log_prediction,
                             sigma_sq_eigenfunction, spectral_sum, variance_const_drift,
                             variance_const_drift_quadrature)


def test_gamma_rate_examples():
    assert gamma_rate(0.5, 1, 100.0) == pytest.approx(0.1)
    assert gamma_rate(0.5, 3, math.e ** 4) == pytest.approx(2.0 * math.e ** -2)
    assert gamma_rate(0.5, 4, 1000.0) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        gamma_rate(0.5, 1, 1.0)


def test_regime_classification():
    r = regime(0.5, 1)
    assert r.regime == SUBCRITICAL and r.exponent == -0.5 and r.log_power == 0.0
    r = regime(0.5, 3)
    assert r.regime == CRITICAL and r.exponent == -0.5 and r.log_power == 0.5
    r = regime(1.0, 4)
    assert r.regime == CRITICAL
    r = regime(0.5, 4)
    assert r.regime == SUPERCRITICAL and r.exponent == pytest.approx(-1.0 / 3.0)


def test_gamma_rate_critical_dominance():
    # at d = 2(1+alpha) the log-corrected rate dominates both neighbours for T >= 3
    for alpha, d in [(0.5, 3), (1.0, 4)]:
        for t in (3.0, 10.0, 1e4):
            crit = gamma_rate(alpha, d, t)
            assert crit >= t ** -0.5
            assert crit >= t ** (-1.0 / (d - 2 * alpha))


def test_sigma_sq_examples():
    assert sigma_sq_eigenfunction(1.0, 1.0) == pytest.approx(2.0)
    assert sigma_sq_eigenfunction(FOUR_PI_SQ, 0.5) == pytest.approx(1.0 / math.pi)
    for alpha in (0.3, 0.6, 1.0):
        assert sigma_sq_eigenfunction(1.0, alpha) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        sigma_sq_eigenfunction(0.0, 0.5)


def test_m_functional_branches():
    # d > 2 alpha: plain L^{d/(2 alpha)} norm; for the first eigenfunction in d=3
    # the analytic value is sqrt(2) (4/(3 pi))^{1/3}
    val = m_functional(cosine_lp_norm, 0.5, 3)
    assert val == pytest.approx(math.sqrt(2.0) * (4.0 / (3.0 * math.pi)) ** (1.0 / 3.0),
                                rel=1e-6)
    # zero function: zero scale
    assert m_functional(lambda p: 0.0, 0.5, 3) == 0.0
    # d = 2 alpha: grid infimum is bounded by the p = 4 member, (4/(4a-1))^2 |g|_4
    val = m_functional(cosine_lp_norm, 0.5, 1)
    assert val <= 16.0 * cosine_lp_norm(4.0) + 1e-12
    # d < 2 alpha: L^1 branch (no integer torus dimension reaches it for alpha <= 1,
    # but the functional itself is generic)
    assert m_functional(cosine_lp_norm, 0.9, 1) == pytest.approx(cosine_lp_norm(1.0))


def test_bernstein_bound_examples():
    params = DeviationParams(sigma_sq=1.0, m=0.0, gamma=1.0, h_norm=1.0)
    # xi -> 0: bound -> 2 h_norm
    assert bernstein_bound(100.0, 1e-9, params) == pytest.approx(2.0)
    assert bernstein_bound(100.0, 1.0, params) == pytest.approx(2.0 * math.exp(-50.0))
    # doubling T squares the exponential factor when m = 0
    f1 = bernstein_bound(50.0, 0.3, params) / 2.0
    f2 = bernstein_bound(100.0, 0.3, params) / 2.0
    assert f2 == pytest.approx(f1 ** 2, rel=1e-12)
    with pytest.raises(ValueError):
        bernstein_bound(-1.0, 0.5, params)
    with pytest.raises(ValueError):
        DeviationParams(sigma_sq=1.0, m=0.0, gamma=0.0)


def test_psi_second_moment_examples():
    assert psi_second_moment_symmetric(1.0, 0.5, 1.0) == pytest.approx(2.0 / math.e)
    lam, alpha = 7.3, 0.6
    assert psi_second_moment_symmetric(lam, alpha, 1e9) == pytest.approx(
        sigma_sq_eigenfunction(lam, alpha), rel=1e-8)
    assert psi_second_moment_symmetric(lam, alpha, 1e-9) < 1e-8


@given(st.floats(min_value=0.5, max_value=200.0), st.floats(min_value=0.2, max_value=1.0),
       st.floats(min_value=1.0, max_value=1e5))
@settings(max_examples=60, deadline=None)
def test_psi_second_moment_monotone_and_gap(lam, alpha, t_horizon):
    v1 = psi_second_moment_symmetric(lam, alpha, t_horizon)
    v2 = psi_second_moment_symmetric(lam, alpha, 2.0 * t_horizon)
    sigma = sigma_sq_eigenfunction(lam, alpha)
    assert v1 <= v2 + 1e-15
    assert v2 <= sigma + 1e-15
    # gap to the limit is at most 2/(T lambda^(2 alpha)) for T >= 1
    assert sigma - v1 <= 2.0 / (t_horizon * lam ** (2 * alpha)) + 1e-15


def test_variance_const_drift_examples():
    sig, rhs = variance_const_drift([1], 0.5, [0.0])
    assert sig == pytest.approx(FOUR_PI_SQ ** -0.5)
    sig, rhs = variance_const_drift([1], 1.0, [1.0])
    assert sig == pytest.approx(1.0 / (FOUR_PI_SQ + 1.0))
    assert rhs == pytest.approx(sig, abs=1e-12)
    with pytest.raises(ValueError):
        variance_const_drift([0, 0], 0.5, [0.1, 0.2])


def test_variance_const_drift_identity_random(rng):
    for _ in range(100):
        d = int(rng.integers(1, 4))
        mode = rng.integers(-4, 5, size=d)
        if not np.any(mode):
            mode[d - 1] = 2
        alpha = float(rng.uniform(0.25, 1.0))
        drift = rng.uniform(-2.0, 2.0, size=d)
        sig, rhs = variance_const_drift(mode, alpha, drift)
        assert abs(sig - rhs) < 1e-12


def test_variance_const_drift_quadrature_crosscheck():
    for mode, alpha, drift in [([1], 1.0, [1.0]), ([1], 0.7, [0.5]), ([2, 1], 0.9, [0.3, -0.4])]:
        sig, _ = variance_const_drift(mode, alpha, drift)
        quad = variance_const_drift_quadrature(mode, alpha, drift)
        assert sig == pytest.approx(quad, abs=1e-8)


def test_epsilon_schedule_examples():
    assert epsilon_schedule(0.5, 1, 100.0) == pytest.approx(0.01)
    assert epsilon_schedule(0.5, 4, 1000.0) == pytest.approx(0.01)
    assert epsilon_schedule(1.0, 4, 77.0) == pytest.approx(1.0 / 77.0)


def test_spectral_sum_properties(model_d1, model_d3):
    # s = 0 equals the heat trace at time 2 eps
    eps = 0.05
    assert spectral_sum(model_d1, eps, 0.0) == pytest.approx(
        nonzero_mode_heat_sum(1, 2 * eps), abs=1e-10)
    # eps -> infinity: vanishes
    assert spectral_sum(model_d1, 50.0, 0.0) < 1e-12
    # termwise monotone in eps and s
    assert spectral_sum(model_d3, 2e-4, 1.5) <= spectral_sum(model_d3, 1e-4, 1.5)
    assert spectral_sum(model_d3, 1e-4, 2.0) <= spectral_sum(model_d3, 1e-4, 1.5)
    with pytest.raises(ValueError):
        spectral_sum(model_d1, -0.1, 1.0)


def test_spectral_sum_log_asymptote_remainder(model_d3):
    # the gap to the logarithmic asymptote is an O(1) constant of the unit
    # torus (about -0.127); it is NOT small relative to the asymptote at
    # desk-scale eps, but it is stable across three decades of eps.
    remainders = [spectral_sum(model_d3, e, 1.5) - renorm_log_prediction(1.0, e)
                  for e in (1e-3, 1e-4, 1e-5)]
    assert (max(remainders) - min(remainders)) / abs(np.mean(remainders)) < 0.25
    assert all(abs(r) < 0.2 for r in remainders)


def test_heat_trace_examples(model_d3, model_d1):
    trace, weyl = heat_trace_weyl_check(model_d3, 1e-3)
    assert 0.98 <= trace / weyl <= 1.02
    _, weyl2 = heat_trace_weyl_check(model_d3, 1e-2)
    assert weyl2 == pytest.approx((0.04 * math.pi) ** -1.5, rel=1e-12)
    trace_large, _ = heat_trace_weyl_check(model_d3, 5.0)
    assert trace_large < 1e-8
    with pytest.raises(ValueError):
        heat_trace_weyl_check(model_d1, 1e-3)


def test_renorm_log_prediction_examples():
    assert renorm_log_prediction(1.0, 0.5) == pytest.approx(
        math.log(math.sqrt(2.0) + 1.0) / (2 * math.pi ** 2))
    assert renorm_log_prediction(2.0, 0.5) == pytest.approx(
        2 * math.log(math.sqrt(2.0) + 1.0) / (2 * math.pi ** 2))
    # leading behaviour: prediction / ((vol/4 pi^2) log(1/eps)) -> 1
    eps = 1e-12
    lead = renorm_log_prediction(1.0, eps) / (math.log(1 / eps) / (4 * math.pi ** 2))
    assert lead == pytest.approx(1.0, abs=0.05)
    with pytest.raises(ValueError):
        renorm_log_prediction(1.0, 0.0)
