import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from attn_pricer.core import DomainError, InterestHistory, ModelParams, NumericalFault
from attn_pricer.riskneutral import uncalibrated
from attn_pricer.sim import (cir_step, gof_rejection_rate, replication_seed, run_experiment, simulate_interest,
                             simulate_pair)

D = 1.0 / 360.0
A, B, S = 30.0, 15.0, 0.6


def cir_var(y, dt):
    e = math.exp(-A * dt)
    return y * S * S / A * (e - e * e) + B * S * S / (2 * A) * (1 - e) ** 2


def test_cir_step_conditional_mean(rng):
    y0, dt = 14.0, 0.01
    x = cir_step(np.full(100_000, y0), A, B, S, dt, rng)
    mean = B + (y0 - B) * math.exp(-A * dt)
    assert abs(x.mean() - mean) < 3 * math.sqrt(cir_var(y0, dt) / x.size)


def test_cir_step_conditional_variance(rng):
    y0, dt = 14.0, 0.02
    x = cir_step(np.full(1_000_000, y0), A, B, S, dt, rng)
    v = cir_var(y0, dt)
    # standard error of the sample variance for a near-normal sample
    assert abs(x.var(ddof=1) - v) < 4 * v * math.sqrt(2.0 / x.size)


def test_cir_step_stationary_law(rng):
    x = cir_step(np.full(5000, 3.0), A, B, S, 5.0, rng)
    shape, scale = 2 * A * B / S**2, S**2 / (2 * A)
    assert stats.kstest(x, stats.gamma(shape, scale=scale).cdf).pvalue > 0.01


def test_cir_step_non_finite_is_fault():
    class Broken:
        def poisson(self, lam):
            return np.zeros_like(lam, dtype=int)

        def standard_gamma(self, k):
            return np.full_like(k, np.nan, dtype=float)

    with pytest.raises(NumericalFault):
        cir_step(np.array([1.0]), A, B, S, D, Broken())


def test_cir_step_rejects_nonpositive(rng):
    with pytest.raises(DomainError):
        cir_step(0.0, A, B, S, D, rng)


@given(st.floats(0.5, 40), st.floats(0.5, 20), st.floats(0.05, 1.0), st.integers(0, 2**32 - 1))
def test_interest_stays_positive(a, b, s, seed):
    if 2 * a * b < s * s:
        return
    y, _ = simulate_interest(a, b, s, InterestHistory.constant(b, 0.0), 50, 1 / 52, np.random.default_rng(seed))
    assert np.all(y > 0)


def test_vanishing_price_volatility(base_params, flat_history):
    p = ModelParams(30, 15, 0.6, 0.3, 1e-300, 0.025)
    path = simulate_pair(p, flat_history, 50, D, 1, x0=2.0)
    np.testing.assert_allclose(path.log_price, 2.0 + 0.3 * D * np.arange(51), rtol=0, atol=1e-13)


def test_no_delay_constant_interest_is_black_scholes():
    p = ModelParams(30, 14, 1e-6, 0.1, 0.2, 0.0)
    path = simulate_pair(p, InterestHistory.constant(14.0, 0.0), 4000, D, 3)
    inc = np.diff(path.log_price)
    z = (inc - 0.1 * D) / (0.2 * math.sqrt(14 * D))
    assert stats.kstest(z, "norm").pvalue > 0.01


def test_conditional_law_given_interest(base_params, flat_history):
    path = simulate_pair(base_params, flat_history, 10_000, D, 17)
    m = path.max_lag
    k = round(base_params.tau / D)
    lag = path.interest[m - k:]
    J = 0.5 * D * (lag[1:10_001] + lag[:10_000])
    z = (np.diff(path.log_price) - base_params.mu * D) / (base_params.sigma_P * np.sqrt(J))
    chi2 = float(np.sum(z * z))
    lo, hi = stats.chi2.ppf([0.005, 0.995], z.size)
    assert lo < chi2 < hi
    # Ljung-Box at lag 10
    n = z.size
    zc = z - z.mean()
    acf = np.array([np.sum(zc[h:] * zc[:-h]) for h in range(1, 11)]) / np.sum(zc * zc)
    q = n * (n + 2) * np.sum(acf**2 / (n - np.arange(1, 11)))
    assert stats.chi2.sf(q, 10) > 0.01


def test_non_grid_delay_interpolates(base_params, flat_history):
    p = ModelParams(30, 15, 0.6, 0.0, 0.2, 0.0251)
    path = simulate_pair(p, flat_history, 20, D, 1)
    assert np.all(np.isfinite(path.log_price))


def test_simulation_deterministic(base_params, flat_history):
    a = simulate_pair(base_params, flat_history, 100, D, 42)
    b = simulate_pair(base_params, flat_history, 100, D, 42)
    assert np.array_equal(a.interest, b.interest) and np.array_equal(a.log_price, b.log_price)


def test_simulation_rejects_invalid(flat_history):
    with pytest.raises(DomainError):
        simulate_pair(ModelParams(1, 0.1, 1, 0, 0.2, 0.0), flat_history, 10, D, 1)


def test_risk_neutral_martingale_short_paths(base_params, flat_history):
    rn = uncalibrated(base_params)
    p = ModelParams(30, 15, 0.6, 0.0, 0.2, 0.025, r=0.05)
    finals = np.array([math.exp(simulate_pair(p, flat_history, 5, D, s, rn=rn).log_price[-1])
                       for s in range(20_000)])
    disc = finals * math.exp(-0.05 * 5 * D)
    assert abs(disc.mean() - 1.0) < 4 * disc.std(ddof=1) / math.sqrt(disc.size)


def test_replication_seed():
    assert replication_seed(7, 0) == 7 and replication_seed(7, 3) == 4


def test_experiment_deterministic_and_csv(base_params, tmp_path):
    s1 = run_experiment(base_params, [0.2], 1, 5, D)
    s2 = run_experiment(base_params, [0.2], 1, 5, D)
    s1.to_csv(tmp_path / "a.csv")
    s2.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = list(csv.reader(open(tmp_path / "a.csv")))
    assert rows[0] == ["horizon", "parameter", "count", "mean", "std", "q1", "median", "q3"]
    assert len(rows) == 1 + 6


def test_experiment_threads_do_not_change_results(base_params):
    s1 = run_experiment(base_params, [0.2], 4, 5, D, threads=1)
    s2 = run_experiment(base_params, [0.2], 4, 5, D, threads=2)
    assert s1.rows == s2.rows


def test_experiment_records_failures(base_params):
    # 18 observations are below the CIR fitting floor: every fit fails, none aborts
    s = run_experiment(base_params, [0.05, 0.2], 3, 1, D)
    short = s.estimates[0.05]["a"]
    assert short.size == 0 and len([f for f in s.failures if f[1] == 0.05]) == 3
    assert s.estimates[0.2]["a"].size == 3 - len([f for f in s.failures if f[1] == 0.2])


def test_experiment_requires_grid_multiples(base_params):
    with pytest.raises(DomainError):
        run_experiment(base_params, [0.2001], 1, 1, D)
    with pytest.raises(DomainError):
        run_experiment(ModelParams(30, 15, 0.6, 0, 0.2, 0.0251), [0.2], 1, 1, D)


def test_gof_known_parameters_near_nominal(base_params):
    n, p = gof_rejection_rate(base_params, 15.0, 361, 1 / 360, 200, seed=1, refit=False)
    assert p.size == 200 and 0.01 <= n / 200 <= 0.10
    assert 0.4 < p.mean() < 0.6


def test_gof_refit_is_conservative(base_params):
    n, p = gof_rejection_rate(base_params, 15.0, 361, 1 / 360, 40, seed=1)
    assert p.mean() > 0.6
