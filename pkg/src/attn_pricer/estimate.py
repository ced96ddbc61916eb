"""Estimation of the interest and price parameters from discrete data.

The interest process is fitted by exact maximum likelihood on its
noncentral chi-squared transition density.  Given the interest path the log
returns are conditionally Gaussian, so drift and volatility have closed-form
conditional MLEs, and the delay becomes a choice among ``M + 1`` candidate
lags.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import optimize, stats

from . import kernels
from .core import DomainError, SeriesPair

MIN_CIR_OBSERVATIONS = 30
N_PRICE_PARAMS = 2
_PENALTY = 1e12
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class CirFit:
    a: float
    b: float
    sigma_I: float
    loglik: float
    converged: bool
    iterations: int


@dataclass(frozen=True)
class TransitionInternals:
    c: float
    q: float
    u: np.ndarray
    p: np.ndarray


@dataclass(frozen=True)
class PriceFit:
    mu: float
    sigma_P: float
    tau: float
    lag: int
    loglik: float
    aic: float
    bic: float
    criterion_table: list = field(repr=False)
    degenerate: bool = False


class PriceCMLE(NamedTuple):
    mu_hat: float
    sigma_P_hat: float
    loglik: float
    degenerate: bool


class Residuals(NamedTuple):
    values: np.ndarray
    clamped: np.ndarray


def transition_internals(y_next, y_prev, a, b, sigma_I, delta) -> TransitionInternals:
    c = 2.0 * a / (sigma_I**2 * -math.expm1(-a * delta))
    q = 2.0 * a * b / sigma_I**2 - 1.0
    u = c * np.asarray(y_prev, dtype=float) * math.exp(-a * delta)
    p = 2.0 * c * np.asarray(y_next, dtype=float)
    return TransitionInternals(c, q, u, p)


def _check_cir_args(a, b, sigma_I, delta):
    if not (a > 0 and sigma_I > 0 and delta > 0):
        raise DomainError(f"need a, sigma_I, delta > 0 (got a={a!r}, sigma_I={sigma_I!r}, delta={delta!r})")
    q = 2.0 * a * b / sigma_I**2 - 1.0
    if not q + 1.0 > 0:
        raise DomainError(f"transition density undefined: q+1 = 2ab/sigma_I^2 = {q + 1.0!r} <= 0")


def cir_logdensity(y_next, y_prev, a, b, sigma_I, delta):
    """Log transition density of the CIR process over one step ``delta``.

    Vectorised over ``y_next`` / ``y_prev``; evaluated entirely in log space.
    """
    _check_cir_args(a, b, sigma_I, delta)
    yn, yp = np.broadcast_arrays(np.asarray(y_next, dtype=float), np.asarray(y_prev, dtype=float))
    if np.any(~(yn > 0)) or np.any(~(yp > 0)):
        raise DomainError("CIR density requires positive states")
    out = kernels.cir_logdensity_many(yn.ravel(), yp.ravel(), a, b, sigma_I, delta).reshape(yn.shape)
    return float(out) if out.ndim == 0 else out


def cir_loglik(series, a, b, sigma_I, delta) -> float:
    y = np.asarray(series, dtype=float)
    if y.ndim != 1 or y.size < 2:
        raise DomainError("CIR likelihood needs at least two observations")
    if np.any(~(y > 0)):
        bad = int(np.flatnonzero(~(y > 0))[0])
        raise DomainError(f"nonpositive observation {y[bad]!r} at index {bad}")
    _check_cir_args(a, b, sigma_I, delta)
    ll = kernels.cir_loglik(y, a, b, sigma_I, delta)
    return ll if math.isfinite(ll) else -math.inf


def cls_initial_guess(series, delta):
    """Least-squares fit of the exact AR(1) discretisation of the CIR mean."""
    y = np.asarray(series, dtype=float)
    x0, x1 = y[:-1], y[1:]
    phi, alpha = np.polyfit(x0, x1, 1)
    if 0.0 < phi < 1.0:
        a = -math.log(phi) / delta
        b = alpha / (1.0 - phi)
    else:
        a = 1.0 / (y.size * delta)
        b = float(np.mean(y))
    if not b > 0:
        b = float(np.mean(y))
    resid = x1 - (alpha + phi * x0)
    s2 = float(np.mean(resid**2 / x0)) / delta
    s2 = min(max(s2, 1e-12 * b), 2.0 * a * b)
    return a, b, math.sqrt(s2)


def fit_cir_mle(series, delta, init=None, maxiter=4000) -> CirFit:
    """Maximise the CIR log-likelihood subject to the Feller condition.

    Nelder-Mead over ``log(a), log(b), log(sigma_I)`` with a penalty wall
    where ``2ab < sigma_I^2``; a second pass restarts from the first optimum.
    """
    y = np.ascontiguousarray(series, dtype=float)
    if y.ndim != 1 or y.size < MIN_CIR_OBSERVATIONS:
        raise DomainError(f"CIR fit needs at least {MIN_CIR_OBSERVATIONS} observations, got {y.size}")
    if np.any(~(y > 0)):
        bad = int(np.flatnonzero(~(y > 0))[0])
        raise DomainError(f"nonpositive observation {y[bad]!r} at index {bad}")
    if not delta > 0:
        raise DomainError(f"delta must be > 0, got {delta!r}")

    a0, b0, s0 = cls_initial_guess(y, delta) if init is None else init

    def objective(theta):
        a, b, s = np.exp(theta)
        s2 = s * s
        gap = s2 - 2.0 * a * b
        if gap > 0:
            return _PENALTY * (1.0 + gap / s2)
        ll = kernels.cir_loglik(y, a, b, s, delta)
        return -ll if math.isfinite(ll) else _PENALTY

    theta = np.log([a0, b0, s0])
    iterations = 0
    converged = False
    for step in (0.1, 0.02):
        simplex = np.vstack([theta, theta + step * np.eye(3)])
        res = optimize.minimize(
            objective, theta, method="Nelder-Mead",
            options={"initial_simplex": simplex, "xatol": 1e-8, "fatol": 1e-8, "maxiter": maxiter},
        )
        theta = res.x
        iterations += int(res.nit)
        converged = bool(res.success) and res.fun < _PENALTY
    a, b, s = (float(v) for v in np.exp(theta))
    ll = -float(objective(theta))
    return CirFit(a=a, b=b, sigma_I=s, loglik=ll, converged=converged and math.isfinite(ll), iterations=iterations)


def integrated_interest(proxy, k, delta, max_lag=0):
    """Trapezoid estimates of the delayed integrated interest per step.

    ``proxy`` holds ``y_{-max_lag}..y_N``; returns ``z_1..z_N`` for lag ``k``.
    """
    y = np.asarray(proxy, dtype=float)
    if k < 0 or k > max_lag:
        raise DomainError(f"lag {k} needs {k} leading observations, history has {max_lag}")
    n = y.size - 1 - max_lag
    if n < 1:
        raise DomainError("proxy window too short for any return")
    j = np.arange(1, n + 1) + max_lag
    z = 0.5 * delta * (y[j - k] + y[j - 1 - k])
    if np.any(~(z > 0)):
        raise DomainError("integrated interest must be positive")
    return z


def price_cond_loglik(mu, sigma_P, returns, z, delta) -> float:
    r = np.asarray(returns, dtype=float)
    z = np.asarray(z, dtype=float)
    var = sigma_P**2 * z
    return float(-0.5 * np.sum(_LOG_2PI + np.log(var) + (r - mu * delta) ** 2 / var))


def fit_price_cmle(returns, z, delta) -> PriceCMLE:
    r = np.asarray(returns, dtype=float)
    z = np.asarray(z, dtype=float)
    if r.shape != z.shape or r.ndim != 1 or r.size < 2:
        raise DomainError("returns and z need equal lengths >= 2")
    if np.any(~(z > 0)):
        bad = int(np.flatnonzero(~(z > 0))[0])
        raise DomainError(f"z[{bad}] = {z[bad]!r} must be > 0")
    w = 1.0 / z
    mu = float(np.sum(r * w) / (delta * np.sum(w)))
    ss = float(np.sum((r - mu * delta) ** 2 * w))
    n = r.size
    sigma = math.sqrt(ss / n)
    if sigma == 0.0:
        return PriceCMLE(mu, 0.0, math.inf, True)
    ll = -n * math.log(sigma) - 0.5 * np.sum(np.log(2.0 * math.pi * z)) - 0.5 * n
    return PriceCMLE(mu, sigma, float(ll), False)


def select_lag(series: SeriesPair) -> PriceFit:
    """Choose the delay among ``0..M`` grid steps by conditional likelihood."""
    m = series.max_lag
    n = series.n
    if n < 2:
        raise DomainError("need at least two returns")
    returns = np.diff(series.log_prices)
    mus, sigmas, lls = kernels.lag_scan(returns, series.proxy, m, series.delta)
    aic = 2 * N_PRICE_PARAMS - 2.0 * lls
    bic = N_PRICE_PARAMS * math.log(n) - 2.0 * lls
    table = [(int(l), float(lls[l]), float(aic[l]), float(bic[l])) for l in range(m + 1)]
    best = int(np.argmax(lls))
    return PriceFit(
        mu=float(mus[best]), sigma_P=float(sigmas[best]), tau=best * series.delta, lag=best,
        loglik=float(lls[best]), aic=float(aic[best]), bic=float(bic[best]),
        criterion_table=table, degenerate=bool(sigmas[best] == 0.0),
    )


def cir_transition_cdf(y_next, y_prev, a, b, sigma_I, delta):
    ti = transition_internals(y_next, y_prev, a, b, sigma_I, delta)
    return stats.ncx2.cdf(ti.p, 2.0 * (ti.q + 1.0), 2.0 * ti.u)


def generalized_residuals(series, fit: CirFit, delta, eps=1e-12) -> Residuals:
    """Normal quantiles of the fitted transition CDF at each observation."""
    y = np.asarray(series, dtype=float)
    _check_cir_args(fit.a, fit.b, fit.sigma_I, delta)
    u = cir_transition_cdf(y[1:], y[:-1], fit.a, fit.b, fit.sigma_I, delta)
    clamped = (u < eps) | (u > 1.0 - eps)
    if clamped.any():
        warnings.warn(f"{int(clamped.sum())} transition CDF values clamped to [{eps}, 1-{eps}]", RuntimeWarning)
    u = np.clip(u, eps, 1.0 - eps)
    return Residuals(stats.norm.ppf(u), clamped)


def kolmogorov_q(lam: float) -> float:
    """Asymptotic Kolmogorov survival function."""
    if lam < 0.18:
        return 1.0
    total = 0.0
    sign = 1.0
    for k in range(1, 101):
        term = math.exp(-2.0 * k * k * lam * lam)
        total += sign * term
        if term < 1e-16 * abs(total):
            break
        sign = -sign
    return min(max(2.0 * total, 0.0), 1.0)


def ks_test_normal(residuals):
    """One-sample KS test against N(0, 1); returns ``(D, p_value)``."""
    x = np.sort(np.asarray(residuals, dtype=float))
    n = x.size
    if n < 10:
        raise DomainError(f"KS test needs at least 10 residuals, got {n}")
    cdf = stats.norm.cdf(x)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))
    rn = math.sqrt(n)
    return d, kolmogorov_q((rn + 0.12 + 0.11 / rn) * d)
