"""Scalar-loop kernels compiled with numba.

The same functions run as plain Python when numba is unavailable, which is
slow; ``kernels`` picks the vectorised numpy versions in that case.
"""

import math

import numpy as np

from ._accel import njit

DEBYE_MIN_ORDER = 30.0
HANKEL_MIN_ARG = 2000.0
_LOG_2PI = math.log(2.0 * math.pi)


@njit
def _debye_log_iv(nu, z):
    # uniform asymptotic expansion in 1/nu, four correction terms
    x = z / nu
    s = math.sqrt(1.0 + x * x)
    t = 1.0 / s
    eta = s + math.log(x / (1.0 + s))
    t2 = t * t
    u1 = t * (3.0 - 5.0 * t2) / 24.0
    u2 = t2 * (81.0 - 462.0 * t2 + 385.0 * t2 * t2) / 1152.0
    u3 = t * t2 * (30375.0 - 369603.0 * t2 + 765765.0 * t2 * t2 - 425425.0 * t2 * t2 * t2) / 414720.0
    t4 = t2 * t2
    u4 = t4 * (4465125.0 - 94121676.0 * t2 + 349922430.0 * t4
               - 446185740.0 * t4 * t2 + 185910725.0 * t4 * t4) / 39813120.0
    inv = 1.0 / nu
    corr = 1.0 + inv * (u1 + inv * (u2 + inv * (u3 + inv * u4)))
    return nu * eta - 0.5 * (_LOG_2PI + math.log(nu)) - 0.5 * math.log(s) + math.log(corr)


@njit
def _hankel_log_iv(nu, z):
    mu = 4.0 * nu * nu
    term = 1.0
    total = 1.0
    for k in range(1, 30):
        nxt = -term * (mu - (2.0 * k - 1.0) ** 2) / (k * 8.0 * z)
        if abs(nxt) >= abs(term):
            break
        term = nxt
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    return z - 0.5 * (_LOG_2PI + math.log(z)) + math.log(total)


@njit
def _series_log_iv(nu, z):
    # sum of (z/2)^(2k+nu) / (k! Gamma(k+nu+1)), anchored at the largest term
    half = 0.5 * z
    q = half * half
    disc = nu * nu + z * z
    k0 = int(math.ceil(0.5 * (-(nu + 2.0) + math.sqrt(disc))))
    if k0 < 0:
        k0 = 0
    log_peak = (2.0 * k0 + nu) * math.log(half) - math.lgamma(k0 + 1.0) - math.lgamma(k0 + nu + 1.0)
    total = 1.0
    term = 1.0
    k = k0
    while True:
        term *= q / ((k + 1.0) * (k + nu + 1.0))
        total += term
        k += 1
        if term < 1e-17 * total:
            break
    term = 1.0
    k = k0
    while k > 0:
        term *= (k * (k + nu)) / q
        total += term
        k -= 1
        if term < 1e-17 * total:
            break
    return log_peak + math.log(total)


@njit
def log_iv(nu, z):
    """log of the modified Bessel function I_nu(z) for nu > -1, z > 0."""
    if nu >= DEBYE_MIN_ORDER:
        return _debye_log_iv(nu, z)
    if z > HANKEL_MIN_ARG and z > 10.0 * nu * nu:
        return _hankel_log_iv(nu, z)
    return _series_log_iv(nu, z)


@njit
def cir_logdensity(y_next, y_prev, a, b, sigma, delta):
    ead = math.exp(-a * delta)
    c = 2.0 * a / (sigma * sigma * -math.expm1(-a * delta))
    q = 2.0 * a * b / (sigma * sigma) - 1.0
    u = c * y_prev * ead
    v = c * y_next
    z = 2.0 * math.sqrt(u * v)
    return math.log(c) - u - v + 0.5 * q * math.log(v / u) + log_iv(q, z)


@njit
def cir_loglik(series, a, b, sigma, delta):
    ead = math.exp(-a * delta)
    c = 2.0 * a / (sigma * sigma * -math.expm1(-a * delta))
    q = 2.0 * a * b / (sigma * sigma) - 1.0
    logc = math.log(c)
    total = 0.0
    for j in range(series.size - 1):
        u = c * series[j] * ead
        v = c * series[j + 1]
        z = 2.0 * math.sqrt(u * v)
        total += logc - u - v + 0.5 * q * math.log(v / u) + log_iv(q, z)
    return total


@njit
def cir_logdensity_many(y_next, y_prev, a, b, sigma, delta):
    out = np.empty(y_next.size)
    for i in range(y_next.size):
        out[i] = cir_logdensity(y_next[i], y_prev[i], a, b, sigma, delta)
    return out


@njit
def lag_scan(returns, proxy, max_lag, delta):
    """Closed-form conditional MLE for every lag 0..max_lag.

    ``proxy`` holds y_{-M}..y_N; returns are r_1..r_N.
    """
    n = returns.size
    out_mu = np.empty(max_lag + 1)
    out_sig = np.empty(max_lag + 1)
    out_ll = np.empty(max_lag + 1)
    for lag in range(max_lag + 1):
        s_w = 0.0
        s_rw = 0.0
        s_logz = 0.0
        for j in range(1, n + 1):
            z = 0.5 * delta * (proxy[max_lag + j - lag] + proxy[max_lag + j - 1 - lag])
            s_w += 1.0 / z
            s_rw += returns[j - 1] / z
            s_logz += math.log(z)
        mu = s_rw / (delta * s_w)
        ss = 0.0
        for j in range(1, n + 1):
            z = 0.5 * delta * (proxy[max_lag + j - lag] + proxy[max_lag + j - 1 - lag])
            e = returns[j - 1] - mu * delta
            ss += e * e / z
        sig2 = ss / n
        out_mu[lag] = mu
        out_sig[lag] = math.sqrt(sig2)
        if sig2 > 0.0:
            out_ll[lag] = -0.5 * n * math.log(sig2) - 0.5 * n * _LOG_2PI - 0.5 * s_logz - 0.5 * n
        else:
            out_ll[lag] = math.inf
    return out_mu, out_sig, out_ll
