"""Vectorised numpy versions of the numba kernels."""

import numpy as np
from scipy.special import gammaln, logsumexp

from ._kernels_numba import DEBYE_MIN_ORDER, HANKEL_MIN_ARG

_LOG_2PI = np.log(2.0 * np.pi)


def _debye(nu, z):
    x = z / nu
    s = np.sqrt(1.0 + x * x)
    t = 1.0 / s
    t2 = t * t
    t4 = t2 * t2
    eta = s + np.log(x / (1.0 + s))
    u1 = t * (3.0 - 5.0 * t2) / 24.0
    u2 = t2 * (81.0 - 462.0 * t2 + 385.0 * t4) / 1152.0
    u3 = t * t2 * (30375.0 - 369603.0 * t2 + 765765.0 * t4 - 425425.0 * t4 * t2) / 414720.0
    u4 = t4 * (4465125.0 - 94121676.0 * t2 + 349922430.0 * t4
               - 446185740.0 * t4 * t2 + 185910725.0 * t4 * t4) / 39813120.0
    inv = 1.0 / nu
    corr = 1.0 + inv * (u1 + inv * (u2 + inv * (u3 + inv * u4)))
    return nu * eta - 0.5 * (_LOG_2PI + np.log(nu)) - 0.5 * np.log(s) + np.log(corr)


def _hankel(nu, z):
    mu = 4.0 * nu * nu
    term = np.ones_like(z)
    total = np.ones_like(z)
    live = np.ones(z.shape, dtype=bool)
    for k in range(1, 30):
        nxt = -term * (mu - (2.0 * k - 1.0) ** 2) / (k * 8.0 * z)
        live &= np.abs(nxt) < np.abs(term)
        term = np.where(live, nxt, term)
        total = total + np.where(live, nxt, 0.0)
        live &= np.abs(nxt) >= 1e-17 * np.abs(total)
        if not live.any():
            break
    return z - 0.5 * (_LOG_2PI + np.log(z)) + np.log(total)


def _series(nu, z):
    k0 = np.maximum(np.ceil(0.5 * (-(nu + 2.0) + np.sqrt(nu * nu + z * z))), 0.0)
    width = np.ceil(10.0 / np.sqrt(1.0 / (k0 + 1.0) + 1.0 / (k0 + nu + 1.0)) + 40.0)
    w = int(width.max()) if width.size else 0
    offsets = np.arange(-w, w + 1, dtype=float)
    k = k0[:, None] + offsets[None, :]
    valid = (k >= 0) & (np.abs(offsets)[None, :] <= width[:, None])
    kk = np.where(valid, k, 0.0)
    logt = (2.0 * kk + nu[:, None]) * np.log(0.5 * z)[:, None] - gammaln(kk + 1.0) - gammaln(kk + nu[:, None] + 1.0)
    logt = np.where(valid, logt, -np.inf)
    return logsumexp(logt, axis=1)


def log_iv(nu, z):
    nu_a, z_a = np.broadcast_arrays(np.asarray(nu, dtype=float), np.asarray(z, dtype=float))
    shape = nu_a.shape
    nu_f = nu_a.ravel()
    z_f = z_a.ravel()
    out = np.empty(nu_f.size)
    deb = nu_f >= DEBYE_MIN_ORDER
    han = ~deb & (z_f > HANKEL_MIN_ARG) & (z_f > 10.0 * nu_f * nu_f)
    ser = ~deb & ~han
    if deb.any():
        out[deb] = _debye(nu_f[deb], z_f[deb])
    if han.any():
        out[han] = _hankel(nu_f[han], z_f[han])
    if ser.any():
        out[ser] = _series(nu_f[ser], z_f[ser])
    return out.reshape(shape)


def cir_logdensity_many(y_next, y_prev, a, b, sigma, delta):
    c = 2.0 * a / (sigma * sigma * -np.expm1(-a * delta))
    q = 2.0 * a * b / (sigma * sigma) - 1.0
    u = c * np.asarray(y_prev, dtype=float) * np.exp(-a * delta)
    v = c * np.asarray(y_next, dtype=float)
    z = 2.0 * np.sqrt(u * v)
    return np.log(c) - u - v + 0.5 * q * np.log(v / u) + log_iv(np.full_like(z, q), z)


def cir_loglik(series, a, b, sigma, delta):
    series = np.asarray(series, dtype=float)
    return float(np.sum(cir_logdensity_many(series[1:], series[:-1], a, b, sigma, delta)))


def lag_scan(returns, proxy, max_lag, delta):
    returns = np.asarray(returns, dtype=float)
    proxy = np.asarray(proxy, dtype=float)
    n = returns.size
    j = np.arange(1, n + 1)
    lags = np.arange(max_lag + 1)[:, None]
    z = 0.5 * delta * (proxy[max_lag + j - lags] + proxy[max_lag + j - 1 - lags])
    w = 1.0 / z
    mu = (returns * w).sum(axis=1) / (delta * w.sum(axis=1))
    resid = returns[None, :] - mu[:, None] * delta
    sig2 = (resid * resid * w).sum(axis=1) / n
    with np.errstate(divide="ignore"):
        ll = -0.5 * n * np.log(sig2) - 0.5 * n * _LOG_2PI - 0.5 * np.log(z).sum(axis=1) - 0.5 * n
    ll = np.where(sig2 > 0, ll, np.inf)
    return mu, np.sqrt(sig2), ll
