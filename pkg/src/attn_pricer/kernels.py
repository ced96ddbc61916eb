"""Hot-loop dispatch: numba kernels by default, numpy when disabled.

Both backends are importable directly as ``kernels.numba_impl`` and
``kernels.numpy_impl`` so tests and the benchmark can compare them.
"""

import numpy as np

from . import _kernels_numba as numba_impl
from . import _kernels_numpy as numpy_impl
from ._accel import HAVE_NUMBA

BACKEND = "numba" if HAVE_NUMBA else "numpy"


def log_iv(nu, z):
    if HAVE_NUMBA and np.ndim(nu) == 0 and np.ndim(z) == 0:
        return numba_impl.log_iv(float(nu), float(z))
    return numpy_impl.log_iv(nu, z)


def cir_logdensity_many(y_next, y_prev, a, b, sigma, delta):
    y_next = np.ascontiguousarray(y_next, dtype=float)
    y_prev = np.ascontiguousarray(y_prev, dtype=float)
    if HAVE_NUMBA:
        return numba_impl.cir_logdensity_many(y_next, y_prev, float(a), float(b), float(sigma), float(delta))
    return numpy_impl.cir_logdensity_many(y_next, y_prev, a, b, sigma, delta)


def cir_loglik(series, a, b, sigma, delta):
    series = np.ascontiguousarray(series, dtype=float)
    if HAVE_NUMBA:
        return numba_impl.cir_loglik(series, float(a), float(b), float(sigma), float(delta))
    return numpy_impl.cir_loglik(series, a, b, sigma, delta)


def lag_scan(returns, proxy, max_lag, delta):
    returns = np.ascontiguousarray(returns, dtype=float)
    proxy = np.ascontiguousarray(proxy, dtype=float)
    if HAVE_NUMBA:
        return numba_impl.lag_scan(returns, proxy, int(max_lag), float(delta))
    return numpy_impl.lag_scan(returns, proxy, int(max_lag), float(delta))
