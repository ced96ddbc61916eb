"""European option values: damped Fourier inversion of the characteristic
function, a lognormal closed form for maturities inside the delay, put-call
parity, a Monte Carlo cross-check and a Black-Scholes baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.interpolate import CubicSpline

from .core import DomainError, InterestHistory, ModelParams, NumericalFault, RNParams, integrate_history
from .riskneutral import CharFnContext, charfn_delayed
from .sim import _streams, cir_step

METHODS = ("fourier", "lognormal", "mc", "black_scholes")


@dataclass(frozen=True)
class FourierGrid:
    alpha: float = 1.5
    n_points: int = 4096
    eta: float = 0.25

    def __post_init__(self):
        n = self.n_points
        if not self.alpha > 0:
            raise DomainError(f"alpha must be > 0, got {self.alpha!r}")
        if not self.eta > 0:
            raise DomainError(f"eta must be > 0, got {self.eta!r}")
        if n < 256 or n & (n - 1):
            raise DomainError(f"n_points must be a power of two >= 256, got {n!r}")

    @property
    def log_strike_spacing(self) -> float:
        return 2.0 * math.pi / (self.n_points * self.eta)

    def refined(self) -> "FourierGrid":
        """Half the frequency spacing over the same frequency range."""
        return FourierGrid(self.alpha, 2 * self.n_points, 0.5 * self.eta)


@dataclass(frozen=True)
class PriceResult:
    value: float
    method: str
    err_estimate: float = 0.0
    flags: tuple = field(default_factory=tuple)


def _simpson_weights(n, eta):
    w = np.where(np.arange(n) % 2 == 1, 4.0, 2.0)
    w[0] = 1.0
    return w * eta / 3.0


def _damped_transform(ctx, T, grid):
    """``psi(v)`` on the frequency grid for a unit spot."""
    v = np.arange(grid.n_points) * grid.eta
    a = grid.alpha
    phi = charfn_delayed(v - (a + 1.0) * 1j, ctx, T, finite_check=False)
    bad = ~np.isfinite(phi)
    if bad.any():
        raise NumericalFault(f"characteristic function not finite at v={float(v[np.argmax(bad)])!r}")
    psi = math.exp(-ctx.r * T) * phi / (a * a + a - v * v + 1j * (2.0 * a + 1.0) * v)
    return v, psi


def _calls_direct(ctx, T, k, grid):
    v, psi = _damped_transform(ctx, T, grid)
    weighted = psi * _simpson_weights(grid.n_points, grid.eta)
    out = np.empty(k.size)
    for i, kk in enumerate(k):
        out[i] = math.exp(-grid.alpha * kk) / math.pi * float(np.real(np.exp(-1j * v * kk) @ weighted))
    return out


def _calls_fft(ctx, T, k, grid):
    v, psi = _damped_transform(ctx, T, grid)
    lam = grid.log_strike_spacing
    b = 0.5 * grid.n_points * lam
    ku = -b + lam * np.arange(grid.n_points)
    x = np.exp(1j * b * v) * psi * _simpson_weights(grid.n_points, grid.eta)
    c = np.exp(-grid.alpha * ku) / math.pi * np.real(np.fft.fft(x))
    if k.min() < ku[0] or k.max() > ku[-1]:
        raise DomainError("requested strikes fall outside the FFT log-strike grid")
    cubic = CubicSpline(ku, c)(k)
    linear = np.interp(k, ku, c)
    return cubic, np.abs(cubic - linear)


def price_call_fourier(ctx: CharFnContext, strikes: Sequence[float], T: float,
                       grid: FourierGrid = FourierGrid(), interpolate: bool = False,
                       with_error: bool = True) -> list:
    """Call prices from the damped Fourier transform of the log price.

    By default the Simpson-weighted sum is evaluated exactly at each strike;
    ``interpolate=True`` uses one FFT over the log-strike grid and cubic
    interpolation instead.  ``err_estimate`` is the change under a grid with
    half the frequency spacing, plus the interpolation proxy when used;
    ``with_error=False`` skips that second pass and reports zero.
    """
    if not T > 0:
        raise DomainError(f"T must be > 0, got {T!r}")
    if ctx.s != 0.0:
        raise DomainError("Fourier pricing expects a context at s = 0")
    K = np.atleast_1d(np.asarray(strikes, dtype=float))
    if np.any(~(K > 0)):
        raise DomainError("strikes must be > 0")
    s0 = math.exp(ctx.x_s)
    unit = ctx.shifted(0.0)
    k = np.log(K / s0)
    if interpolate:
        base, interp_err = _calls_fft(unit, T, k, grid)
        fine = _calls_fft(unit, T, k, grid.refined())[0] if with_error else base
    else:
        base = _calls_direct(unit, T, k, grid)
        fine = _calls_direct(unit, T, k, grid.refined()) if with_error else base
        interp_err = np.zeros_like(base)
    err = s0 * (np.abs(fine - base) + (interp_err if with_error else 0.0))
    lower = np.maximum(s0 - K * math.exp(-ctx.r * T), 0.0)
    out = []
    for c, e, lo in zip(s0 * base, err, lower):
        flags = []
        if c < lo or c > s0:
            if c < lo - e or c > s0 + e:
                flags.append("no_arbitrage_bound_clipped")
            c = min(max(c, lo), s0)
        out.append(PriceResult(float(c), "fourier", float(e), tuple(flags)))
    return out


def _bs(s0, K, total_var, r, T, is_call):
    disc = K * math.exp(-r * T)
    if total_var <= 0.0:
        return max(s0 - disc, 0.0) if is_call else max(disc - s0, 0.0)
    sd = math.sqrt(total_var)
    d1 = (math.log(s0 / K) + r * T) / sd + 0.5 * sd
    d2 = d1 - sd
    if is_call:
        return float(s0 * stats.norm.cdf(d1) - disc * stats.norm.cdf(d2))
    return float(disc * stats.norm.cdf(-d2) - s0 * stats.norm.cdf(-d1))


def price_lognormal(ctx: CharFnContext, strike: float, T: float, is_call: bool = True) -> PriceResult:
    """Closed form for ``T <= tau``: the log price is Gaussian with variance
    ``sigma_P^2`` times the integrated deterministic history."""
    if T > ctx.tau:
        raise DomainError(f"T={T!r} exceeds tau={ctx.tau!r}; the log price is not lognormal there, use the fourier method")
    if not (T >= 0 and strike > 0):
        raise DomainError("need T >= 0 and strike > 0")
    total = ctx.sigma_P**2 * integrate_history(ctx.history, 0.0, T, ctx.tau)
    return PriceResult(_bs(math.exp(ctx.x_s), strike, total, ctx.r, T, is_call), "lognormal")


def price_put(call_result: PriceResult, S0: float, strike: float, T: float, r: float = 0.0) -> PriceResult:
    """Put from a call with the same strike and maturity by parity."""
    p = call_result.value - S0 + strike * math.exp(-r * T)
    flags = list(call_result.flags)
    if p < 0.0:
        if p < -call_result.err_estimate:
            flags.append("parity_floor_binding")
        p = 0.0
    return PriceResult(p, call_result.method, call_result.err_estimate, tuple(flags))


def _integrated_delayed_paths(p, rn, h, T, n_paths, rng, dt_max):
    """``int_0^T I_{u - tau} du`` per path: exact over the history part,
    trapezoid over simulated interest on a grid no coarser than ``dt_max``."""
    known = integrate_history(h, 0.0, min(T, p.tau), p.tau)
    span = T - p.tau
    if span <= 0:
        return np.full(n_paths, known)
    n = max(1, math.ceil(span / dt_max - 1e-9))
    dt = span / n
    y = np.full(n_paths, h.current)
    acc = 0.5 * y
    for _ in range(n - 1):
        y = cir_step(y, rn.a_tilde, rn.b_tilde, p.sigma_I, dt, rng)
        acc += y
    y = cir_step(y, rn.a_tilde, rn.b_tilde, p.sigma_I, dt, rng)
    return known + dt * (acc + 0.5 * y)


def price_mc(p: ModelParams, rn: RNParams, h: InterestHistory, payoff: str, K, T: float,
             n_paths: int, seed, S0: float = 1.0, dt_max: float = 1.0 / 360.0):
    """Monte Carlo value under the risk-neutral dynamics.

    Given the interest path the terminal log price is Gaussian, so only the
    interest is stepped; the terminal price is then drawn exactly.  ``K`` may
    be an array, in which case all strikes share the same paths.
    """
    if payoff not in ("call", "put"):
        raise DomainError(f"payoff must be 'call' or 'put', got {payoff!r}")
    if not (T > 0 and n_paths >= 2 and S0 > 0):
        raise DomainError("need T > 0, n_paths >= 2 and S0 > 0")
    rng_i, rng_p = _streams(seed)
    J = _integrated_delayed_paths(p, rn, h, T, n_paths, rng_i, dt_max)
    z = rng_p.standard_normal(n_paths)
    ST = S0 * np.exp(p.r * T - 0.5 * p.sigma_P**2 * J + p.sigma_P * np.sqrt(J) * z)
    disc = math.exp(-p.r * T)
    strikes = np.atleast_1d(np.asarray(K, dtype=float))
    out = []
    for k in strikes:
        pay = disc * (np.maximum(ST - k, 0.0) if payoff == "call" else np.maximum(k - ST, 0.0))
        out.append(PriceResult(float(pay.mean()), "mc", float(pay.std(ddof=1) / math.sqrt(n_paths))))
    return out[0] if np.ndim(K) == 0 else out


def price_black_scholes(S0: float, K: float, sigma: float, r: float, T: float, is_call: bool = True) -> PriceResult:
    if not (S0 > 0 and K > 0 and sigma >= 0 and T >= 0):
        raise DomainError("need S0, K > 0 and sigma, T >= 0")
    return PriceResult(_bs(S0, K, sigma * sigma * T, r, T, is_call), "black_scholes")


def fit_bs_sigma(log_returns, delta: float) -> float:
    """Gaussian MLE of the diffusion volatility from equally spaced log returns."""
    r = np.asarray(log_returns, dtype=float)
    if r.size < 2 or not delta > 0:
        raise DomainError("need at least two returns and delta > 0")
    return math.sqrt(float(np.sum((r - r.mean()) ** 2)) / (r.size * delta))
