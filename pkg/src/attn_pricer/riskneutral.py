"""Risk-neutral parameters and conditional characteristic functions of the
log price under the delayed and the general filtration.

The functions accept complex arguments so that Fourier pricing can evaluate
them on ``v - (alpha + 1)i``; analytic continuation off the real line is
assumed and guarded by finiteness checks rather than proven.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (DomainError, InterestHistory, ModelParams, NumericalFault, RNParams, eval_history,
                   integrate_history)

_UNWRAP_STEP = 0.5 * math.pi
# accepted imaginary parts of the argument: (-(ALPHA_MAX + 1), 1]
ALPHA_MAX = 3.0


def _as_lambda(lam):
    lam = np.asarray(lam, dtype=complex)
    im = lam.imag
    if np.any(im <= -(ALPHA_MAX + 1.0)) or np.any(im > 1.0):
        raise DomainError(f"Im(lambda) must lie in ({-(ALPHA_MAX + 1.0)}, 1]")
    return lam.ndim == 0, np.atleast_1d(lam)


def to_risk_neutral(p: ModelParams, lambda_a: float, lambda_ab: float) -> RNParams:
    if not lambda_a > -p.a:
        raise DomainError(f"lambda_a > -a violated: lambda_a={lambda_a!r}, -a={-p.a!r}")
    bound = p.a * p.b - 0.5 * p.sigma_I**2
    if not lambda_ab <= bound:
        raise DomainError(f"lambda_ab <= ab - sigma_I^2/2 violated: lambda_ab={lambda_ab!r} > {bound!r}")
    a_t = p.a + lambda_a
    return RNParams(a_tilde=a_t, b_tilde=(p.a * p.b - lambda_ab) / a_t,
                    lambda_a=float(lambda_a), lambda_ab=float(lambda_ab))


def from_tilde(p: ModelParams, a_tilde: float, b_tilde: float) -> RNParams:
    """Risk-neutral parameters given directly as ``(a_tilde, b_tilde)``."""
    if not a_tilde > 0:
        raise DomainError(f"a_tilde must be > 0, got {a_tilde!r}")
    if 2.0 * a_tilde * b_tilde < p.sigma_I**2:
        raise DomainError(f"2 a_tilde b_tilde = {2 * a_tilde * b_tilde!r} < sigma_I^2 = {p.sigma_I**2!r}")
    return RNParams(a_tilde=float(a_tilde), b_tilde=float(b_tilde), lambda_a=a_tilde - p.a,
                    lambda_ab=p.a * p.b - a_tilde * b_tilde)


def uncalibrated(p: ModelParams) -> RNParams:
    return RNParams(a_tilde=p.a, b_tilde=p.b, lambda_a=0.0, lambda_ab=0.0)


def _log_ratio(g, d, u):
    """``log((1 - g e^{-du}) / (1 - g))`` continuous in ``u``.

    The principal branch is safe while ``|g| < 1`` and ``Re d > 0``; elsewhere
    the phase is unwrapped along a grid in ``u`` fine enough that each step
    rotates by less than a quarter turn.
    """
    w_end = (1.0 - g * np.exp(-d * u)) / (1.0 - g)
    out = np.log(w_end)
    risky = (np.abs(g) >= 1.0) | (d.real <= 0.0)
    if not np.any(risky) or u == 0:
        return out
    gi, di = g[risky], d[risky]
    turns = np.abs(di.imag) * u
    n = int(min(np.ceil(turns.max() / _UNWRAP_STEP) + 64, 200_000))
    grid = np.linspace(0.0, u, n + 1)
    w = 1.0 - gi[:, None] * np.exp(-di[:, None] * grid[None, :])
    phase = np.unwrap(np.angle(w), axis=1)
    logw = np.log(np.abs(w[:, -1])) + 1j * phase[:, -1]
    log0 = np.log(np.abs(w[:, 0])) + 1j * phase[:, 0]
    out[risky] = logw - log0
    return out


def charfn_AB(lam, rn: RNParams, sigma_P: float, sigma_I: float, u: float):
    """Exponent functions ``A(u)``, ``B(u)`` of the Heston-type factor."""
    if u < 0:
        raise DomainError(f"horizon u must be >= 0, got {u!r}")
    scalar, lam = _as_lambda(lam)
    at, bt = rn.a_tilde, rn.b_tilde
    s2 = sigma_I * sigma_I
    d = np.sqrt(at * at + sigma_P**2 * s2 * (1j * lam + lam * lam))
    g = (at - d) / (at + d)
    e = np.exp(-d * u)
    A = (at * bt / s2) * ((at - d) * u - 2.0 * _log_ratio(g, d, u))
    B = ((at - d) / s2) * (1.0 - e) / (1.0 - g * e)
    if scalar:
        return complex(A[0]), complex(B[0])
    return A, B


@dataclass(frozen=True)
class CharFnContext:
    """Everything needed to evaluate the conditional characteristic function.

    ``i_lag`` is ``I_{s - tau}`` for the delayed filtration when ``s >= tau``
    and ``I_s`` for the general filtration when ``s > 0``; at ``s = 0`` the
    history supplies both.
    """

    rn: RNParams
    sigma_P: float
    sigma_I: float
    r: float
    tau: float
    history: InterestHistory
    s: float = 0.0
    x_s: float = 0.0
    i_lag: Optional[float] = None

    @classmethod
    def at_origin(cls, p: ModelParams, rn: RNParams, h: InterestHistory, x0: float = 0.0):
        return cls(rn=rn, sigma_P=p.sigma_P, sigma_I=p.sigma_I, r=p.r, tau=p.tau, history=h, s=0.0, x_s=x0)

    def shifted(self, x_s: float) -> "CharFnContext":
        return CharFnContext(self.rn, self.sigma_P, self.sigma_I, self.r, self.tau, self.history,
                             self.s, x_s, self.i_lag)


def _lognormal(lam, x_s, r, dt, sigma_P, integral):
    return np.exp(1j * lam * x_s + 1j * lam * r * dt - 0.5 * sigma_P**2 * (1j * lam + lam * lam) * integral)


def _heston_factor(lam, ctx, u, level):
    A, B = charfn_AB(lam, ctx.rn, ctx.sigma_P, ctx.sigma_I, u)
    return np.exp(1j * lam * ctx.r * u + A + level * B)


def _finish(val, scalar, check=True):
    if check and not np.all(np.isfinite(val)):
        raise NumericalFault("characteristic function is not finite at the requested argument")
    return complex(val[0]) if scalar else val


def charfn_delayed(lam, ctx: CharFnContext, t: float, finite_check: bool = True):
    """Characteristic function of ``X_t`` given the delayed information at ``s``.

    With ``finite_check=False`` non-finite values are returned rather than
    raised, so that callers can report where they occur.
    """
    s, tau = ctx.s, ctx.tau
    if t < s:
        raise DomainError(f"need s <= t, got s={s!r}, t={t!r}")
    scalar, lam = _as_lambda(lam)
    if t == s:
        return _finish(np.exp(1j * lam * ctx.x_s), scalar, finite_check)
    if t <= tau:
        integral = integrate_history(ctx.history, s, t, tau)
        return _finish(_lognormal(lam, ctx.x_s, ctx.r, t - s, ctx.sigma_P, integral), scalar, finite_check)
    if s >= tau:
        if ctx.i_lag is not None:
            level = ctx.i_lag
        elif s - tau <= 0.0:
            level = eval_history(ctx.history, s - tau)
        else:
            raise DomainError("branch tau <= s < t needs I_{s-tau} in ctx.i_lag")
        val = np.exp(1j * lam * ctx.x_s) * _heston_factor(lam, ctx, t - s, level)
        return _finish(val, scalar, finite_check)
    # s <= tau < t: Heston factor from tau on, lognormal up to tau
    if s == tau:
        head = np.exp(1j * lam * ctx.x_s)
    else:
        head = _lognormal(lam, ctx.x_s, ctx.r, tau - s, ctx.sigma_P, integrate_history(ctx.history, s, tau, tau))
    return _finish(_heston_factor(lam, ctx, t - tau, ctx.history.current) * head, scalar, finite_check)


def charfn_general(lam, ctx: CharFnContext, t: float, path_integral: Optional[float] = None):
    """Characteristic function of ``X_t`` given the full information at ``s``.

    ``path_integral`` is the realised ``int I_{u - tau} du`` over ``[s, min(t, s + tau)]``
    and is only needed when that window reaches past time 0 of the history.
    """
    s, tau = ctx.s, ctx.tau
    if t < s:
        raise DomainError(f"need s <= t, got s={s!r}, t={t!r}")
    scalar, lam = _as_lambda(lam)
    if t == s:
        return _finish(np.exp(1j * lam * ctx.x_s), scalar)
    end = t if t - tau <= s else s + tau

    if path_integral is None:
        if end - tau > 1e-14:
            raise DomainError("realised integral of the delayed interest must be supplied for this window")
        integral = integrate_history(ctx.history, s, end, tau) if end > s else 0.0
    else:
        integral = path_integral
    head = _lognormal(lam, ctx.x_s, ctx.r, end - s, ctx.sigma_P, integral)
    if t - tau <= s:
        return _finish(head, scalar)
    if s == 0.0:
        level = ctx.history.current
    elif ctx.i_lag is None:
        raise DomainError("branch s < t - tau needs I_s in ctx.i_lag")
    else:
        level = ctx.i_lag
    return _finish(_heston_factor(lam, ctx, t - s - tau, level) * head, scalar)
