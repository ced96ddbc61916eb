"""Domain types and the deterministic interest history shared by every module.

All times are year fractions measured from the valuation instant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class DomainError(ValueError):
    """Raised when inputs fall outside the domain of an operation."""


class NumericalFault(ArithmeticError):
    """Raised when a computation produces non-finite output."""


_KNOT_TOL = 1e-12


@dataclass(frozen=True)
class InterestHistory:
    """Piecewise-linear interest on ``[-L, 0]`` through positive knots."""

    times: np.ndarray
    values: np.ndarray
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        v = np.array(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 1:
            raise DomainError("history needs matching 1-d times and values")
        if not np.all(np.isfinite(t)) or not np.all(np.isfinite(v)):
            raise DomainError("history contains non-finite entries")
        if np.any(v <= 0):
            bad = int(np.flatnonzero(v <= 0)[0])
            raise DomainError(f"history value at knot {bad} is {v[bad]!r}, must be > 0")
        if np.any(np.diff(t) <= 0):
            raise DomainError("history times must be strictly increasing")
        if t[-1] != 0.0:
            raise DomainError(f"last history knot must be at time 0, got {t[-1]!r}")
        t.flags.writeable = False
        v.flags.writeable = False
        cum = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(t) * (v[1:] + v[:-1]))))
        cum.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def constant(cls, value: float, length: float) -> "InterestHistory":
        if length <= 0:
            return cls(np.array([0.0]), np.array([value]))
        return cls(np.array([-length, 0.0]), np.array([value, value]))

    @classmethod
    def from_grid(cls, values: Sequence[float], delta: float) -> "InterestHistory":
        """Knots at ``-M*delta, ..., -delta, 0`` for ``M+1`` observations."""
        v = np.asarray(values, dtype=float)
        m = v.size - 1
        return cls(delta * np.arange(-m, 1, dtype=float), v)

    @property
    def length(self) -> float:
        return float(-self.times[0])

    @property
    def current(self) -> float:
        """Interest at time 0."""
        return float(self.values[-1])

    def __eq__(self, other):
        if not isinstance(other, InterestHistory):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class ModelParams:
    a: float
    b: float
    sigma_I: float
    mu: float
    sigma_P: float
    tau: float
    r: float = 0.0

    @property
    def feller_ratio(self) -> float:
        return 2.0 * self.a * self.b / self.sigma_I**2


@dataclass(frozen=True)
class RNParams:
    a_tilde: float
    b_tilde: float
    lambda_a: float
    lambda_ab: float


@dataclass(frozen=True)
class SeriesPair:
    """Log prices ``x_0..x_N`` and proxy ``y_{-M}..y_N`` on a uniform grid."""

    delta: float
    log_prices: np.ndarray
    proxy: np.ndarray
    start_date: Optional[str] = None

    def __post_init__(self):
        x = np.array(self.log_prices, dtype=float)
        y = np.array(self.proxy, dtype=float)
        if not self.delta > 0:
            raise DomainError(f"delta must be > 0, got {self.delta!r}")
        if x.ndim != 1 or y.ndim != 1 or x.size < 1:
            raise DomainError("series must be 1-d and non-empty")
        if y.size < x.size:
            raise DomainError("proxy must have at least as many observations as log prices")
        if np.any(~(y > 0)):
            bad = int(np.flatnonzero(~(y > 0))[0])
            raise DomainError(f"proxy value at index {bad} is {y[bad]!r}, must be > 0")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "log_prices", x)
        object.__setattr__(self, "proxy", y)

    @property
    def n(self) -> int:
        """Number of returns N."""
        return self.log_prices.size - 1

    @property
    def max_lag(self) -> int:
        """Number M of leading proxy observations."""
        return self.proxy.size - self.log_prices.size

    @property
    def observed_proxy(self) -> np.ndarray:
        """``y_0..y_N``."""
        return self.proxy[self.max_lag:]


@dataclass(frozen=True)
class OptionQuote:
    strike: float
    expiry: float
    bid: float
    ask: float
    underlying: float
    is_call: bool = True

    def __post_init__(self):
        if not self.strike > 0:
            raise DomainError(f"strike must be > 0, got {self.strike!r}")
        if not self.underlying > 0:
            raise DomainError(f"underlying must be > 0, got {self.underlying!r}")
        if self.bid > self.ask:
            raise DomainError(f"bid {self.bid!r} exceeds ask {self.ask!r}")

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)


def validate_params(p: ModelParams, h: InterestHistory) -> list[str]:
    """Return every violated parameter invariant; an empty list means ok."""
    violations = []
    for name in ("a", "sigma_I", "sigma_P"):
        value = getattr(p, name)
        if not value > 0:
            violations.append(f"{name} must be > 0, got {value!r}")
    for name in ("b", "mu", "tau", "r"):
        value = getattr(p, name)
        if not math.isfinite(value):
            violations.append(f"{name} must be finite, got {value!r}")
    if p.tau < 0:
        violations.append(f"tau must be >= 0, got {p.tau!r}")
    if p.r < 0:
        violations.append(f"r must be >= 0, got {p.r!r}")
    if p.sigma_I > 0 and math.isfinite(p.a * p.b):
        ratio = p.feller_ratio
        if ratio < 1:
            violations.append(f"Feller: 2ab/sigma_I^2={ratio:.6g} < 1")
    if p.tau > h.length + _KNOT_TOL:
        violations.append(f"tau exceeds history length: tau={p.tau!r} > L={h.length!r}")
    return violations


def _check_range(h: InterestHistory, t: np.ndarray) -> None:
    lo = h.times[0] - _KNOT_TOL
    if np.any(t < lo) or np.any(t > _KNOT_TOL) or np.any(np.isnan(t)):
        raise DomainError(f"time outside history range [{h.times[0]!r}, 0]")


def eval_history(h: InterestHistory, t):
    """Linear interpolation of the history at ``t`` (scalar or array)."""
    ta = np.asarray(t, dtype=float)
    _check_range(h, ta)
    if h.times.size == 1:
        out = np.full(ta.shape, h.values[0])
    else:
        out = np.interp(ta, h.times, h.values)
    return float(out) if out.ndim == 0 else out


def _antiderivative(h: InterestHistory, x: float) -> float:
    times, values, cum = h.times, h.values, h._cum
    if times.size == 1:
        return 0.0
    x = min(max(x, times[0]), 0.0)
    i = int(np.searchsorted(times, x, side="right")) - 1
    i = min(max(i, 0), times.size - 2)
    t0, v0 = times[i], values[i]
    slope = (values[i + 1] - v0) / (times[i + 1] - t0)
    dx = x - t0
    return float(cum[i] + dx * (v0 + 0.5 * slope * dx))


def integrate_history(h: InterestHistory, s: float, t: float, tau: float = 0.0) -> float:
    """Exact integral of ``phi_I(u - tau)`` for ``u`` in ``[s, t]``."""
    if t < s:
        raise DomainError(f"integration bounds reversed: s={s!r} > t={t!r}")
    lo, hi = s - tau, t - tau
    _check_range(h, np.array([lo, hi]))
    if hi == lo:
        return 0.0
    if h.times.size == 1:
        return float(h.values[0] * (hi - lo))
    return _antiderivative(h, hi) - _antiderivative(h, lo)
