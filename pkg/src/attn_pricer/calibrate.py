"""Quote filtering and least-squares calibration of the risk-neutral
interest parameters to option mid prices."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np
from scipy import optimize

from .core import DomainError, InterestHistory, ModelParams, NumericalFault, OptionQuote, RNParams, validate_params
from .pricer import FourierGrid, price_call_fourier
from .riskneutral import CharFnContext, from_tilde

MAX_SPREAD_RATIO = 0.1
_PENALTY = 1e30
_GRID_A = (0.25, 4.0)
_GRID_B = (0.5, 2.0)
# search box for a_tilde / a and b_tilde / b; keeps flat directions from running off
BOX_FACTOR = 1e3


@dataclass(frozen=True)
class CalibrationResult:
    rn: RNParams
    rmse: float
    n_quotes: int
    iterations: int
    converged: bool
    per_quote: list = field(repr=False)
    uncalibrated_rmse: float = math.nan
    hessian_condition: float = math.nan

    @property
    def weakly_identified(self) -> bool:
        """True when the RMSE surface is nearly flat in some direction."""
        return not self.hessian_condition < 1e6

    def to_json(self) -> dict:
        return {
            "a_tilde": self.rn.a_tilde, "b_tilde": self.rn.b_tilde,
            "lambda_a": self.rn.lambda_a, "lambda_ab": self.rn.lambda_ab,
            "rmse": self.rmse, "uncalibrated_rmse": self.uncalibrated_rmse,
            "n_quotes": self.n_quotes, "iterations": self.iterations, "converged": self.converged,
            "hessian_condition": self.hessian_condition if math.isfinite(self.hessian_condition) else None,
            "weakly_identified": self.weakly_identified,
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["strike", "expiry", "is_call", "bid", "ask", "mid", "model_price"])
            for q, model, mid in self.per_quote:
                w.writerow([repr(q.strike), repr(q.expiry), int(q.is_call), repr(q.bid), repr(q.ask),
                            repr(mid), repr(model)])


def filter_quotes(quotes: Sequence[OptionQuote]) -> list:
    """Keep quotes with a positive bid, positive expiry and relative spread below 10%."""
    return [q for q in quotes if q.bid > 0 and q.expiry > 0 and (q.ask - q.bid) / q.ask < MAX_SPREAD_RATIO]


def rmse(model_prices, mids) -> float:
    m = np.asarray(model_prices, dtype=float)
    y = np.asarray(mids, dtype=float)
    if m.shape != y.shape or m.size == 0:
        raise DomainError(f"rmse needs equal nonzero lengths, got {m.size} and {y.size}")
    return math.sqrt(float(np.mean((y - m) ** 2)))


def model_prices(p: ModelParams, rn: RNParams, h: InterestHistory, quotes: Sequence[OptionQuote], S0: float,
                 grid: FourierGrid = FourierGrid()) -> np.ndarray:
    """Fourier prices for every quote; one transform per distinct expiry."""
    ctx = CharFnContext.at_origin(p, rn, h, x0=math.log(S0))
    out = np.empty(len(quotes))
    by_expiry = {}
    for i, q in enumerate(quotes):
        by_expiry.setdefault(q.expiry, []).append(i)
    for T, idx in by_expiry.items():
        strikes = [quotes[i].strike for i in idx]
        calls = price_call_fourier(ctx, strikes, T, grid, with_error=False)
        disc = math.exp(-p.r * T)
        for i, c in zip(idx, calls):
            q = quotes[i]
            out[i] = c.value if q.is_call else max(c.value - S0 + q.strike * disc, 0.0)
    return out


def _hessian_condition(f, theta, step=1e-3):
    n = theta.size
    H = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            ei = np.eye(n)[i] * step
            ej = np.eye(n)[j] * step
            H[i, j] = (f(theta + ei + ej) - f(theta + ei - ej) - f(theta - ei + ej) + f(theta - ei - ej)) / (4 * step * step)
    ev = np.linalg.eigvalsh(0.5 * (H + H.T))
    if not np.all(np.isfinite(ev)) or ev[0] <= 0:
        return math.inf
    return float(ev[-1] / ev[0])


def calibrate_rn(p: ModelParams, h: InterestHistory, quotes: Sequence[OptionQuote], S0: float,
                 grid: FourierGrid = FourierGrid(), maxiter: int = 400) -> CalibrationResult:
    """Minimise the quote RMSE over ``(a_tilde, b_tilde)``.

    Nelder-Mead in ``(log a_tilde, log b_tilde)`` with a penalty outside
    ``2 a_tilde b_tilde >= sigma_I^2`` and outside a box of ``BOX_FACTOR``
    around ``(a, b)``, started from the uncalibrated point and a coarse grid
    around it; the best feasible end point wins.
    """
    if not quotes:
        raise DomainError("calibration needs at least one quote")
    issues = validate_params(p, h)
    if issues:
        raise DomainError("; ".join(issues))
    quotes = list(quotes)
    mids = np.array([q.mid for q in quotes])
    s2 = p.sigma_I**2

    def rmse_at(at, bt):
        if 2.0 * at * bt < s2 or not (p.a / BOX_FACTOR <= at <= p.a * BOX_FACTOR
                                      and p.b / BOX_FACTOR <= bt <= p.b * BOX_FACTOR):
            return _PENALTY
        rn = RNParams(at, bt, at - p.a, p.a * p.b - at * bt)
        try:
            return rmse(model_prices(p, rn, h, quotes, S0, grid), mids)
        except (NumericalFault, FloatingPointError):
            return _PENALTY

    def objective(theta):
        return rmse_at(*(float(v) for v in np.exp(theta)))

    origin = np.log([p.a, p.b])
    starts = [origin] + [origin + np.log([fa, fb]) for fa, fb in product((1.0,) + _GRID_A, (1.0,) + _GRID_B)
                         if (fa, fb) != (1.0, 1.0)]
    base_rmse = rmse_at(p.a, p.b)
    best_ab, best_val = (p.a, p.b), base_rmse
    iterations = 0
    converged = False
    for theta0 in starts:
        if objective(theta0) >= _PENALTY:
            continue
        res = optimize.minimize(objective, theta0, method="Nelder-Mead",
                                options={"xatol": 1e-6, "fatol": 1e-10, "maxiter": maxiter})
        iterations += int(res.nit)
        if res.fun < _PENALTY:
            converged = converged or bool(res.success)
            if res.fun < best_val:
                best_ab, best_val = tuple(float(v) for v in np.exp(res.x)), float(res.fun)

    at, bt = best_ab
    rn = from_tilde(p, at, bt)
    prices = model_prices(p, rn, h, quotes, S0, grid)
    per_quote = [(q, float(m), float(y)) for q, m, y in zip(quotes, prices, mids)]
    return CalibrationResult(
        rn=rn, rmse=rmse([r[1] for r in per_quote], [r[2] for r in per_quote]), n_quotes=len(quotes),
        iterations=iterations, converged=converged, per_quote=per_quote, uncalibrated_rmse=float(base_rmse),
        hessian_condition=_hessian_condition(lambda t: objective(t) ** 2, np.log(best_ab)),
    )
