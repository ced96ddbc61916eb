"""Exact-transition simulation of the interest and delayed price processes,
plus the replication driver for the estimation experiment."""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (DomainError, InterestHistory, ModelParams, NumericalFault, RNParams, SeriesPair,
                   eval_history, validate_params)
from .estimate import CirFit, fit_cir_mle, generalized_residuals, ks_test_normal, select_lag

log = logging.getLogger(__name__)

_GRID_TOL = 1e-9
PARAMETERS = ("a", "b", "sigma_I", "mu", "sigma_P", "tau")


def grid_steps(length: float, delta: float) -> int:
    """Number of whole grid steps in ``length``, tolerant of float noise."""
    return int(math.floor(length / delta + _GRID_TOL))


def is_grid_multiple(value: float, delta: float) -> bool:
    k = value / delta
    return abs(k - round(k)) < _GRID_TOL * max(1.0, abs(k))


def cir_step(y, a, b, sigma_I, dt, rng: np.random.Generator):
    """Draw ``I_{t+dt}`` given ``I_t = y`` from the exact CIR transition.

    The noncentral chi-squared draw uses its Poisson mixture of gammas.
    """
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise DomainError("cir_step needs positive current values")
    if not dt > 0:
        raise DomainError(f"dt must be > 0, got {dt!r}")
    c = 2.0 * a / (sigma_I**2 * -math.expm1(-a * dt))
    df = 4.0 * a * b / sigma_I**2
    ncp = 2.0 * c * y * math.exp(-a * dt)
    mix = rng.poisson(0.5 * ncp)
    nxt = np.asarray(rng.standard_gamma(0.5 * df + mix) / c)
    if np.any(~np.isfinite(nxt)):
        raise NumericalFault("non-finite CIR transition sample")
    return nxt if nxt.ndim else float(nxt)


@dataclass(frozen=True)
class PathPair:
    delta: float
    interest: np.ndarray
    log_price: np.ndarray
    max_lag: int

    def to_series(self, n_steps: Optional[int] = None) -> SeriesPair:
        """Observed series truncated to the first ``n_steps`` returns."""
        n = self.log_price.size - 1 if n_steps is None else n_steps
        return SeriesPair(self.delta, self.log_price[: n + 1], self.interest[: self.max_lag + n + 1])


def _streams(seed):
    ss = np.random.SeedSequence(seed)
    a, b = ss.spawn(2)
    return np.random.default_rng(a), np.random.default_rng(b)


def _delayed_grid(h, interest, m, n, delta, tau):
    """``I_{j*delta - tau}`` for j = 0..n."""
    if is_grid_multiple(tau, delta):
        k = int(round(tau / delta))
        return interest[m - k: m - k + n + 1]
    times = np.arange(n + 1) * delta - tau
    grid = np.arange(-m, n + 1) * delta
    out = np.interp(times, grid, interest)
    past = times <= 0
    out[past] = eval_history(h, times[past])
    return out


def simulate_interest(a, b, sigma_I, h: InterestHistory, n_steps, delta, rng, n_paths=None):
    """Interest on ``-M*delta..n_steps*delta``; 2-d (paths, time) when n_paths is given."""
    m = grid_steps(h.length, delta)
    past = eval_history(h, np.arange(-m, 1) * delta)
    shape = () if n_paths is None else (n_paths,)
    out = np.empty(shape + (m + n_steps + 1,))
    out[..., : m + 1] = past
    y = np.full(shape, h.current) if shape else h.current
    for j in range(1, n_steps + 1):
        y = cir_step(y, a, b, sigma_I, delta, rng)
        out[..., m + j] = y
    return out, m


def simulate_pair(p: ModelParams, h: InterestHistory, n_steps: int, delta: float, seed,
                  x0: float = 0.0, rn: Optional[RNParams] = None) -> PathPair:
    """Simulate interest and log price on a uniform grid.

    Price increments are drawn from their exact normal law given the
    interest, with the delayed integrated interest over each step taken as
    the trapezoid of its endpoints.  With ``rn`` given the interest follows
    the risk-neutral parameters and the log price the risk-neutral drift.
    """
    issues = validate_params(p, h)
    if issues:
        raise DomainError("; ".join(issues))
    if not delta > 0:
        raise DomainError(f"delta must be > 0, got {delta!r}")
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    m = grid_steps(h.length, delta)
    if m * delta < p.tau - _GRID_TOL * delta:
        raise DomainError(f"history grid {m}*delta does not cover tau={p.tau!r}")
    rng_i, rng_p = _streams(seed)
    a, b = (p.a, p.b) if rn is None else (rn.a_tilde, rn.b_tilde)
    interest, m = simulate_interest(a, b, p.sigma_I, h, n_steps, delta, rng_i)
    lagged = _delayed_grid(h, interest, m, n_steps, delta, p.tau)
    j_step = 0.5 * delta * (lagged[1:] + lagged[:-1])
    noise = p.sigma_P * np.sqrt(j_step) * rng_p.standard_normal(n_steps)
    steps = np.arange(n_steps + 1)
    if rn is None:
        drift = p.mu * delta * steps
    else:
        drift = p.r * delta * steps - 0.5 * p.sigma_P**2 * np.concatenate(([0.0], np.cumsum(j_step)))
    log_price = x0 + drift + np.concatenate(([0.0], np.cumsum(noise)))
    return PathPair(delta, interest, log_price, m)


@dataclass
class ExperimentSummary:
    replications: int
    horizons: list
    estimates: dict = field(repr=False)
    failures: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["horizon", "parameter", "count", "mean", "std", "q1", "median", "q3"])
            for row in self.rows:
                w.writerow([repr(float(row[0])), row[1], row[2]] + [repr(float(v)) for v in row[3:]])


def _summarise(horizons, estimates):
    rows = []
    for T in horizons:
        est = estimates[T]
        for name in PARAMETERS:
            col = est[name]
            if col.size == 0:
                rows.append((T, name, 0, math.nan, math.nan, math.nan, math.nan, math.nan))
                continue
            q1, med, q3 = np.quantile(col, [0.25, 0.5, 0.75])
            std = float(np.std(col, ddof=1)) if col.size > 1 else 0.0
            rows.append((T, name, int(col.size), float(np.mean(col)), std, float(q1), float(med), float(q3)))
    return rows


def _one_replication(args):
    p, h, steps, delta, seed, x0 = args
    path = simulate_pair(p, h, max(steps), delta, seed, x0=x0)
    out = []
    for n in steps:
        try:
            series = path.to_series(n)
            cir = fit_cir_mle(series.observed_proxy, delta)
            if not cir.converged:
                out.append(("failure", "CIR optimizer did not converge"))
                continue
            price = select_lag(series)
            out.append(("ok", (cir.a, cir.b, cir.sigma_I, price.mu, price.sigma_P, price.tau)))
        except (DomainError, NumericalFault, FloatingPointError) as exc:
            out.append(("failure", str(exc)))
    return out


def replication_seed(seed: int, r: int) -> int:
    """Seed of replication ``r``: ``seed XOR r``."""
    return int(seed) ^ int(r)


def run_experiment(true_params: ModelParams, horizons: Sequence[float], replications: int, seed: int,
                   delta: float, history: Optional[InterestHistory] = None, x0: float = math.log(20000.0),
                   threads: int = 1) -> ExperimentSummary:
    """Simulate, re-estimate and aggregate estimator statistics per horizon.

    Each replication simulates one path up to the longest horizon; shorter
    horizons use its leading segment.  Failed fits are recorded and skipped.
    """
    if history is None:
        history = InterestHistory.constant(14.0, 2.0 * true_params.tau)
    if not is_grid_multiple(true_params.tau, delta):
        raise DomainError(f"tau={true_params.tau!r} is not a multiple of delta={delta!r}")
    horizons = [float(T) for T in horizons]
    steps = []
    for T in horizons:
        if not is_grid_multiple(T, delta) or T <= 0:
            raise DomainError(f"horizon {T!r} is not a positive multiple of delta={delta!r}")
        steps.append(int(round(T / delta)))
    jobs = [(true_params, history, steps, delta, replication_seed(seed, r), x0) for r in range(replications)]
    if threads > 1 and replications > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_one_replication, jobs, chunksize=max(1, replications // (4 * threads))))
    else:
        results = [_one_replication(job) for job in jobs]

    collected = {T: [] for T in horizons}
    failures = []
    for r, res in enumerate(results):
        for T, (status, payload) in zip(horizons, res):
            if status == "ok":
                collected[T].append(payload)
            else:
                failures.append((r, T, payload))
    estimates = {}
    for T in horizons:
        arr = np.array(collected[T], dtype=float).reshape(-1, len(PARAMETERS))
        estimates[T] = {name: arr[:, i] for i, name in enumerate(PARAMETERS)}
    if failures:
        log.info("%d replication fits failed", len(failures))
    return ExperimentSummary(replications, horizons, estimates, failures, _summarise(horizons, estimates))


def default_threads() -> int:
    return os.cpu_count() or 1


def gof_rejection_rate(p: ModelParams, y0: float, n_obs: int, delta: float, reps: int, seed: int,
                       level: float = 0.05, refit: bool = True):
    """KS rejections over ``reps`` interest series simulated from ``p``.

    By default each series is refitted before its residuals are tested, so
    the p-values carry the optimism of estimated parameters; ``refit=False``
    tests against ``p`` itself.  Returns the number of rejections at
    ``level`` and all p-values.
    """
    h = InterestHistory.constant(y0, 0.0)
    pvals = np.empty(reps)
    for r in range(reps):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), r]))
        y, _ = simulate_interest(p.a, p.b, p.sigma_I, h, n_obs - 1, delta, rng)
        fit = fit_cir_mle(y, delta) if refit else CirFit(p.a, p.b, p.sigma_I, math.nan, True, 0)
        pvals[r] = ks_test_normal(generalized_residuals(y, fit, delta).values)[1]
    return int(np.sum(pvals < level)), pvals
