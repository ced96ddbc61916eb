"""Command-line front end.  Outputs are machine-readable CSV/JSON; a command
that writes files also writes <first output>.manifest.json beside them."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import platform
import sys
from fractions import Fraction

import numpy as np

from . import __version__, kernels
from .calibrate import calibrate_rn, filter_quotes, model_prices, rmse
from .core import DomainError, InterestHistory, ModelParams, NumericalFault
from .dataio import load_prices, load_proxy, load_quotes, load_series, read_params, read_rn, write_params
from .estimate import CirFit, fit_cir_mle, generalized_residuals, ks_test_normal, select_lag
from .pricer import (FourierGrid, fit_bs_sigma, price_black_scholes, price_call_fourier, price_lognormal, price_mc,
                     price_put)
from .riskneutral import CharFnContext, from_tilde, uncalibrated
from .sim import default_threads, gof_rejection_rate, run_experiment, simulate_pair

SEED_ENV = "ATTN_PRICER_SEED"
log = logging.getLogger("attn_pricer")


class UsageError(Exception):
    pass


def parse_fraction(text: str) -> float:
    """``"1/365"`` or ``"0.0027"`` as a float."""
    try:
        value = float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number or fraction: {text!r}") from None
    return value


def parse_floats(text: str) -> list:
    try:
        return [float(Fraction(t.strip())) for t in text.split(",") if t.strip()]
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _seed(args) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None
    return args.seed


def _dump_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _write_manifest(command, args, seed, outputs):
    outputs = [o for o in outputs if o and o != "-"]
    if not outputs:
        return
    arguments = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    versions = {"attn_pricer": __version__, "numpy": np.__version__, "python": platform.python_version(),
                "kernel_backend": kernels.BACKEND}
    try:
        import scipy
        versions["scipy"] = scipy.__version__
    except ImportError:  # pragma: no cover
        pass
    if kernels.HAVE_NUMBA:
        import numba
        versions["numba"] = numba.__version__
    manifest = {"command": command, "arguments": arguments, "seed": seed, "versions": versions,
                "outputs": outputs, "seed_env": SEED_ENV}
    _dump_json(outputs[0] + ".manifest.json", manifest)


def _model_from_args(args) -> ModelParams:
    return ModelParams(a=args.a, b=args.b, sigma_I=args.sigma_i, mu=args.mu, sigma_P=args.sigma_p,
                       tau=args.tau, r=args.r)


def _add_model_flags(p):
    g = p.add_argument_group("model parameters (per year)")
    g.add_argument("--a", type=float, required=True, help="interest mean-reversion speed a [1/year]")
    g.add_argument("--b", type=float, required=True, help="interest long-run level b [proxy units]")
    g.add_argument("--sigma-i", type=float, required=True, help="interest volatility sigma_I [proxy^0.5/year^0.5]")
    g.add_argument("--mu", type=float, required=True, help="log-price drift mu [1/year]")
    g.add_argument("--sigma-p", type=float, required=True, help="price volatility scale sigma_P [1/(proxy year)^0.5]")
    g.add_argument("--tau", type=parse_fraction, required=True, help="delay tau [years]; fractions like 9/360 accepted")
    g.add_argument("--r", type=float, default=0.0, help="risk-free rate r [1/year] (default 0)")


def _history(h, value, length):
    if h is not None:
        return h
    if value is None:
        raise DomainError("no interest history: the parameter file lacks one and --history-value was not given")
    return InterestHistory.constant(value, length)


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    seed = _seed(args)
    p = _model_from_args(args)
    h = InterestHistory.constant(args.history_value, max(args.tau, args.delta))
    path = simulate_pair(p, h, args.steps, args.delta, seed, x0=math.log(args.spot))
    m = path.max_lag
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "time", "interest", "log_price"])
        for j in range(-m, args.steps + 1):
            lp = repr(float(path.log_price[j])) if j >= 0 else ""
            w.writerow([j, repr(j * args.delta), repr(float(path.interest[m + j])), lp])
    outputs = [args.out]
    if args.prices_out or args.proxy_out:
        if not (args.prices_out and args.proxy_out):
            raise UsageError("--prices-out and --proxy-out must be given together")
        import datetime as dt
        start = dt.date.fromisoformat(args.start_date)
        with open(args.prices_out, "w", newline="", encoding="utf-8") as fp, \
                open(args.proxy_out, "w", newline="", encoding="utf-8") as fv:
            wp, wv = csv.writer(fp, lineterminator="\n"), csv.writer(fv, lineterminator="\n")
            wp.writerow(["date", "price"])
            wv.writerow(["date", "value"])
            for j in range(args.steps + 1):
                day = (start + dt.timedelta(days=j)).isoformat()
                wp.writerow([day, repr(float(math.exp(path.log_price[j])))])
                wv.writerow([day, repr(float(path.interest[m + j]))])
        outputs += [args.prices_out, args.proxy_out]
    _write_manifest("simulate", args, seed, outputs)


def cmd_estimate(args):
    series = load_series(args.prices, args.proxy, args.delta, args.max_lag)
    cir = fit_cir_mle(series.observed_proxy, args.delta)
    price = select_lag(series)
    p = ModelParams(a=cir.a, b=cir.b, sigma_I=cir.sigma_I, mu=price.mu, sigma_P=price.sigma_P, tau=price.tau,
                    r=args.r)
    h = InterestHistory.from_grid(series.proxy[-(args.max_lag + 1):], args.delta)
    extra = {
        "loglik": price.loglik, "aic": price.aic, "bic": price.bic, "converged": cir.converged,
        "cir": {"a": cir.a, "b": cir.b, "sigma_I": cir.sigma_I, "loglik": cir.loglik,
                "converged": cir.converged, "iterations": cir.iterations},
        "price": {"mu": price.mu, "sigma_P": price.sigma_P, "tau": price.tau, "lag": price.lag,
                  "loglik": price.loglik, "aic": price.aic, "bic": price.bic, "degenerate": price.degenerate,
                  "criterion_table": [{"lag": l, "loglik": ll, "aic": a, "bic": b}
                                      for l, ll, a, b in price.criterion_table]},
    }
    write_params(args.out, p, None, h, extra)
    _write_manifest("estimate", args, None, [args.out])


def cmd_gof(args):
    p, _, _ = read_params(args.params)
    fit = CirFit(p.a, p.b, p.sigma_I, math.nan, True, 0)
    proxy = load_proxy(args.proxy)
    res = generalized_residuals(proxy, fit, args.delta)
    d, pval = ks_test_normal(res.values)
    out = {"ks_statistic": d, "p_value": pval, "n": int(res.values.size), "clamped": int(res.clamped.sum()),
           "reject_at_5pct": bool(pval < 0.05)}
    if args.reps:
        seed = _seed(args)
        rejections, _ = gof_rejection_rate(p, float(proxy[0]), proxy.size, args.delta, args.reps, seed)
        out.update({"replications": args.reps, "rejection_rate": rejections / args.reps, "seed": seed})
    else:
        seed = None
    _dump_json(args.out, out)
    outputs = [args.out]
    if args.residuals_out:
        with open(args.residuals_out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "residual", "clamped"])
            for i, (v, c) in enumerate(zip(res.values, res.clamped), start=1):
                w.writerow([i, repr(float(v)), int(c)])
        outputs.append(args.residuals_out)
    _write_manifest("gof", args, seed, outputs)


def _load_pricing_inputs(args):
    p, rn_in, h = read_params(args.params)
    h = _history(h, args.history_value, max(p.tau, 1e-12))
    if args.rn:
        rn = read_rn(args.rn)
        rn = from_tilde(p, rn.a_tilde, rn.b_tilde)
    elif rn_in is not None:
        rn = from_tilde(p, rn_in.a_tilde, rn_in.b_tilde)
    else:
        rn = uncalibrated(p)
    return p, rn, h


def _result_json(res, strike, expiry, is_call):
    return {"strike": strike, "expiry": expiry, "is_call": is_call, "value": res.value, "method": res.method,
            "err_estimate": res.err_estimate, "flags": list(res.flags)}


def cmd_price(args):
    p, rn, h = _load_pricing_inputs(args)
    ctx = CharFnContext.at_origin(p, rn, h, x0=math.log(args.spot))
    strikes = args.strike
    T = args.expiry
    is_call = not args.put
    seed = None
    if args.method == "fourier":
        grid = FourierGrid(args.alpha, args.n_points, args.eta)
        calls = price_call_fourier(ctx, strikes, T, grid, interpolate=args.fft)
        results = calls if is_call else [price_put(c, args.spot, k, T, p.r) for c, k in zip(calls, strikes)]
    elif args.method == "lognormal":
        results = [price_lognormal(ctx, k, T, is_call) for k in strikes]
    elif args.method == "mc":
        seed = _seed(args)
        results = price_mc(p, rn, h, "call" if is_call else "put", np.array(strikes), T, args.paths, seed,
                           S0=args.spot)
    else:
        if args.sigma is None:
            raise UsageError("--method black_scholes needs --sigma")
        results = [price_black_scholes(args.spot, k, args.sigma, p.r, T, is_call) for k in strikes]
    payload = [_result_json(r, k, T, is_call) for r, k in zip(results, strikes)]
    _dump_json(args.out, payload[0] if len(payload) == 1 else payload)
    _write_manifest("price", args, seed, [args.out])


def _quotes(args):
    raw = load_quotes(args.quotes, args.valuation_date, args.index_level)
    quotes = filter_quotes(raw)
    if not quotes:
        raise DomainError(f"no quotes in {args.quotes} survive the spread filter")
    return quotes


def cmd_calibrate(args):
    p, _, h = read_params(args.params)
    h = _history(h, args.history_value, max(p.tau, 1e-12))
    quotes = _quotes(args)
    res = calibrate_rn(p, h, quotes, args.index_level, maxiter=args.maxiter)
    out = dict(res.to_json(), schema_version=1)
    _dump_json(args.out, out)
    outputs = [args.out]
    if args.table:
        res.write_csv(args.table)
        outputs.append(args.table)
    _write_manifest("calibrate", args, None, outputs)


def cmd_experiment(args):
    seed = _seed(args)
    p = _model_from_args(args)
    h = InterestHistory.constant(args.history_value, max(2.0 * args.tau, args.delta))
    summary = run_experiment(p, args.horizons, args.reps, seed, args.delta, history=h,
                             x0=math.log(args.spot), threads=args.threads)
    summary.to_csv(args.out)
    outputs = [args.out]
    if args.raw:
        from .sim import PARAMETERS
        with open(args.raw, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["horizon", "index"] + list(PARAMETERS))
            for T in summary.horizons:
                est = summary.estimates[T]
                for i in range(est["a"].size):
                    w.writerow([repr(T), i] + [repr(float(est[k][i])) for k in PARAMETERS])
        outputs.append(args.raw)
    for r, T, msg in summary.failures:
        print(f"replication {r} horizon {T}: {msg}", file=sys.stderr)
    _write_manifest("experiment", args, seed, outputs)


def cmd_compare_bs(args):
    p, rn, h = _load_pricing_inputs(args)
    quotes = _quotes(args)
    prices = load_prices(args.prices)
    sigma = fit_bs_sigma(np.diff(np.log(prices)), args.delta)
    ours = model_prices(p, rn, h, quotes, args.index_level)
    bs = np.array([price_black_scholes(args.index_level, q.strike, sigma, p.r, q.expiry, q.is_call).value
                   for q in quotes])
    mids = [q.mid for q in quotes]
    ours_rmse, bs_rmse = rmse(ours, mids), rmse(bs, mids)
    out = {"model_rmse": ours_rmse, "black_scholes_rmse": bs_rmse, "bs_sigma": sigma, "n_quotes": len(quotes),
           "rmse_ratio": ours_rmse / bs_rmse if bs_rmse > 0 else None}
    _dump_json(args.out, out)
    _write_manifest("compare-bs", args, None, [args.out])


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attn-pricer", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def seed_flag(p):
        p.add_argument("--seed", type=int, default=0, help=f"RNG seed (integer); {SEED_ENV} overrides it")

    s = sub.add_parser("simulate", help="simulate interest and log price on a grid")
    _add_model_flags(s)
    s.add_argument("--delta", type=parse_fraction, required=True, help="grid step [years], e.g. 1/365")
    s.add_argument("--steps", type=_positive_int, required=True, help="number of grid steps [count]")
    s.add_argument("--history-value", type=float, default=14.0, help="constant interest before time 0 [proxy units]")
    s.add_argument("--spot", type=float, default=20000.0, help="initial price [currency]")
    s.add_argument("--out", required=True, help="CSV path: step,time,interest,log_price")
    s.add_argument("--prices-out", help="optional date,price CSV for the estimate command")
    s.add_argument("--proxy-out", help="optional date,value CSV for the estimate command")
    s.add_argument("--start-date", default="2020-01-01", help="ISO date of step 0 for --prices-out/--proxy-out")
    seed_flag(s)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="fit interest and price parameters from CSV data")
    e.add_argument("--prices", required=True, help="date,price CSV [currency]")
    e.add_argument("--proxy", required=True, help="date,value CSV [proxy units]")
    e.add_argument("--delta", type=parse_fraction, required=True, help="observation step [years], e.g. 1/365")
    e.add_argument("--max-lag", type=int, required=True, help="largest delay considered M [grid steps]")
    e.add_argument("--r", type=float, default=0.0, help="risk-free rate stored with the fit [1/year]")
    e.add_argument("--out", required=True, help="fit JSON path")
    e.set_defaults(func=cmd_estimate)

    g = sub.add_parser("gof", help="KS test of generalized residuals of the interest fit")
    g.add_argument("--params", required=True, help="parameter JSON (e.g. output of estimate)")
    g.add_argument("--proxy", required=True, help="date,value CSV [proxy units]")
    g.add_argument("--delta", type=parse_fraction, required=True, help="observation step [years]")
    g.add_argument("--reps", type=int, default=0,
                   help="also simulate this many series from the fit and report the KS rejection rate [count]")
    g.add_argument("--out", default="-", help="result JSON path (default stdout)")
    g.add_argument("--residuals-out", help="optional CSV of residuals")
    seed_flag(g)
    g.set_defaults(func=cmd_gof)

    def pricing_inputs(p):
        p.add_argument("--params", required=True, help="parameter JSON with history (e.g. fit.json)")
        p.add_argument("--rn", help="risk-neutral JSON (e.g. calibrate output); default uncalibrated")
        p.add_argument("--history-value", type=float,
                       help="constant interest history if the parameter file has none [proxy units]")

    pr = sub.add_parser("price", help="price European options")
    pricing_inputs(pr)
    pr.add_argument("--spot", type=float, required=True, help="spot price S0 [currency]")
    pr.add_argument("--strike", type=parse_floats, required=True, help="strike(s), comma-separated [currency]")
    pr.add_argument("--expiry", type=parse_fraction, required=True, help="maturity T [years]")
    pr.add_argument("--method", choices=["fourier", "lognormal", "mc", "black_scholes"], default="fourier",
                    help="pricing method")
    pr.add_argument("--put", action="store_true", help="price puts instead of calls")
    pr.add_argument("--alpha", type=float, default=1.5, help="Fourier damping alpha [dimensionless]")
    pr.add_argument("--n-points", type=int, default=4096, help="Fourier grid size [count, power of two]")
    pr.add_argument("--eta", type=float, default=0.25, help="Fourier frequency spacing [1/log-strike]")
    pr.add_argument("--fft", action="store_true", help="use FFT over log strikes with cubic interpolation")
    pr.add_argument("--paths", type=_positive_int, default=100000, help="Monte Carlo paths [count]")
    pr.add_argument("--sigma", type=float, help="Black-Scholes volatility [1/year^0.5]")
    pr.add_argument("--out", default="-", help="result JSON path (default stdout)")
    seed_flag(pr)
    pr.set_defaults(func=cmd_price)

    def quote_inputs(p):
        p.add_argument("--quotes", required=True, help="expiry_date,strike,is_call,bid_btc,ask_btc CSV")
        p.add_argument("--valuation-date", required=True, help="ISO valuation date")
        p.add_argument("--index-level", type=float, required=True, help="index level S0 [currency per BTC]")

    c = sub.add_parser("calibrate", help="calibrate risk-neutral parameters to option quotes")
    c.add_argument("--params", required=True, help="parameter JSON with history (e.g. fit.json)")
    c.add_argument("--history-value", type=float, help="constant interest history if the file has none")
    quote_inputs(c)
    c.add_argument("--maxiter", type=_positive_int, default=400, help="simplex iterations per start [count]")
    c.add_argument("--out", required=True, help="result JSON path")
    c.add_argument("--table", help="optional per-quote CSV path")
    c.set_defaults(func=cmd_calibrate)

    x = sub.add_parser("experiment", help="simulation-estimation experiment")
    _add_model_flags(x)
    x.add_argument("--delta", type=parse_fraction, required=True, help="grid step [years], e.g. 1/360")
    x.add_argument("--horizons", type=parse_floats, required=True, help="comma-separated horizons T [years]")
    x.add_argument("--reps", type=_positive_int, required=True, help="replications [count]")
    x.add_argument("--history-value", type=float, default=14.0, help="constant interest before time 0")
    x.add_argument("--spot", type=float, default=20000.0, help="initial price [currency]")
    x.add_argument("--threads", type=_positive_int, default=default_threads(),
                   help="worker processes [count] (default: available CPUs)")
    x.add_argument("--out", required=True, help="summary CSV path")
    x.add_argument("--raw", help="optional CSV of every per-replication estimate")
    seed_flag(x)
    x.set_defaults(func=cmd_experiment)

    b = sub.add_parser("compare-bs", help="RMSE of the model relative to Black-Scholes on the same quotes")
    pricing_inputs(b)
    quote_inputs(b)
    b.add_argument("--prices", required=True, help="date,price CSV used to fit the Black-Scholes volatility")
    b.add_argument("--delta", type=parse_fraction, required=True, help="price observation step [years]")
    b.add_argument("--out", default="-", help="result JSON path (default stdout)")
    b.set_defaults(func=cmd_compare_bs)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, NumericalFault, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> int:
    return run(sys.argv[1:])
