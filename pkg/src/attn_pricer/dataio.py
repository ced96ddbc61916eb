"""CSV loaders for prices, proxies and option quotes, and a versioned JSON
format for parameters."""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DomainError, InterestHistory, ModelParams, OptionQuote, RNParams, SeriesPair

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
PRICE_HEADER = ["date", "price"]
PROXY_HEADER = ["date", "value"]
QUOTE_HEADER = ["expiry_date", "strike", "is_call", "bid_btc", "ask_btc"]
DAYS_PER_YEAR = 365.0

MODEL_FIELDS = ("a", "b", "sigma_I", "mu", "sigma_P", "tau", "r")
RN_FIELDS = ("a_tilde", "b_tilde", "lambda_a", "lambda_ab")
# fields written alongside parameters by the estimate and calibrate commands
_RESULT_FIELDS = {"loglik", "aic", "bic", "converged", "cir", "price", "lag", "rmse", "uncalibrated_rmse",
                  "n_quotes", "iterations", "hessian_condition", "weakly_identified"}


class DataError(DomainError):
    """Malformed or inconsistent input file; carries the file and 1-based line."""

    def __init__(self, file, line: Optional[int], message: str):
        self.file = str(file)
        self.line = line
        where = f"{self.file}:{line}" if line is not None else self.file
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class DatasetBundle:
    series: SeriesPair
    quotes: list
    valuation_date: str


def _read_rows(path, header):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise DataError(path, 1, "empty file") from None
        if [c.strip() for c in first] != header:
            raise DataError(path, 1, f"header must be {','.join(header)}, got {','.join(first)}")
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(path, reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            rows.append((reader.line_num, [c.strip() for c in row]))
    return rows


def _date(path, line, text):
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise DataError(path, line, f"invalid ISO-8601 date {text!r}") from None


def _number(path, line, text, name):
    try:
        v = float(text)
    except ValueError:
        raise DataError(path, line, f"{name} {text!r} is not a number") from None
    if not math.isfinite(v):
        raise DataError(path, line, f"{name} must be finite, got {text!r}")
    return v


def _dated_column(path, header):
    out = {}
    for line, (d, v) in _read_rows(path, header):
        day = _date(path, line, d)
        if day in out:
            raise DataError(path, line, f"duplicate date {d}")
        value = _number(path, line, v, header[1])
        if not value > 0:
            raise DataError(path, line, f"{header[1]} must be > 0, got {v}")
        out[day] = (line, value)
    return out


def load_series(prices_file, proxy_file, delta: float, max_lag: int) -> SeriesPair:
    """Daily prices and proxy joined on date.

    The first ``max_lag`` joined days serve only as proxy history; log prices
    start after them.
    """
    if max_lag < 0:
        raise DomainError(f"max_lag must be >= 0, got {max_lag}")
    prices = _dated_column(prices_file, PRICE_HEADER)
    proxy = _dated_column(proxy_file, PROXY_HEADER)
    days = sorted(prices.keys() & proxy.keys())
    if not days:
        raise DataError(prices_file, None, f"no dates in common with {proxy_file}")
    gaps = [(a, b) for a, b in zip(days, days[1:]) if (b - a).days != 1]
    if gaps:
        listed = ", ".join(f"{a + dt.timedelta(days=1)}..{b - dt.timedelta(days=1)}" for a, b in gaps[:10])
        more = f" and {len(gaps) - 10} more" if len(gaps) > 10 else ""
        raise DataError(prices_file, None, f"missing dates after joining with {proxy_file}: {listed}{more}")
    if len(days) < max_lag + 2:
        raise DataError(prices_file, None, f"{len(days)} joined days cannot cover max_lag={max_lag} plus one return")
    x = np.log([prices[d][1] for d in days[max_lag:]])
    y = np.array([proxy[d][1] for d in days])
    return SeriesPair(delta, x, y, start_date=days[max_lag].isoformat())


def load_prices(prices_file) -> np.ndarray:
    """Prices from a ``date,price`` file in date order."""
    col = _dated_column(prices_file, PRICE_HEADER)
    return np.array([col[d][1] for d in sorted(col)])


def load_proxy(proxy_file) -> np.ndarray:
    """Proxy values from a ``date,value`` file in date order."""
    col = _dated_column(proxy_file, PROXY_HEADER)
    return np.array([col[d][1] for d in sorted(col)])


def _flag(path, line, text):
    t = text.strip().lower()
    if t in ("1", "true", "call", "c"):
        return True
    if t in ("0", "false", "put", "p"):
        return False
    raise DataError(path, line, f"is_call {text!r} is not one of 1/0, true/false, call/put, C/P")


def load_quotes(quotes_file, valuation_date, index_level: float, rejected: Optional[list] = None) -> list:
    """Option quotes with BTC premiums converted to currency at ``index_level``.

    Rows expiring before the valuation date are skipped; when ``rejected`` is
    a list, ``(line, reason)`` pairs are appended to it.
    """
    if not index_level > 0:
        raise DomainError(f"index level must be > 0, got {index_level!r}")
    val = valuation_date if isinstance(valuation_date, dt.date) else _date(quotes_file, None, str(valuation_date))
    quotes = []
    for line, (exp, strike, flag, bid, ask) in _read_rows(quotes_file, QUOTE_HEADER):
        expiry = _date(quotes_file, line, exp)
        k = _number(quotes_file, line, strike, "strike")
        is_call = _flag(quotes_file, line, flag)
        b = _number(quotes_file, line, bid, "bid_btc")
        a = _number(quotes_file, line, ask, "ask_btc")
        if expiry < val:
            reason = f"expiry {exp} is before valuation date {val.isoformat()}"
            log.warning("%s:%d: %s", quotes_file, line, reason)
            if rejected is not None:
                rejected.append((line, reason))
            continue
        try:
            q = OptionQuote(strike=k, expiry=(expiry - val).days / DAYS_PER_YEAR, bid=b * index_level,
                            ask=a * index_level, underlying=float(index_level), is_call=is_call)
        except DomainError as exc:
            raise DataError(quotes_file, line, str(exc)) from None
        quotes.append(q)
    quotes.sort(key=lambda q: (q.expiry, q.strike, not q.is_call, q.bid, q.ask))
    return quotes


def _finite(record: dict, where: str):
    for k, v in record.items():
        if isinstance(v, float) and not math.isfinite(v):
            raise DomainError(f"{where}.{k} is not finite ({v!r})")


def params_to_dict(p: ModelParams, rn: Optional[RNParams] = None, h: Optional[InterestHistory] = None) -> dict:
    out = {"schema_version": SCHEMA_VERSION}
    out.update({k: float(getattr(p, k)) for k in MODEL_FIELDS})
    _finite(out, "model")
    if rn is not None:
        block = {k: float(getattr(rn, k)) for k in RN_FIELDS}
        _finite(block, "risk_neutral")
        out["risk_neutral"] = block
    if h is not None:
        out["history"] = {"times": [float(t) for t in h.times], "values": [float(v) for v in h.values]}
    return out


def write_params(path, p: ModelParams, rn: Optional[RNParams] = None, h: Optional[InterestHistory] = None,
                 extra: Optional[dict] = None) -> None:
    """Write parameters as JSON; floats are stored in shortest round-trip form."""
    record = params_to_dict(p, rn, h)
    if extra:
        record.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        try:
            json.dump(record, fh, indent=2, sort_keys=True, allow_nan=False)
        except ValueError as exc:
            raise DomainError(f"cannot write non-finite value: {exc}") from None
        fh.write("\n")


def _load_json(path):
    def no_constants(name):
        raise DataError(path, None, f"non-finite literal {name} not allowed")

    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh, parse_constant=no_constants)
        except json.JSONDecodeError as exc:
            raise DataError(path, exc.lineno, f"invalid JSON: {exc.msg}") from None


def _rn_from(path, block):
    missing = [k for k in ("a_tilde", "b_tilde") if k not in block]
    if missing:
        raise DataError(path, None, f"risk-neutral block lacks {', '.join(missing)}")
    return RNParams(*(float(block[k]) for k in ("a_tilde", "b_tilde")),
                    *(float(block.get(k, math.nan)) for k in ("lambda_a", "lambda_ab")))


def read_params(path):
    """Read ``(ModelParams, RNParams or None, InterestHistory or None)``."""
    rec = _load_json(path)
    if not isinstance(rec, dict):
        raise DataError(path, None, "top level must be an object")
    version = rec.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataError(path, None, f"schema_version {version!r} unsupported (expected {SCHEMA_VERSION})")
    missing = [k for k in MODEL_FIELDS if k not in rec]
    if missing:
        raise DataError(path, None, f"missing fields: {', '.join(missing)}")
    known = set(MODEL_FIELDS) | {"schema_version", "risk_neutral", "history"} | _RESULT_FIELDS
    unknown = sorted(set(rec) - known)
    if unknown:
        warnings.warn(f"{path}: ignoring unknown fields {', '.join(unknown)}", UserWarning)
    p = ModelParams(**{k: float(rec[k]) for k in MODEL_FIELDS})
    rn = _rn_from(path, rec["risk_neutral"]) if "risk_neutral" in rec else None
    h = None
    if "history" in rec:
        hist = rec["history"]
        h = InterestHistory(np.array(hist["times"], dtype=float), np.array(hist["values"], dtype=float))
    return p, rn, h


def read_rn(path) -> RNParams:
    """Risk-neutral parameters from a calibration result or a parameter file."""
    rec = _load_json(path)
    if not isinstance(rec, dict):
        raise DataError(path, None, "top level must be an object")
    if "risk_neutral" in rec:
        return _rn_from(path, rec["risk_neutral"])
    return _rn_from(path, rec)
