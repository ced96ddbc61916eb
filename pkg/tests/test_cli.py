import json
import subprocess
import sys

import pytest

from attn_pricer.cli import SEED_ENV, build_parser, parse_fraction, run

MODEL = ["--a", "30", "--b", "15", "--sigma-i", "0.6", "--mu", "0", "--sigma-p", "0.2", "--tau", "9/360"]
SUBCOMMANDS = ["simulate", "estimate", "gof", "price", "calibrate", "experiment", "compare-bs"]


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run(["simulate", *MODEL, "--delta", "1/360", "--steps", "400", "--seed", "3", "--out", str(d / "sim.csv"),
                "--prices-out", str(d / "p.csv"), "--proxy-out", str(d / "v.csv")]) == 0
    assert run(["estimate", "--prices", str(d / "p.csv"), "--proxy", str(d / "v.csv"), "--delta", "1/360",
                "--max-lag", "15", "--out", str(d / "fit.json")]) == 0
    (d / "q.csv").write_text("expiry_date,strike,is_call,bid_btc,ask_btc\n"
                             "2020-03-01,20000,1,0.080,0.082\n2020-03-01,22000,1,0.030,0.031\n"
                             "2020-03-01,18000,0,0.020,0.021\n2020-02-01,20000,1,0.5,0.6\n")
    return d


def test_parse_fraction():
    assert parse_fraction("1/360") == 1 / 360
    assert parse_fraction("0.25") == 0.25


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help_lists_flags_with_units(cmd, capsys):
    assert run([cmd, "--help"]) == 0
    text = capsys.readouterr().out
    sub = next(a for a in build_parser()._subparsers._group_actions[0].choices.items() if a[0] == cmd)[1]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text
    assert "[" in text


def test_usage_errors_exit_2(capsys):
    assert run(["frobnicate"]) == 2
    assert run(["price", "--spot", "1"]) == 2
    assert run(["experiment", *MODEL, "--delta", "1/360", "--horizons", "x", "--reps", "1", "--out", "o"]) == 2


def test_domain_error_exit_1(tmp_path, capsys):
    assert run(["estimate", "--prices", str(tmp_path / "missing.csv"), "--proxy", "x", "--delta", "1/360",
                "--max-lag", "2", "--out", str(tmp_path / "f.json")]) == 1
    assert "error:" in capsys.readouterr().err


def test_estimate_output(data):
    fit = json.loads((data / "fit.json").read_text())
    for key in ("a", "b", "sigma_I", "mu", "sigma_P", "tau", "r", "loglik", "aic", "bic", "schema_version"):
        assert key in fit
    assert len(fit["price"]["criterion_table"]) == 16
    assert fit["price"]["tau"] == fit["price"]["lag"] / 360
    assert len(fit["history"]["values"]) == 16
    assert (data / "fit.json.manifest.json").exists()


def test_price_json(data, capsys):
    assert run(["price", "--params", str(data / "fit.json"), "--spot", "20000", "--strike", "20000",
                "--expiry", "0.25", "--method", "fourier"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["method"] == "fourier" and 0 < res["value"] < 20000 and res["err_estimate"] >= 0


def test_price_methods(data, tmp_path, capsys):
    base = ["price", "--params", str(data / "fit.json"), "--spot", "20000", "--strike", "19000,21000"]
    assert run(base + ["--expiry", "0.5", "--method", "mc", "--paths", "2000", "--seed", "1",
                       "--out", str(tmp_path / "mc.json")]) == 0
    assert len(json.loads((tmp_path / "mc.json").read_text())) == 2
    assert run(base + ["--expiry", "0.5", "--method", "black_scholes"]) == 2
    assert run(base + ["--expiry", "0.5", "--method", "lognormal"]) == 1


def test_calibrate_and_compare(data, tmp_path, capsys):
    assert run(["calibrate", "--params", str(data / "fit.json"), "--quotes", str(data / "q.csv"),
                "--valuation-date", "2020-01-31", "--index-level", "20000", "--maxiter", "40",
                "--out", str(tmp_path / "cal.json"), "--table", str(tmp_path / "cal.csv")]) == 0
    cal = json.loads((tmp_path / "cal.json").read_text())
    assert cal["n_quotes"] == 3 and cal["rmse"] <= cal["uncalibrated_rmse"]
    assert run(["compare-bs", "--params", str(data / "fit.json"), "--rn", str(tmp_path / "cal.json"),
                "--quotes", str(data / "q.csv"), "--valuation-date", "2020-01-31", "--index-level", "20000",
                "--prices", str(data / "p.csv"), "--delta", "1/360"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["rmse_ratio"] == pytest.approx(out["model_rmse"] / out["black_scholes_rmse"])


def test_gof(data, capsys):
    assert run(["gof", "--params", str(data / "fit.json"), "--proxy", str(data / "v.csv"), "--delta", "1/360"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert 0 <= out["p_value"] <= 1 and out["n"] == 400


def _experiment(path, seed, threads, extra=()):
    return run(["experiment", *MODEL, "--delta", "1/360", "--horizons", "0.25,0.5", "--reps", "6",
                "--seed", str(seed), "--threads", str(threads), "--out", str(path), *extra])


def test_experiment_byte_identical(tmp_path):
    assert _experiment(tmp_path / "a.csv", 7, 1, ["--raw", str(tmp_path / "ra.csv")]) == 0
    assert _experiment(tmp_path / "b.csv", 7, 3, ["--raw", str(tmp_path / "rb.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "ra.csv").read_bytes() == (tmp_path / "rb.csv").read_bytes()
    assert _experiment(tmp_path / "c.csv", 8, 1) == 0
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()


def test_env_seed_overrides(tmp_path, monkeypatch):
    assert _experiment(tmp_path / "a.csv", 7, 1) == 0
    monkeypatch.setenv(SEED_ENV, "7")
    assert _experiment(tmp_path / "b.csv", 99, 1) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    manifest = json.loads((tmp_path / "b.csv.manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["command"] == "experiment"
    monkeypatch.setenv(SEED_ENV, "seven")
    assert _experiment(tmp_path / "c.csv", 1, 1) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "attn_pricer", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in SUBCOMMANDS:
        assert cmd in out.stdout
