import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from attn_pricer.core import DomainError, InterestHistory, ModelParams, RNParams, integrate_history
from attn_pricer.riskneutral import (CharFnContext, charfn_AB, charfn_delayed, charfn_general, from_tilde,
                                     to_risk_neutral, uncalibrated)
from attn_pricer.sim import cir_step

P = ModelParams(a=30.0, b=15.0, sigma_I=0.6, mu=0.0, sigma_P=0.2, tau=0.025, r=0.0)


def riccati(lam, at, bt, sp, si, u):
    """Integrate B' = sI^2 B^2/2 - at B - sp^2 (i lam + lam^2)/2, A' = at bt B from 0."""
    c = 0.5 * sp**2 * (1j * lam + lam * lam)

    def f(_, y):
        Bv = y[2] + 1j * y[3]
        dB = 0.5 * si**2 * Bv * Bv - at * Bv - c
        dA = at * bt * Bv
        return [dA.real, dA.imag, dB.real, dB.imag]

    y = solve_ivp(f, [0, u], [0, 0, 0, 0], method="DOP853", rtol=1e-11, atol=1e-13).y[:, -1]
    return y[0] + 1j * y[1], y[2] + 1j * y[3]


def test_to_risk_neutral_origin():
    rn = to_risk_neutral(P, 0.0, 0.0)
    assert (rn.a_tilde, rn.b_tilde) == (30.0, 15.0)
    assert rn == uncalibrated(P)


def test_lambda_ab_bound():
    bound = P.a * P.b - 0.5 * P.sigma_I**2
    assert bound == pytest.approx(449.82)
    to_risk_neutral(P, 0.0, bound)
    with pytest.raises(DomainError, match="lambda_ab"):
        to_risk_neutral(P, 0.0, bound + 1e-9)


def test_lambda_a_open_boundary():
    rn = to_risk_neutral(P, -30.0 + 1e-3, 0.0)
    assert rn.a_tilde == pytest.approx(1e-3)
    with pytest.raises(DomainError, match="lambda_a"):
        to_risk_neutral(P, -30.0, 0.0)


def test_from_tilde_consistent():
    rn = from_tilde(P, 20.0, 11.0)
    back = to_risk_neutral(P, rn.lambda_a, rn.lambda_ab)
    assert back.a_tilde == pytest.approx(20.0) and back.b_tilde == pytest.approx(11.0)


def test_AB_trivial_cases():
    rn = uncalibrated(P)
    assert charfn_AB(0.0, rn, 0.2, 0.6, 3.0) == (0j, 0j)
    A, B = charfn_AB(np.array([1.0, 2 - 1j, -5.0]), rn, 0.2, 0.6, 0.0)
    assert np.all(A == 0) and np.all(B == 0)
    with pytest.raises(DomainError):
        charfn_AB(1.0, rn, 0.2, 0.6, -0.1)


@pytest.mark.parametrize("lam,at,bt,sp,si,u", [
    (1.0, 30, 15, 0.2, 0.6, 0.5), (3 - 2.5j, 30, 15, 0.2, 0.6, 1.0), (50 - 2.5j, 2, 1, 0.5, 1.5, 10.0),
    (20 - 4j + 0.5j, 0.5, 4, 0.8, 2.0, 10.0), (200 - 2.5j, 1, 1, 1, 1.4, 10.0), (-2.5j, 0.5, 4, 1.0, 1.0, 0.5),
    (0.3 - 2.5j, 0.5, 4, 1.0, 1.0, 0.8)])
def test_AB_solve_riccati(lam, at, bt, sp, si, u):
    A, B = charfn_AB(lam, RNParams(at, bt, 0, 0), sp, si, u)
    Ao, Bo = riccati(lam, at, bt, sp, si, u)
    assert abs(A - Ao) < 1e-9 * max(1, abs(Ao))
    assert abs(B - Bo) < 1e-9 * max(1, abs(Bo))


def test_heston_monte_carlo_cross_check():
    # no delay: the model is a zero-correlation Heston model in the interest
    p = ModelParams(a=4.0, b=1.0, sigma_I=0.8, mu=0.0, sigma_P=0.5, tau=0.0, r=0.02)
    h = InterestHistory.constant(1.2, 0.0)
    rn = uncalibrated(p)
    t, n, steps = 0.5, 100_000, 360
    ctx = CharFnContext.at_origin(p, rn, h, x0=0.1)
    phi = charfn_delayed(1.0, ctx, t)
    rng = np.random.default_rng(99)
    y = np.full(n, 1.2)
    acc = 0.5 * y
    dt = t / steps
    for _ in range(steps):
        y = cir_step(y, rn.a_tilde, rn.b_tilde, p.sigma_I, dt, rng)
        acc += y
    J = dt * (acc - 0.5 * y)
    X = 0.1 + p.r * t - 0.5 * p.sigma_P**2 * J + p.sigma_P * np.sqrt(J) * rng.standard_normal(n)
    e = np.exp(1j * X)
    se = np.std(e.real) / math.sqrt(n), np.std(e.imag) / math.sqrt(n)
    assert abs(e.real.mean() - phi.real) < 3 * se[0]
    assert abs(e.imag.mean() - phi.imag) < 3 * se[1]


H2 = InterestHistory(np.array([-0.05, -0.02, 0.0]), np.array([9.0, 17.0, 12.0]))


def ctx_at(s=0.0, x_s=0.0, i_lag=None, tau=0.025, r=0.01, rn=None):
    return CharFnContext(rn or RNParams(20.0, 13.0, -10.0, 190.0), 0.3, 0.7, r, tau, H2, s, x_s, i_lag)


def test_same_time_returns_current_state():
    assert charfn_delayed(2.0, ctx_at(), 0.0) == 1.0
    assert charfn_delayed(2.0, ctx_at(x_s=0.4), 0.0) == pytest.approx(np.exp(0.8j))
    assert charfn_general(2.0, ctx_at(), 0.0) == 1.0


def test_lognormal_branch_constant_history():
    h = InterestHistory.constant(14.0, 0.05)
    ctx = CharFnContext(uncalibrated(P), 0.2, 0.6, 0.03, 0.025, h, 0.0, 0.5)
    lam, t = 1.7, 0.02
    expected = np.exp(1j * lam * (0.5 + 0.03 * t) - 0.5 * 0.04 * (1j * lam + lam * lam) * 14.0 * t)
    assert charfn_delayed(lam, ctx, t) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("t", [0.01, 0.025, 0.3, 2.0])
def test_zero_argument_is_one(t):
    assert charfn_delayed(0.0, ctx_at(), t) == pytest.approx(1.0, abs=1e-15)
    assert charfn_delayed(0.0, ctx_at(s=0.04, i_lag=11.0), t + 0.04) == pytest.approx(1.0, abs=1e-15)
    assert charfn_general(0.0, ctx_at(), t) == pytest.approx(1.0, abs=1e-15)


def test_missing_branch_data():
    with pytest.raises(DomainError):
        charfn_delayed(1.0, ctx_at(s=0.04), 0.5)
    with pytest.raises(DomainError):
        charfn_general(1.0, ctx_at(s=0.04), 0.5, path_integral=0.3)
    with pytest.raises(DomainError):
        charfn_general(1.0, ctx_at(s=0.04, i_lag=11.0), 0.05)
    with pytest.raises(DomainError):
        charfn_delayed(1.0, ctx_at(), -0.1)


def test_imaginary_part_domain():
    with pytest.raises(DomainError):
        charfn_delayed(1 - 4.0j, ctx_at(), 0.5)
    with pytest.raises(DomainError):
        charfn_delayed(1 + 1.5j, ctx_at(), 0.5)
    charfn_delayed(1 - 3.9j, ctx_at(), 0.5)


@given(st.floats(-30, 30), st.floats(0.001, 3.0))
def test_general_equals_delayed_at_origin(lam, t):
    assert charfn_general(lam, ctx_at(), t) == pytest.approx(charfn_delayed(lam, ctx_at(), t), rel=1e-13, abs=1e-300)


def test_general_lognormal_modulus():
    ctx = ctx_at(s=0.5, i_lag=10.0)
    lam, integral = 3.0, 0.2
    val = charfn_general(lam, ctx, 0.52, path_integral=integral)
    assert abs(val) == pytest.approx(math.exp(-0.5 * 0.09 * lam * lam * integral), rel=1e-13)


def _branches():
    return [(ctx_at(), 0.01, None, "delayed"), (ctx_at(), 0.025, None, "delayed"), (ctx_at(), 1.2, None, "delayed"),
            (ctx_at(s=0.01), 0.5, None, "delayed"), (ctx_at(s=0.3, i_lag=8.0), 0.9, None, "delayed"),
            (ctx_at(s=0.3, i_lag=8.0), 0.31, 0.12, "general"), (ctx_at(s=0.3, i_lag=8.0), 1.0, 0.3, "general")]


def _eval(kind, lam, ctx, t, integral):
    if kind == "delayed":
        return charfn_delayed(lam, ctx, t)
    return charfn_general(lam, ctx, t, path_integral=integral)


@given(st.floats(-60, 60), st.floats(-2.0, 2.0))
def test_hermitian_and_bounded(lam, x_s):
    for ctx, t, integral, kind in _branches():
        ctx = ctx.shifted(x_s)
        v, w = _eval(kind, lam, ctx, t, integral), _eval(kind, -lam, ctx, t, integral)
        assert w == pytest.approx(np.conj(v), rel=1e-12, abs=1e-15)
        assert abs(v) <= 1.0 + 1e-12


@given(st.floats(0.5, 40), st.floats(0.5, 20), st.floats(0.1, 1.5), st.floats(0.05, 1.0), st.floats(0, 0.1),
       st.floats(0.001, 2.0), st.floats(-1, 1), st.floats(0, 0.05))
def test_martingale_identity(at, bt, si, sp, r, t, x_s, tau):
    if 2 * at * bt < si * si:
        return
    ctx = CharFnContext(RNParams(at, bt, 0, 0), sp, si, r, tau, H2, 0.0, x_s)
    assert charfn_delayed(-1j, ctx, t).real == pytest.approx(math.exp(x_s + r * t), rel=1e-9)


def test_branch_continuity_at_delay():
    ctx = ctx_at()
    for lam in (0.5, 4.0, 1 - 2.5j):
        inner = charfn_delayed(lam, ctx, 0.025)
        outer = charfn_delayed(lam, ctx, 0.025 * (1 + 1e-13))
        assert abs(outer - inner) < 1e-10 * abs(inner)


def test_tower_consistency():
    # averaging the s = tau conditional function over X_tau reproduces the s = 0 function
    ctx0 = ctx_at(x_s=0.2)
    tau, t, lam = 0.025, 0.6, 1.3
    var = 0.09 * integrate_history(H2, 0.0, tau, tau)
    rng = np.random.default_rng(4)
    x_tau = 0.2 + ctx0.r * tau - 0.5 * var + math.sqrt(var) * rng.standard_normal(200_000)
    vals = np.array([charfn_delayed(lam, CharFnContext(ctx0.rn, 0.3, 0.7, ctx0.r, tau, H2, tau, 0.0, H2.current), t)])
    mc = np.exp(1j * lam * x_tau) * vals[0]
    target = charfn_delayed(lam, ctx0, t)
    se = math.hypot(mc.real.std(), mc.imag.std()) / math.sqrt(mc.size)
    assert abs(mc.mean() - target) < 4 * se
