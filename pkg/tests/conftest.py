import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from attn_pricer.core import InterestHistory, ModelParams

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DELTA = 1.0 / 360.0


@pytest.fixture
def base_params():
    """Parameter set of the estimation experiment."""
    return ModelParams(a=30.0, b=15.0, sigma_I=0.6, mu=0.0, sigma_P=0.2, tau=0.025, r=0.0)


@pytest.fixture
def flat_history():
    return InterestHistory.constant(14.0, 0.05)


@pytest.fixture
def spot():
    return 20000.0


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


@pytest.fixture
def x0(spot):
    return math.log(spot)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion and print it."""

    def _report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
