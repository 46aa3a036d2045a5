import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from castsim.estimation import TABLE_RANGES, ParamRange  # noqa: E402
from castsim.string_model import PARAM_NAMES, StringParams  # noqa: E402


def midrange_params() -> StringParams:
    """Geometric midpoint of every parameter range (exponent 0.5)."""
    return ParamRange().params(np.full(len(PARAM_NAMES), 0.5))


@pytest.fixture
def mid_params():
    return midrange_params()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_chain(rng, n, rest):
    """Random-walk chain with segment lengths near rest and random velocities."""
    angles = np.cumsum(rng.uniform(-1.0, 1.0, n - 1)) + rng.uniform(-np.pi, np.pi)
    lengths = rest * rng.uniform(0.8, 1.2, n - 1)
    steps = np.stack([lengths * np.cos(angles), lengths * np.sin(angles)], axis=1)
    origin = np.array([0.1, 0.9])
    pos = np.vstack([origin, origin + np.cumsum(steps, axis=0)])
    vel = rng.normal(0.0, 1.0, (n, 2))
    return pos, vel


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = []


def record_criterion(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
