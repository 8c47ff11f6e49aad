import math

import numpy as np
import pytest

from disagg.model import RngStream
from disagg.simdata import SimConfig, simulate_lognormal


@pytest.fixture
def rng():
    return RngStream(20240601, 0)


@pytest.fixture(scope="session")
def study_data():
    """The scaled simulation-study dataset: 100 buckets of 10 log-normal bunches."""
    return simulate_lognormal(SimConfig(K=100, n=10, mu=math.log(250.0), sigma=0.10, seed=1))


def mc_se(draws, ess):
    return np.std(draws, ddof=1) / np.sqrt(ess)


ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
