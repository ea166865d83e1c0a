from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from trescaflow.geometry import ChannelGeometry, build_grid

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_grid(N=16, h_cos=(), L=1.0, h_mean=1.0, Ns=None):
    return build_grid(ChannelGeometry(L, h_mean, tuple(h_cos), (), N, Ns or N))


@pytest.fixture(scope="session")
def flat16():
    return make_grid(16)


@pytest.fixture(scope="session")
def wavy16():
    return make_grid(16, (0.1,))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
