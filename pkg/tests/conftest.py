import numpy as np
import pytest

from kpcm.ensemble import random_state


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def state_factory(rng):
    def make(n, gamma=1.0, **kw):
        return random_state(rng, n, gamma, **kw)
    return make


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
