import sys

import numpy as np
import pytest

from replab.game import RPS, RPS_FORK, one_player


@pytest.fixture
def rps():
    return one_player(RPS, name="rps")


@pytest.fixture
def fork():
    return one_player(RPS_FORK, name="rps_fork")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
