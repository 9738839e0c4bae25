import numpy as np
import pytest

from survblend.survcurve import CensoredTime, Ensemble

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def make_ensemble(times, events, lead, source_id=""):
    return Ensemble(tuple(CensoredTime(t, e) for t, e in zip(times, events)), lead, source_id)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
