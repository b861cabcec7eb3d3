import numpy as np
import pytest

from sicrelay.config import RateConfig, ScenarioConfig


@pytest.fixture
def unit_rates():
    return RateConfig.from_thresholds(1.0, 1.0)


@pytest.fixture
def two_relays():
    return ScenarioConfig.symmetric(2, trials=20_000, master_seed=11, trials_per_event=2000)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    def _report(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
