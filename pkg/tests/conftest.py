import warnings

import pytest

from miura_reservoir.conditions import Simulator
from miura_reservoir.dynamics import default_model
from miura_reservoir.errors import ExcessiveLoadWarning

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def model():
    return default_model()


@pytest.fixture(scope="session")
def sim(model):
    """Session-wide memoising simulator so tests share trajectories."""
    warnings.simplefilter("ignore", ExcessiveLoadWarning)
    return Simulator(model)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
