import numpy as np
import pytest

from artifact import presets
from artifact.geometry_field import Grid


@pytest.fixture(scope="session")
def grid64():
    return Grid.for_support(1.0, 64, 64)


@pytest.fixture(scope="session")
def canonical64(grid64):
    return presets.make_field("canonical", grid64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance lines are printed as they happen and repeated in the summary,
# so they survive output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
