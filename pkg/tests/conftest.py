import numpy as np
import pytest

from polytherm import GridSpec, PaperEnergy, QuadraticEnergy


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid6():
    return GridSpec((6, 7, 8), (1.0, 1.3, 0.8))


@pytest.fixture
def cube8():
    return GridSpec((8, 8, 8), (1.0, 1.0, 1.0))


@pytest.fixture
def paper():
    return PaperEnergy()


@pytest.fixture
def quadratic():
    return QuadraticEnergy()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
