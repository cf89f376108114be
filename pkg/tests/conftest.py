import numpy as np
import pytest

from forced_kepler.potentials import zero_potential

TWO_PI = 2 * np.pi

_ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def U0():
    return zero_potential(TWO_PI)


@pytest.fixture
def acceptance_report():
    """Record the one-line PASS/FAIL verdict of an acceptance criterion."""

    def record(number: int, passed: bool, detail: str) -> None:
        _ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(_ACCEPTANCE_LINES[number])
