import numpy as np
import pytest

from hessianlab.grid import DomainSpec

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def record(criterion, passed, detail):
    ACCEPTANCE_LINES.append(
        f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1][:-1])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def coarse_ball():
    """Unit ball in C^2 on a 9^4 box (h = 0.25)."""
    return DomainSpec.ball(2, 1.0, half_width=1.5, h=0.25)


def quadratic(c=2.0):
    return lambda x1, y1, x2, y2: c * (x1 ** 2 + y1 ** 2 + x2 ** 2 + y2 ** 2)
