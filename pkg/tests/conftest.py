import math

import numpy as np
import pytest

from mfgas.equilibrium import default_grid, solve_equilibrium
from mfgas.kernels import InteractionKernel, Potential

SQRT_PI = math.sqrt(math.pi)


@pytest.fixture(scope="session")
def log1d():
    return InteractionKernel("log", 1)


@pytest.fixture(scope="session")
def quad1d():
    return Potential.power(2.0, 1)


@pytest.fixture(scope="session")
def log_solution(log1d, quad1d):
    """gamma = 1 log gas in x**2 on the default 800-cell grid."""
    return solve_equilibrium(log1d, quad1d, 1.0, default_grid(log1d, quad1d, 1.0, m=800))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one result line per acceptance criterion; printed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
