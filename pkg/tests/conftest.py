import math

import numpy as np
import pytest

from stochch.spectral import Field, Grid1D


@pytest.fixture
def grid():
    return Grid1D(2 * math.pi, 256)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_field(grid, rng, modes=6, decay=0.6):
    """Random trigonometric polynomial with geometric amplitude decay."""
    x = grid.x * (2 * math.pi / grid.length)
    vals = np.full(grid.n, rng.normal())
    for k in range(1, modes + 1):
        a, b = rng.normal(size=2) * decay**k
        vals += a * np.cos(k * x) + b * np.sin(k * x)
    return Field(grid, vals)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
