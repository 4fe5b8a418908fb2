import numpy as np
import pytest

from chsep.field_ops import Grid, ScalarField
from chsep.potential import SingularPotential


@pytest.fixture
def pot():
    return SingularPotential(1.0, 2.0)


@pytest.fixture
def grid32():
    return Grid(32, 32)


def band_limited(grid, rng, kmax=4, zero_mean=False):
    """Random real trigonometric polynomial with |k_i| <= kmax."""
    x, y = grid.coordinates()
    v = np.zeros(grid.shape)
    for j in range(-kmax, kmax + 1):
        for l in range(0, kmax + 1):
            if j == 0 and l == 0:
                continue
            a, b = rng.normal(size=2)
            ph = 2 * np.pi * (j * x / grid.lx + l * y / grid.ly)
            v += a * np.cos(ph) + b * np.sin(ph)
    if not zero_mean:
        v += rng.normal()
    return ScalarField(grid, v)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.LINES):
        terminalreporter.write_line(mod.LINES[k])
