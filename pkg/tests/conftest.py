import sys

import numpy as np
import pytest

from inls.field import make_grid, sample
from inls.groundstate import compute_constants
from inls.model import ModelParams


@pytest.fixture(scope="session")
def consts31():
    return compute_constants(3, 1.0)


@pytest.fixture(scope="session")
def params31():
    return ModelParams(N=3, b=1.0)


@pytest.fixture
def gauss1d():
    g = make_grid(1, 2048, 40.0)
    return sample(lambda x: np.exp(-x**2 / 2), g)


def gaussian3d(points=32, L=10.0, A=1.0, width=1.0, x0=(0.0, 0.0, 0.0)):
    g = make_grid(3, points, L)
    return sample(lambda x, y, z: A * np.exp(-((x - x0[0])**2 + (y - x0[1])**2 + (z - x0[2])**2) / (2 * width**2)), g)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = sorted(getattr(mod, "ACCEPTANCE_LINES", []), key=lambda l: int(l.split()[2].rstrip(":")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
