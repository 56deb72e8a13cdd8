"""
Shared test fixtures and configuration.
"""

import os

import numpy as np
import pytest

from solver.grid import Field, Grid
from solver.motility import MotilityFunction
from solver.pde import SchemeConfig, run

RUNTIME_ENV_KEYS = ("DSMLAB_LOG_LEVEL", "DSMLAB_WORKERS")


@pytest.fixture(autouse=True)
def _isolated_runtime_env():
    """Keep runtime settings from the developer shell out of the tests."""
    previous = {key: os.environ.get(key) for key in RUNTIME_ENV_KEYS}
    for key in RUNTIME_ENV_KEYS:
        os.environ.pop(key, None)
    try:
        yield
    finally:
        for key, old_value in previous.items():
            if old_value is None:
                os.environ.pop(key, None)
            else:
                os.environ[key] = old_value


@pytest.fixture
def line_grid():
    return Grid.interval(1.0, 41)


@pytest.fixture
def square_grid():
    return Grid.rectangle(1.0, 1.0, 21, 21)


@pytest.fixture
def gamma_exp():
    return MotilityFunction.exponential(0.1)


def _cosine_start(grid, amplitude=0.5):
    return Field.from_function(grid, lambda x: 1.0 + amplitude * np.cos(np.pi * x))


@pytest.fixture
def cosine_start():
    """u0 = 1 + amplitude * cos(pi x) on a 1D grid."""
    return _cosine_start


@pytest.fixture(scope="session")
def short_run():
    """Exponential(0.1), mu = 1, u0 = 1 + 0.5 cos(pi x) on 41 vertices up to t = 0.5."""
    grid = Grid.interval(1.0, 41)
    cfg = SchemeConfig(t_end=0.5, output_stride=50, elliptic_method="direct", lp_power=4.0)
    return run(_cosine_start(grid), MotilityFunction.exponential(0.1), 1.0, cfg)


@pytest.fixture(scope="session")
def constant_run():
    grid = Grid.interval(1.0, 21)
    cfg = SchemeConfig(t_end=0.05, output_stride=10, lp_power=4.0)
    return run(Field.constant(grid, 1.0), MotilityFunction.exponential(0.1), 1.0, cfg)
