import numpy as np
import pytest

from tumorsmc import CoeffConfig, TimeGrid, build_mesh


@pytest.fixture(scope="session")
def unit_mesh():
    return build_mesh((0.0, 1.0, 0.0, 1.0), 8, 8)


@pytest.fixture(scope="session")
def small_mesh():
    return build_mesh((-5.0, 5.0, -5.0, 5.0), 16, 16)


@pytest.fixture(scope="session")
def small_cfg():
    # eps comparable to h = 0.625 so the interface stays resolved
    return CoeffConfig(eps=0.65)


@pytest.fixture(scope="session")
def short_grid():
    return TimeGrid(0.25, 0.05, (0.25,))


@pytest.fixture()
def rng():
    return np.random.default_rng(42)
