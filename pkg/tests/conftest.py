import numpy as np
import pytest

from chargeopt import Simulator, default_params


@pytest.fixture(scope="session")
def cell():
    """Full-grid cell with aging enabled."""
    params, funcs = default_params()
    return Simulator(params, funcs)


@pytest.fixture(scope="session")
def cell_no_aging():
    """Full-grid cell with side reactions switched off."""
    params, funcs = default_params(aging=False)
    return Simulator(params, funcs)


@pytest.fixture(scope="session")
def desk_cell():
    """Reduced-grid cell for fast environment/trainer tests."""
    params, funcs = default_params(n_r=8, n_x=8)
    return Simulator(params, funcs)


@pytest.fixture(scope="session")
def desk_cell_no_aging():
    params, funcs = default_params(n_r=8, n_x=8, aging=False)
    return Simulator(params, funcs)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
