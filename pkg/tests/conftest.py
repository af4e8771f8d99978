import numpy as np
import pytest

from maglev_twin.fieldgrid import build_field_grid
from maglev_twin.magnetics import (CoilArrayModel, CylindricalCoil,
                                   default_coil_array, default_handle_magnets)


@pytest.fixture(scope="session")
def field_grid():
    return build_field_grid(CylindricalCoil(), resolution=5.0e-4)


@pytest.fixture(scope="session")
def array_model(field_grid):
    return CoilArrayModel(default_coil_array(), default_handle_magnets(),
                          grid=field_grid)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260826)
