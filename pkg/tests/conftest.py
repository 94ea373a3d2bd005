import numpy as np
import pytest

from gmsfem.coefficient import constant_field
from gmsfem.fem import assemble_stiffness, assemble_weighted_mass
from gmsfem.mesh import build_coarse_grid, build_fine_grid


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def grid16():
    fine = build_fine_grid(16, 16)
    coarse = build_coarse_grid(fine, 4, 4)
    kappa = constant_field(16, 16, 1.0)
    return fine, coarse, kappa, assemble_stiffness(fine, kappa), assemble_weighted_mass(fine, kappa)
