from __future__ import annotations

import numpy as np
import pytest

from mmop.families import build_family
from mmop.fixtures import angelesco_grid, f1, f2, legendre_grid
from mmop.gaussborel import factorize
from mmop.measures import moment_matrix


def family_for(grid, T, precision="double"):
    M = moment_matrix(grid, T, precision=precision)
    F = factorize(M)
    return M, F, build_family(F, grid.q, grid.p)


@pytest.fixture(scope="session")
def legendre():
    return family_for(legendre_grid(), 14)


@pytest.fixture(scope="session")
def angelesco_row():
    return family_for(angelesco_grid(3, "row"), 14)


@pytest.fixture(scope="session")
def angelesco_column():
    return family_for(angelesco_grid(2, "column"), 14)


@pytest.fixture(scope="session")
def fixture_f1():
    return f1()


@pytest.fixture(scope="session")
def fixture_f2():
    return f2()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
