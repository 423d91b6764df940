import numpy as np
import pytest

from wgspec.eigensolve import lowest_eigenpairs
from wgspec.modes import limiting_spectrum
from wgspec.stripgrid import StripGrid, assemble_limiting, square_well
from wgspec.transverse import discrete_nu

D = np.pi
# depth tuned so the continuum bound state sits at 0.75 (separable 1D solve)
STD_DEPTH = -0.6768
STD_LAM_CONT = 0.749978695775
STD_BETA_CONT = 0.755915454599


@pytest.fixture(scope="session")
def std_well():
    return square_well(STD_DEPTH, a=1.0)


@pytest.fixture(scope="session")
def coarse_grid():
    """Workhorse grid: cheap, still resolves the standard well to ~1%."""
    return StripGrid.build(D, 0.2, 14.0)


@pytest.fixture(scope="session")
def coarse_limiting(std_well, coarse_grid):
    op = assemble_limiting(coarse_grid, std_well)
    nu1h = discrete_nu(D, coarse_grid.h, 1)
    res = lowest_eigenpairs(op, 4, nu1h - 0.05)
    return op, res


@pytest.fixture(scope="session")
def coarse_spectrum(std_well, coarse_grid):
    op = assemble_limiting(coarse_grid, std_well)
    return op, limiting_spectrum(op, std_well, "-", coarse_grid)


@pytest.fixture(scope="session")
def oracle_grid():
    """Small enough for the dense cross-checks (a few hundred unknowns)."""
    return StripGrid.build(D, 0.3, 10.0)
