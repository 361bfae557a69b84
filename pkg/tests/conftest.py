import numpy as np
import pytest

from hammerstein import (ProblemInstance, TimeGrid, build_finite_state_space, canonical_mixture,
                         constant_source, constant_weight, matrix_semigroup_kernel,
                         power_nonlinearity)
from hammerstein.kernel import damp

DESK_Q = np.array([[1.0, -1.0], [-1.0, 1.0]])


def desk_stochastic(nt: int = 200, T: float = 5.0, g: float = 0.25) -> ProblemInstance:
    """2-state conservative generator, sqrt nonlinearity, canonical mixture weight."""
    space = build_finite_state_space([1.0, 1.0])
    grid = TimeGrid(T, nt)
    return ProblemInstance(matrix_semigroup_kernel(DESK_Q, space), power_nonlinearity(0.5),
                           canonical_mixture(2, rate=1.0, ratio=0.5, lambda0=0.5),
                           constant_source(space, grid, g))


def desk_substochastic(nt: int = 200, T: float = 2.0, m: float = 1.0) -> ProblemInstance:
    """One state with damping m, h = 1, g = 1, G = sqrt."""
    space = build_finite_state_space([1.0])
    grid = TimeGrid(T, nt)
    kernel = damp(matrix_semigroup_kernel([[0.0]], space), m)
    return ProblemInstance(kernel, power_nonlinearity(0.5), constant_weight(1, 1.0),
                           constant_source(space, grid, 1.0))


@pytest.fixture(scope="session")
def stoch():
    return desk_stochastic()


@pytest.fixture(scope="session")
def substoch():
    return desk_substochastic()
