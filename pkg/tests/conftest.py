import numpy as np
import pytest

from modules.geodesic_solver import SolverConfig
from modules.loop_space import DiscreteLoop
from modules.mane_engine import ConvexBody
from modules.metric_core import ConformalFactor, conformal_scale, euclidean, randers_constant


@pytest.fixture
def flat():
    return euclidean()


@pytest.fixture
def randers_half():
    return randers_constant((0.5, 0.0))


@pytest.fixture
def wavy_conformal():
    factor = ConformalFactor.from_modes({(0, 1): (0.2, 0.0), (1, 1): (0.05, -0.03)}, constant_offset=1.0)
    return conformal_scale(euclidean(), factor)


@pytest.fixture
def two_speed_loop():
    """Horizontal (2, 0) loop: four segments at speed 1, then four at speed 3."""
    steps = np.array([1, 1, 1, 1, 3, 3, 3, 3]) / 8.0
    xs = np.concatenate([[0.0], np.cumsum(steps)[:-1]])
    return DiscreteLoop(np.column_stack([xs, np.full(8, 0.4)]), (2, 0))


@pytest.fixture
def unit_square():
    return ConvexBody([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])


@pytest.fixture
def fast_solver():
    return SolverConfig(n_vertices=64, num_starts=12, jitter=0.02)
