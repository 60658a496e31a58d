import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from runtumble.model import ContinuumModel, LatticeModel, VelocityChain, build_1d_two_state, nearest_neighbor_kernel

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# acceptance lines collected by tests/test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)


@pytest.fixture
def basic():
    """The worked example: lam = 2, kappa = 1, gamma = 4."""
    return build_1d_two_state(2.0, 1.0, 4.0)


@pytest.fixture
def continuum():
    return ContinuumModel(2.0, 1.0, 4.0)


@pytest.fixture
def cyclic():
    """A 1D model with non-symmetric flips (right -> rest -> left -> right) and a back edge."""
    chain = VelocityChain(
        [[1], [0], [-1]], [[0.0, 1.0, 0.2], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]
    )
    return LatticeModel(1.5, 0.5, 2.0, nearest_neighbor_kernel(1), chain)


@pytest.fixture
def four_velocity():
    return LatticeModel(
        1.0, 0.5, 1.0, nearest_neighbor_kernel(2),
        VelocityChain.uniform([[1, 0], [-1, 0], [0, 1], [0, -1]]),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
