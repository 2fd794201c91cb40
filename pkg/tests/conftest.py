import numpy as np
import pytest

from wclgame.network import build_distance_matrix, build_grid_network


@pytest.fixture(scope="session")
def grid4():
    """4x4 lattice of 1 km roads."""
    return build_distance_matrix(build_grid_network(4, 4, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from helpers import CRITERIA

    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
