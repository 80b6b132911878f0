# tests/conftest.py
import math

import pytest

from fields import Grid
from generators import (
    SolverConfig,
    TruncatedLinearPairSpec,
    default_domain_radius,
    make_pair,
    make_truncated_linear_pair,
)


@pytest.fixture(scope="session")
def grid():
    # h = 1/32，4h = 1/8，求解区域半径 2 - 1/16
    return Grid.centered(2, 2.0, 129)


@pytest.fixture(scope="session")
def small_grid():
    return Grid.centered(2, 1.0, 65)


def linear_pair(grid, a, b, theta=math.pi / 2):
    spec = TruncatedLinearPairSpec.from_angle(a, b, theta)
    return make_truncated_linear_pair(spec, grid, domain_radius=default_domain_radius(grid))


@pytest.fixture(scope="session")
def exact_pair(grid):
    """u = 2 x₂⁺, v = 3 x₂⁻"""
    return linear_pair(grid, 2.0, 3.0)


@pytest.fixture(scope="session")
def unit_pair(grid):
    return linear_pair(grid, 1.0, 1.0)


@pytest.fixture(scope="session")
def line_pair(small_grid):
    return make_pair("line", small_grid, cfg=SolverConfig(method="direct"))
