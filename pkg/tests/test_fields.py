# tests/test_fields.py
import math

import numpy as np
import pytest

from errors import AcfLabError, DomainError, IncompatibleGridError, OutOfStencilError, UnderResolvedScaleError
from fields import (
    Grid,
    GridField,
    ValidationTolerances,
    ball_integral,
    discrete_gradient,
    discrete_laplacian,
    gradient_energy_density,
    laplacian_field,
    validate_pair,
)


def test_centered_grid_geometry(grid):
    assert grid.spacing == pytest.approx(1 / 32)
    assert grid.resolution_floor == pytest.approx(1 / 8)
    assert np.allclose(grid.center, 0.0)
    assert grid.inscribed_radius == pytest.approx(2.0)
    assert grid.nearest_node((0.0, 0.0)) == (64, 64)


@pytest.mark.parametrize("kwargs", [
    {"dim": 1, "origin": (0.0,), "spacing": 0.1, "counts": (5,)},
    {"dim": 2, "origin": (0.0, 0.0), "spacing": 0.0, "counts": (5, 5)},
    {"dim": 2, "origin": (0.0, 0.0), "spacing": 0.1, "counts": (2, 5)},
])
def test_invalid_grid_rejected(kwargs):
    with pytest.raises(ValueError):
        Grid(**kwargs)


def test_field_is_read_only_and_finite(small_grid):
    f = GridField.zeros(small_grid)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0
    bad = np.zeros(small_grid.counts)
    bad[3, 3] = np.nan
    with pytest.raises(ValueError):
        GridField(small_grid, bad)


def test_gradient_and_laplacian_are_exact_for_polynomials(small_grid):
    lin = GridField.from_function(small_grid, lambda x, y: 2 * x - 3 * y + 1)
    quad = GridField.from_function(small_grid, lambda x, y: x * x + y * y)
    assert np.allclose(discrete_gradient(lin, (10, 20)), [2.0, -3.0])
    assert discrete_laplacian(quad, (30, 31)) == pytest.approx(4.0)
    lap = laplacian_field(quad)
    assert np.isnan(lap[0, 5]) and np.isnan(lap[-1, -1])
    assert np.allclose(lap[1:-1, 1:-1], 4.0)


def test_stencil_at_boundary_raises(small_grid):
    f = GridField.zeros(small_grid)
    with pytest.raises(OutOfStencilError):
        discrete_gradient(f, (0, 10))
    with pytest.raises(IndexError):
        discrete_laplacian(f, (10, 64))


def test_energy_density_of_affine_function(small_grid):
    f = GridField.from_function(small_grid, lambda x, y: 2 * x + 3 * y)
    dens = gradient_energy_density(f)
    assert dens.shape == (64, 64)
    assert np.allclose(dens, 13.0)


def test_exact_weighting_integrates_disc_area(grid):
    for r in (0.125, 0.3, 1.0):
        area = ball_integral(grid, 1.0, (0.01, -0.02), r, weighting="exact")
        assert area == pytest.approx(math.pi * r * r, rel=1e-10)


def test_center_and_supersample_weighting_are_close(grid):
    r = 1.0
    for weighting in ("center", "supersample"):
        area = ball_integral(grid, 1.0, (0.0, 0.0), r, weighting=weighting)
        assert area == pytest.approx(math.pi, rel=0.02)


def test_ball_integral_scale_checks(grid):
    with pytest.raises(UnderResolvedScaleError):
        ball_integral(grid, 1.0, (0.0, 0.0), 0.1)
    with pytest.raises(DomainError):
        ball_integral(grid, 1.0, (1.5, 0.0), 1.0)
    with pytest.raises(ValueError):
        ball_integral(grid, 1.0, (0.0, 0.0), 1.0, weighting="nearest")


def test_exact_pair_is_admissible(exact_pair):
    assert exact_pair.report.passed
    assert exact_pair.report.max_product == 0.0
    assert exact_pair.report.worst_superharmonic_defect <= 1e-12


def test_validation_flags_violations(small_grid):
    u = GridField.from_function(small_grid, lambda x, y: np.maximum(y, 0.0))
    overlap = GridField.from_function(small_grid, lambda x, y: np.maximum(y + 0.5, 0.0))
    assert not validate_pair(u, overlap).report.passed

    negative = GridField.from_function(small_grid, lambda x, y: y)
    assert validate_pair(negative, GridField.zeros(small_grid)).report.max_negative_value > 0
    assert not validate_pair(negative, GridField.zeros(small_grid)).report.passed

    concave = GridField.from_function(small_grid, lambda x, y: 2.0 - x * x - y * y)
    assert not validate_pair(concave, GridField.zeros(small_grid)).report.passed
    loose = ValidationTolerances(subharmonic=1.0)
    assert validate_pair(concave, GridField.zeros(small_grid), loose).report.passed


def test_pairs_on_different_grids_rejected(grid, small_grid):
    with pytest.raises(IncompatibleGridError):
        validate_pair(GridField.zeros(grid), GridField.zeros(small_grid))


def test_available_radius_and_ball_check(exact_pair):
    D = exact_pair.domain_radius
    assert exact_pair.available_radius((0.0, 0.0)) == pytest.approx(D)
    assert exact_pair.available_radius((1.0, 0.0)) == pytest.approx(D - 1.0)
    exact_pair.check_ball((0.0, 0.0), 1.0)
    with pytest.raises(DomainError):
        exact_pair.check_ball((1.0, 0.0), 1.0)


def test_swapped_exchanges_fields(exact_pair):
    swapped = exact_pair.swapped()
    assert swapped.u is exact_pair.v and swapped.v is exact_pair.u
    assert swapped.domain_radius == exact_pair.domain_radius


def test_errors_share_a_base_class():
    with pytest.raises(AcfLabError):
        raise DomainError("outside")
