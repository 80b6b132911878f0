# tests/test_stability_fit.py
import math

import numpy as np
import pytest

from errors import DegenerateFitError, NoQualifyingCentersError, UnderResolvedScaleError
from fields import Grid, GridField, validate_pair
from generators import TruncatedLinearPairSpec, make_truncated_linear_pair
from stability_fit import (
    TruncatedLinearFit,
    fit_truncated_pair,
    hyperplane_distance_check,
    equivalent_slope,
    nondegeneracy_probe,
    stability_ratio,
)
from conftest import linear_pair

ORIGIN = np.zeros(2)


def _fit(center, a=1.0, b=1.0, nu=(0.0, 1.0), R=1.0):
    return TruncatedLinearFit(a=a, b=b, nu=nu, center=center, rho=0.0, R=R, residual=0.0, u_norm=1.0, v_norm=1.0)


def test_exact_pair_is_recovered(exact_pair):
    fit = fit_truncated_pair(exact_pair, ORIGIN, 0.25, 1.0)
    assert fit.a == pytest.approx(2.0, rel=1e-6)
    assert fit.b == pytest.approx(3.0, rel=1e-6)
    assert fit.angle == pytest.approx(math.pi / 2, abs=1e-5)
    assert fit.product == pytest.approx(6.0, rel=1e-6)
    assert fit.relative_residual <= 1e-8
    assert fit.to_dict()["rho"] == 0.25


def test_rotated_pair_angle(grid):
    theta = math.pi / 2 + math.pi / 6
    pair = linear_pair(grid, 2.0, 3.0, theta)
    fit = fit_truncated_pair(pair, ORIGIN, 0.0, 1.0)
    assert fit.angle == pytest.approx(theta, abs=1e-3)
    assert fit.a == pytest.approx(2.0, rel=1e-3)
    assert fit.b == pytest.approx(3.0, rel=1e-3)


def test_seeded_search(exact_pair):
    fit = fit_truncated_pair(exact_pair, ORIGIN, 0.0, 0.5, seed_angle=math.pi / 2 + 0.3)
    assert fit.angle == pytest.approx(math.pi / 2, abs=1e-5)


def test_three_dimensional_fit():
    grid = Grid(3, (-1.0, -1.0, -1.0), 1.0 / 16, (33, 33, 33))
    pair = make_truncated_linear_pair(TruncatedLinearPairSpec(1.0, 2.0, (0.0, 0.0, 1.0)), grid)
    fit = fit_truncated_pair(pair, np.zeros(3), 0.0, 0.5)
    assert fit.angle is None
    assert fit.nu[2] == pytest.approx(1.0, abs=1e-9)
    assert fit.a == pytest.approx(1.0, rel=1e-6)
    assert fit.b == pytest.approx(2.0, rel=1e-6)


def test_zero_pair_is_degenerate(small_grid):
    zero = GridField.zeros(small_grid)
    pair = validate_pair(zero, zero)
    with pytest.raises(DegenerateFitError):
        fit_truncated_pair(pair, ORIGIN, 0.0, 0.5)


def test_annulus_limits(exact_pair):
    with pytest.raises(UnderResolvedScaleError):
        fit_truncated_pair(exact_pair, ORIGIN, 0.5, 0.7)
    with pytest.raises(UnderResolvedScaleError):
        fit_truncated_pair(exact_pair, ORIGIN, 0.0, 0.1)
    with pytest.raises(ValueError):
        fit_truncated_pair(exact_pair, ORIGIN, 0.5, 0.5)


def test_stability_ratio_of_exact_pair(exact_pair):
    report = stability_ratio(exact_pair, ORIGIN, 0.25, 1.0)
    assert report.log_drop <= 1e-9
    assert report.ratio <= 1e-6
    assert report.normalized_error is not None and report.normalized_error <= 1e-10
    out = report.to_dict()
    assert {"a", "b", "log_drop", "ratio", "normalized_ratio"} <= set(out)


def test_hyperplane_distance():
    report = hyperplane_distance_check(_fit((0.0, 0.0)), _fit((0.3, 0.1)), c=0.5, eta=0.1)
    assert report.distance == pytest.approx(0.1)
    assert report.l2_gap > 0
    assert report.ratio == pytest.approx(0.1 / math.sqrt(report.l2_gap))
    same = hyperplane_distance_check(_fit((0.0, 0.0)), _fit((0.0, 0.0)), c=0.5)
    assert same.l2_gap == 0.0 and same.ratio == 0.0


def test_hyperplane_requires_slope():
    with pytest.raises(DegenerateFitError):
        hyperplane_distance_check(_fit((0.0, 0.0)), _fit((0.3, 0.1)), c=5.0)
    with pytest.raises(DegenerateFitError):
        hyperplane_distance_check(_fit((0.0, 0.0)), _fit((0.3, 0.1), a=0.0, b=0.0), c=0.5)


def test_nondegeneracy_probe(exact_pair):
    report = nondegeneracy_probe(exact_pair, [ORIGIN, (1.5, 0.0)], kappa=0.1, R=1.0, floor=1.0, normalize=False)
    assert len(report.included) == 1
    assert report.min_slope_sum == pytest.approx(5.0, rel=1e-6)
    assert report.passed
    assert report.excluded[0]["reason"] == "outside-domain"


def test_equivalent_slope_of_symmetric_pair():
    # a|x₂| 在单位圆盘上的 L² 范数为 a·sqrt(π/4)
    assert equivalent_slope(3.0 * math.sqrt(math.pi / 4), 1.0, 2) == pytest.approx(3.0)
    assert equivalent_slope(2.0 * math.sqrt(math.pi / 4) * 0.25, 0.5, 2) == pytest.approx(2.0)


def test_nondegeneracy_default_floor(grid, exact_pair):
    raw = nondegeneracy_probe(exact_pair, [ORIGIN], kappa=0.1, R=1.0, normalize=False)
    # u + v = 2x₂⁺ + 3x₂⁻ 的等效斜率为 sqrt(13/2)
    assert raw.floor == pytest.approx(0.1 * math.sqrt(6.5), rel=0.03)
    assert raw.passed
    doubled = nondegeneracy_probe(linear_pair(grid, 4.0, 6.0), [ORIGIN], kappa=0.1, R=1.0, normalize=False)
    assert doubled.floor == pytest.approx(2 * raw.floor, rel=1e-9)
    normalized = nondegeneracy_probe(exact_pair, [ORIGIN], kappa=0.1, R=1.0)
    assert normalized.floor == pytest.approx(raw.floor / normalized.scale, rel=1e-9)
    assert normalized.passed
    strict = nondegeneracy_probe(exact_pair, [ORIGIN], kappa=0.1, R=1.0, floor=10.0, normalize=False)
    assert not strict.passed


def test_nondegeneracy_without_qualifying_centers(exact_pair):
    with pytest.raises(NoQualifyingCentersError) as info:
        nondegeneracy_probe(exact_pair, [ORIGIN], kappa=-1.0, R=1.0, normalize=False)
    assert info.value.report.excluded[0]["reason"] == "kappa-gate"
