# tests/test_acf_functional.py
import math

import numpy as np
import pytest

from acf_functional import (
    _longest_circular_run,
    acf_factors,
    acf_value,
    acf_value_resolved,
    arc_lengths,
    carleson_epsilon,
    characteristic_constants,
    dini_sum,
    estimate_j0plus,
    log_drop,
    radial_profile,
    spectral_lambda2,
    spectral_lower_bound_check,
    square_function_trace,
    usc_probe,
)
from errors import DomainError, UnderResolvedScaleError, UnsupportedDimensionError
from fields import Grid
from generators import TruncatedLinearPairSpec, make_truncated_linear_pair
from utils import acf_constant
from conftest import linear_pair

ORIGIN = np.zeros(2)


def test_log_drop_conventions():
    assert log_drop(math.e, 1.0) == pytest.approx(1.0)
    assert log_drop(0.0, 0.0) == 0.0
    assert log_drop(1.0, 0.0) == math.inf
    assert log_drop(1.0, 2.0) == 0.0


def test_exact_pair_value(exact_pair):
    target = acf_constant(2) * (2.0 * 3.0) ** 2
    assert target == pytest.approx(9 * math.pi ** 2)
    for r in (0.125, 0.25, 0.5, 1.0):
        assert acf_value(exact_pair, ORIGIN, r) == pytest.approx(target, rel=1e-10)
    fu, fv = acf_factors(exact_pair, ORIGIN, 1.0)
    assert fu == pytest.approx(2 * math.pi, rel=1e-10)
    assert fv == pytest.approx(4.5 * math.pi, rel=1e-10)


def test_swap_and_gauge_invariance(exact_pair):
    from fields import validate_pair

    j = acf_value(exact_pair, ORIGIN, 0.5)
    assert acf_value(exact_pair.swapped(), ORIGIN, 0.5) == pytest.approx(j, rel=1e-12)
    gauged = validate_pair(exact_pair.u.scaled(2.5), exact_pair.v.scaled(0.4), domain_radius=exact_pair.domain_radius)
    assert acf_value(gauged, ORIGIN, 0.5) == pytest.approx(j, rel=1e-12)


def test_scale_and_domain_errors(exact_pair):
    with pytest.raises(UnderResolvedScaleError):
        acf_value(exact_pair, ORIGIN, 0.1)
    with pytest.raises(DomainError):
        acf_value(exact_pair, (1.5, 0.0), 1.0)
    assert acf_value_resolved(exact_pair, ORIGIN, 0.01) == pytest.approx(acf_value(exact_pair, ORIGIN, 0.125))


def test_profile_of_exact_pair_is_flat(exact_pair):
    profile = radial_profile(exact_pair, ORIGIN, 1.0)
    assert profile.radii[-1] == pytest.approx(0.125)
    assert len(profile.radii) == 4
    assert profile.max_relative_defect <= 1e-9
    est = estimate_j0plus(profile)
    assert est.flag == "converged"
    assert est.value == pytest.approx(9 * math.pi ** 2, rel=1e-10)
    frame = profile.to_frame()
    assert list(frame.columns) == ["r", "J", "factor_u", "factor_v", "monotone_defect", "log_drop"]
    assert dini_sum(profile) <= 1e-5


def test_profile_below_floor_rejected(exact_pair):
    with pytest.raises(UnderResolvedScaleError):
        radial_profile(exact_pair, ORIGIN, 0.1)
    with pytest.raises(UnderResolvedScaleError):
        radial_profile(exact_pair, ORIGIN, 1.0, depth=5)


def test_profile_is_nonincreasing_for_harmonic_line(line_pair):
    profile = radial_profile(line_pair, ORIGIN, 0.5)
    assert np.all(np.isfinite(profile.values)) and np.all(profile.values > 0)
    assert profile.max_relative_defect <= 0.05


def test_j0plus_flags():
    from acf_functional import RadialProfile

    def make(values):
        values = np.asarray(values, dtype=float)
        n = len(values)
        return RadialProfile(ORIGIN, 2.0 ** -np.arange(n), values, np.ones((n, 2)), np.maximum(0, np.diff(values)))

    assert estimate_j0plus(make([4.0, 2.0, 1.0])).flag == "still-decreasing"
    assert estimate_j0plus(make([4.0, 2.0, 2.5])).flag == "noisy"
    assert estimate_j0plus(make([0.0, 0.0, 0.0])).value == 0.0
    with pytest.raises(ValueError):
        estimate_j0plus(make([1.0, 1.0]))


def test_longest_circular_run_wraps():
    assert _longest_circular_run(np.array([1, 0, 1, 1], dtype=bool)) == 3
    assert _longest_circular_run(np.ones(5, dtype=bool)) == 5
    assert _longest_circular_run(np.zeros(5, dtype=bool)) == 0


def test_half_plane_arcs_are_semicircles(exact_pair):
    ip, im = arc_lengths(exact_pair, ORIGIN, 1.0, samples=1024)
    assert ip == pytest.approx(math.pi)
    assert im == pytest.approx(math.pi)
    assert carleson_epsilon(exact_pair, ORIGIN, 0.5) <= 1e-12
    assert spectral_lambda2(exact_pair, ORIGIN, 0.5) <= 1e-12
    consts = characteristic_constants(exact_pair, ORIGIN, 0.5)
    assert consts.alpha_plus == pytest.approx(1.0)
    assert consts.deficit == pytest.approx(0.0, abs=1e-12)


def test_arc_sampling_limits(exact_pair):
    with pytest.raises(UnderResolvedScaleError):
        arc_lengths(exact_pair, ORIGIN, 1.0, samples=32)
    with pytest.raises(UnderResolvedScaleError):
        arc_lengths(exact_pair, ORIGIN, 0.05)


def test_one_sided_ball_has_infinite_lambda2(exact_pair):
    # 整个圆都在 {u > v} 里
    assert spectral_lambda2(exact_pair, (0.0, 0.5), 0.25) == math.inf
    ip, im = arc_lengths(exact_pair, (0.0, 0.5), 0.25)
    assert ip == pytest.approx(2 * math.pi * 0.25) and im == 0.0


def test_three_dimensional_arcs_unsupported():
    grid = Grid.centered(3, 1.0, 17)
    pair = make_truncated_linear_pair(TruncatedLinearPairSpec(1.0, 1.0, (0.0, 0.0, 1.0)), grid)
    with pytest.raises(UnsupportedDimensionError):
        spectral_lambda2(pair, np.zeros(3), 0.5)
    with pytest.raises(UnsupportedDimensionError):
        arc_lengths(pair, np.zeros(3), 0.5)


def test_square_function_traces(exact_pair):
    drops = square_function_trace(exact_pair, ORIGIN, 1.0, 2, kind="log-drop")
    assert len(drops.entries) == 2 and drops.total <= 1e-9
    carleson = square_function_trace(exact_pair, ORIGIN, 1.0, 2, kind="carleson")
    assert len(carleson.entries) == 3 and carleson.total <= 1e-20
    assert list(carleson.to_frame().columns) == ["r", "carleson", "partial_sum"]
    with pytest.raises(ValueError):
        square_function_trace(exact_pair, ORIGIN, 1.0, 2, kind="wiggle")


def test_spectral_lower_bound_frame(exact_pair):
    frame = spectral_lower_bound_check(exact_pair, ORIGIN, 0.5, 2)
    assert list(frame.columns) == ["r", "log_drop", "deficit", "predicted", "ratio"]
    assert len(frame) == 2


def test_usc_probe_on_exact_pair(grid):
    pair = linear_pair(grid, 1.0, 1.0)
    seq = [((0.5 / k, 0.0), 0.5 / k) for k in (1, 2, 3, 4)]
    report = usc_probe(pair, ORIGIN, seq, r_max=1.0)
    assert report.passed
    assert report.limsup == pytest.approx(math.pi ** 2 / 4, rel=1e-9)
    with pytest.raises(ValueError):
        usc_probe(pair, ORIGIN, [], r_max=1.0)
