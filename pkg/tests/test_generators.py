# tests/test_generators.py
import math

import numpy as np
import pytest

from errors import DomainError, SolverStallError
from generators import (
    InterfaceCurveSpec,
    SolverConfig,
    TruncatedLinearPairSpec,
    densify,
    koch_corners,
    koch_points,
    make_pair,
    make_spiral_pair,
    make_truncated_linear_pair,
    modified_koch_points,
    rasterize_interface,
    solve_two_sided_harmonic,
)


def test_from_angle_snaps_axis_normals():
    spec = TruncatedLinearPairSpec.from_angle(1.0, 2.0, math.pi / 2)
    assert spec.nu == (0.0, 1.0)
    u, v = spec.evaluate([[0.0, 0.5], [0.0, -0.25]])
    assert np.allclose(u, [0.5, 0.0])
    assert np.allclose(v, [0.0, 0.5])


@pytest.mark.parametrize("kwargs", [
    {"a": 1.0, "b": 1.0, "nu": (1.0, 1.0)},
    {"a": 0.0, "b": 1.0, "nu": (0.0, 1.0)},
    {"a": 1.0, "b": 1.0, "nu": (0.0, 1.0), "center": (0.0, 0.0, 0.0)},
])
def test_invalid_linear_spec(kwargs):
    with pytest.raises(ValueError):
        TruncatedLinearPairSpec(**kwargs)


def test_linear_pair_center_outside_grid(small_grid):
    spec = TruncatedLinearPairSpec(1.0, 1.0, (0.0, 1.0), (3.0, 0.0))
    with pytest.raises(DomainError):
        make_truncated_linear_pair(spec, small_grid)


def test_rotated_linear_pair_is_admissible(small_grid):
    pair = make_pair("linear", small_grid, a=1.5, b=0.5, theta_deg=30.0)
    assert pair.report.passed
    assert pair.meta["kind"] == "linear"
    assert pair.meta["nu"] == pytest.approx([math.cos(math.pi / 6), math.sin(math.pi / 6)])


def test_koch_polyline_counts_and_endpoints():
    for depth in range(4):
        pts = koch_points((0.0, 0.0), (1.0, 0.0), depth)
        assert len(pts) == 4 ** depth + 1
        assert np.allclose(pts[0], [0.0, 0.0]) and np.allclose(pts[-1], [1.0, 0.0])
    peak = koch_points((0.0, 0.0), (1.0, 0.0), 1)[2]
    assert peak == pytest.approx([0.5, math.sqrt(3) / 6])


def test_modified_koch_single_stage_matches_koch():
    assert np.allclose(modified_koch_points((0, 0), (1, 0), (1,)), koch_points((0, 0), (1, 0), 1))
    staged = modified_koch_points((0, 0), (1, 0), (1, 1))
    assert np.allclose(staged[0], [0, 0]) and np.allclose(staged[-1], [1, 0])
    assert len(staged) == 8


def test_densify_bounds_spacing():
    poly = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.3]])
    dense = densify(poly, 0.07)
    steps = np.linalg.norm(np.diff(dense, axis=0), axis=1)
    assert steps.max() <= 0.07 + 1e-12
    assert np.allclose(dense[0], poly[0]) and np.allclose(dense[-1], poly[-1])


def test_koch_corners_lie_on_prefix():
    spec = InterfaceCurveSpec(kind="koch", depth=3)
    corners = koch_corners(spec, 1.0)
    assert len(corners) == 9
    assert np.allclose(corners[4], [0.0, 0.0])
    assert np.allclose(corners[0], [-0.9, 0.0])


def test_spiral_angle_profile():
    spec = InterfaceCurveSpec(kind="spiral", rate=2.0)
    rho = math.exp(-math.e)
    assert spec.spiral_angle(rho) == pytest.approx(2.0)
    assert spec.spiral_angle(0.5) == 0.0


@pytest.mark.parametrize("kwargs", [
    {"kind": "parabola"},
    {"kind": "wedge", "profile": "cubic"},
    {"kind": "wedge", "slope": -1.0},
    {"kind": "koch", "extent": 1.0},
])
def test_invalid_curve_spec(kwargs):
    with pytest.raises(ValueError):
        InterfaceCurveSpec(**kwargs)


def test_line_partition_labels(small_grid):
    part = rasterize_interface(InterfaceCurveSpec(kind="line"), small_grid)
    x1, x2 = small_grid.mesh()
    assert part.gamma_count(0.5) == 31
    assert np.all(part.labels[x2 > 1e-12] == 1)
    assert np.all(part.labels[x2 < -1e-12] == -1)
    assert part.pockets == 0


def test_line_pair_is_symmetric_and_admissible(line_pair):
    u, v = line_pair.u.values, line_pair.v.values
    assert line_pair.report.passed
    assert np.allclose(u, v[:, ::-1], atol=1e-9)
    x1, x2 = line_pair.grid.mesh()
    inside = line_pair.domain_mask()
    assert np.all(u[inside & (x2 > 1e-12)] > 0)
    assert np.all(u[x2 <= 0] == 0)


def test_sor_matches_direct(small_grid, line_pair):
    sor = make_pair("line", small_grid, cfg=SolverConfig(method="sor", residual_tol=1e-11))
    assert np.allclose(sor.u.values, line_pair.u.values, atol=1e-6)
    assert sor.meta["solver_method"] == "sor"


def test_solver_stall_reports_residual(small_grid):
    part = rasterize_interface(InterfaceCurveSpec(kind="line"), small_grid)
    with pytest.raises(SolverStallError) as info:
        solve_two_sided_harmonic(part, 1.0, SolverConfig(max_sweeps=2, check_every=1))
    assert info.value.sweeps == 2
    assert info.value.residual > 0


def test_wedge_pair_lies_above_profile(small_grid):
    pair = make_pair("wedge", small_grid, cfg=SolverConfig(method="direct"), slope=0.3)
    x1, x2 = small_grid.mesh()
    assert pair.report.passed
    assert np.all(pair.u.values[x2 < 0.3 * np.abs(x1) - small_grid.spacing] == 0)
    assert pair.meta["slope"] == 0.3


def test_spiral_pair_via_make_pair(small_grid):
    direct = SolverConfig(method="direct")
    pair = make_spiral_pair(1.0, small_grid, cfg=direct, boundary_data=2.0)
    same = make_pair("spiral", small_grid, cfg=direct, rate=1.0, boundary_data=2.0, depth=3)
    assert np.array_equal(pair.u.values, same.u.values)
    assert np.array_equal(pair.v.values, same.v.values)
    assert pair.meta["boundary_data"] == 2.0
    assert pair.u.max == pytest.approx(2.0)


def test_unknown_kind_and_bad_solver():
    with pytest.raises(ValueError):
        SolverConfig(method="multigrid")
    with pytest.raises(ValueError):
        make_pair("parabola", None)
