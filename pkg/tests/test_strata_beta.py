# tests/test_strata_beta.py
import math
from types import SimpleNamespace

import numpy as np
import pytest

from strata_beta import (
    InterfaceCloud,
    beta_number,
    beta_table,
    build_strata_table,
    extract_interface,
    l2_subspace_inequality_probe,
    packing_measure,
    random_plane_oracle,
    read_cloud_csv,
    square_function_sum,
    write_cloud_csv,
)

ORIGIN = np.zeros(2)


@pytest.fixture(scope="module")
def exact_cloud(exact_pair):
    return extract_interface(exact_pair)


def test_exact_cloud_lies_on_the_line(exact_pair, exact_cloud):
    h = exact_pair.grid.spacing
    assert exact_cloud.provenance == "linear"
    assert np.all(exact_cloud.points[:, 1] == 0.0)
    # 零节点行上合并后的点，每个节点只计一次
    assert len(np.unique(exact_cloud.points[:, 0])) == len(exact_cloud)
    assert abs(exact_cloud.mass - 2 * exact_pair.domain_radius) <= 2 * h


def test_cloud_validation():
    with pytest.raises(ValueError):
        InterfaceCloud(np.zeros((2, 2)), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        InterfaceCloud(np.zeros((2, 2)), np.ones(3))
    with pytest.raises(ValueError):
        InterfaceCloud(np.zeros(4), np.ones(4))


def test_ball_indices_are_sorted():
    cloud = InterfaceCloud(np.array([[0.5, 0.0], [0.0, 0.0], [3.0, 0.0], [-0.5, 0.0]]), np.ones(4))
    assert cloud.ball(ORIGIN, 1.0).tolist() == [0, 1, 3]
    assert cloud.ball_mass(ORIGIN, 1.0) == 3.0
    empty = InterfaceCloud(np.zeros((0, 2)), np.zeros(0))
    assert len(empty.ball(ORIGIN, 1.0)) == 0


def test_two_masses_have_zero_beta():
    cloud = InterfaceCloud(np.array([[-0.3, 0.2], [0.4, -0.1]]), np.array([1.0, 2.0]))
    assert beta_number(cloud, ORIGIN, 1.0).beta2 == pytest.approx(0.0, abs=1e-14)
    assert beta_number(cloud, (5.0, 5.0), 1.0).normal is None


def test_four_masses_closed_form():
    d, r = 0.5, 2.0
    cloud = InterfaceCloud(np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -d], [0.0, d]]), np.ones(4))
    result = beta_number(cloud, ORIGIN, r)
    assert result.beta2 == pytest.approx(2 * d * d / r ** 3)
    assert result.normal == pytest.approx((0.0, 1.0))
    assert result.offset == pytest.approx(0.0, abs=1e-14)
    assert result.mass == 4.0
    with pytest.raises(ValueError):
        beta_number(cloud, ORIGIN, 0.0)


def test_random_planes_never_beat_the_closed_form():
    rng = np.random.default_rng(7)
    pts = np.column_stack([rng.uniform(-1, 1, 60), 0.2 * rng.normal(size=60)])
    cloud = InterfaceCloud(pts, rng.uniform(0.5, 1.5, 60))
    closed = beta_number(cloud, ORIGIN, 1.0)
    oracle = random_plane_oracle(cloud, ORIGIN, 1.0, trials=3000, seed=1)
    assert oracle.beta2 >= closed.beta2 - 1e-12
    assert oracle.mass == pytest.approx(closed.mass)


def test_beta_table_on_exact_cloud(exact_cloud):
    table = beta_table(exact_cloud, [(0.0, 0.0), (0.5, 0.0)], [0.5, 0.25])
    assert table.beta2.shape == (2, 2)
    assert np.all(table.beta2 <= 1e-20)
    frame = table.to_frame()
    assert len(frame) == 4
    assert list(frame.columns) == ["x1", "x2", "r", "beta2", "n1", "n2", "offset"]


def test_square_function_sum_of_collinear_cloud(exact_cloud):
    report = square_function_sum(exact_cloud, ORIGIN, 0.25, [1.0, 0.5, 0.25, 0.125])
    assert [r for r, _ in report.terms] == [0.5, 0.25, 0.125]
    assert report.total <= 1e-20
    assert report.ratio <= 1e-6


def test_l2_probe_on_exact_pair(exact_pair, exact_cloud):
    report = l2_subspace_inequality_probe(exact_pair, exact_cloud, ORIGIN, 0.125, kappa=1.0)
    assert not report.gated_out
    assert report.left <= 1e-20
    assert report.ratio <= 1e-6
    gated = l2_subspace_inequality_probe(exact_pair, exact_cloud, ORIGIN, 0.125, kappa=0.0)
    assert gated.gated_out and gated.ratio is None
    assert gated.to_dict()["left"] is None


def test_strata_selection(exact_pair, exact_cloud):
    table = build_strata_table(exact_cloud, exact_pair, [0.25, 0.125], region=(ORIGIN, 0.5))
    assert table.excluded == 0
    assert table.values.shape == (len(table.cloud), 2)
    assert np.allclose(table.values, 9 * math.pi ** 2, rtol=1e-9)
    assert table.select(1.0, 0.25).fraction == 1.0
    none = table.select(1e6, 0.25)
    assert none.fraction == 0.0 and len(none.measure()) == 0
    assert "J@0.125" in table.to_frame().columns


def test_strata_table_excludes_points_near_the_rim(exact_pair, exact_cloud):
    table = build_strata_table(exact_cloud, exact_pair, [0.25])
    assert table.excluded > 0
    assert np.all(np.abs(table.cloud.points[:, 0]) <= exact_pair.domain_radius - 0.25 + 1e-9)


def test_packing_measure():
    cover = SimpleNamespace(centers=[[0.0, 0.0], [1.0, 0.0]], radii=[0.5, 0.25])
    measure = packing_measure(cover)
    assert measure.weights.tolist() == [0.5, 0.25]
    assert measure.provenance == "packing"


def test_cloud_csv_roundtrip(tmp_path, exact_cloud):
    path = tmp_path / "cloud.csv"
    write_cloud_csv(path, exact_cloud)
    loaded = read_cloud_csv(path)
    np.testing.assert_array_equal(loaded.points, exact_cloud.points)
    np.testing.assert_array_equal(loaded.weights, exact_cloud.weights)
