# tests/test_acf_lab.py
import importlib
import json

import numpy as np
import pandas as pd
import pytest


@pytest.fixture
def cli(tmp_path, monkeypatch):
    monkeypatch.setenv("ACF_LAB_LOG_FILE", str(tmp_path / "acf_lab.log"))
    monkeypatch.setenv("ACF_LAB_STORAGE", str(tmp_path / "storage"))
    return importlib.import_module("acf_lab")


def test_help_and_unknown_command(cli, capsys):
    assert cli.main([]) == 0
    assert cli.main(["frobnicate"]) == 2
    out = capsys.readouterr().out
    assert "未知命令: frobnicate" in out
    assert "acf_lab.py run" in out


def test_list(cli, capsys):
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    assert "exact-pair-sanity" in out and "modkoch-strata" in out


def test_params_parsing(cli):
    assert cli._params(["a=2", "theta_deg=30.5", "budget=2,2,1", "profile=abs"]) == {
        "a": 2, "theta_deg": 30.5, "budget": [2, 2, 1], "profile": "abs",
    }


def test_generate_then_profile(cli, tmp_path, capsys):
    out = tmp_path / "exact.acf"
    argv = ["generate", "linear", "--half-width", "1", "--nodes", "65", "--out", str(out),
            "--param", "a=2", "--param", "b=3"]
    assert cli.main(argv) == 0
    assert out.exists()
    csv = tmp_path / "profile.csv"
    assert cli.main(["acf", str(out), "--r-max", "0.5", "--out", str(csv)]) == 0
    assert "converged" in capsys.readouterr().out
    assert csv.read_text(encoding="utf-8").startswith("r,J,factor_u,factor_v")


def test_domain_errors_exit_nonzero(cli, tmp_path):
    out = tmp_path / "exact.acf"
    cli.main(["generate", "linear", "--half-width", "1", "--nodes", "65", "--out", str(out)])
    assert cli.main(["acf", str(out), "--r-max", "2.0"]) == 1


@pytest.fixture
def exact_file(cli, tmp_path):
    # h = 1/32，4h = 1/8
    out = tmp_path / "exact.acf"
    assert cli.main(["generate", "linear", "--half-width", "1", "--nodes", "65", "--out", str(out),
                     "--param", "a=2", "--param", "b=3"]) == 0
    return out


def test_profile_csv_has_geometry_columns(cli, exact_file, tmp_path):
    csv = tmp_path / "profile.csv"
    assert cli.main(["acf", str(exact_file), "--r-max", "0.5", "--out", str(csv)]) == 0
    frame = pd.read_csv(csv)
    assert list(frame.columns[-2:]) == ["epsilon", "lambda2"]
    assert frame["r"].tolist() == [0.5, 0.25, 0.125]
    assert (frame["epsilon"] <= 0.05).all()
    assert (frame["lambda2"] <= 0.05).all()


def test_fit_json(cli, exact_file, tmp_path):
    out = tmp_path / "fit.json"
    assert cli.main(["fit", str(exact_file), "--rho", "0.125", "--R", "0.5", "--out", str(out)]) == 0
    data = json.loads(out.read_text(encoding="utf-8"))
    assert data["a"] == pytest.approx(2.0, rel=1e-6)
    assert data["b"] == pytest.approx(3.0, rel=1e-6)
    assert {"nu", "residual", "log_drop", "ratio"} <= set(data)


def test_beta_from_cloud_csv(cli, exact_file, tmp_path):
    cloud, first, second = tmp_path / "cloud.csv", tmp_path / "beta1.csv", tmp_path / "beta2.csv"
    assert cli.main(["beta", str(exact_file), "--r", "0.5", "0.25",
                     "--cloud-out", str(cloud), "--out", str(first)]) == 0
    assert pd.read_csv(cloud).columns.tolist() == ["x1", "x2", "weight"]
    assert cli.main(["beta", str(exact_file), "--cloud", str(cloud), "--r", "0.5", "0.25", "--out", str(second)]) == 0
    pd.testing.assert_frame_equal(pd.read_csv(first), pd.read_csv(second))


def test_cloud_dimension_mismatch(cli, exact_file, tmp_path):
    cloud = tmp_path / "cloud3.csv"
    pd.DataFrame({"x1": [0.0], "x2": [0.0], "x3": [0.0], "weight": [1.0]}).to_csv(cloud, index=False)
    assert cli.main(["beta", str(exact_file), "--cloud", str(cloud)]) == 1


def test_cover_rejects_unresolved_defaults(cli, tmp_path):
    pair = tmp_path / "wide.acf"
    assert cli.main(["generate", "linear", "--half-width", "2", "--nodes", "129", "--out", str(pair),
                     "--param", "a=2", "--param", "b=3"]) == 0
    # 缺省 ρ̄R = R/100 < 4h
    assert cli.main(["cover", str(pair), "--R", "0.25"]) == 1
    out = tmp_path / "cover.json"
    argv = ["cover", str(pair), "--R", "0.25", "--eta-bar", "0.5", "--rho-bar", "0.5", "--eta", "0.5",
            "--out", str(out)]
    assert cli.main(argv) == 0
    assert json.loads(out.read_text(encoding="utf-8"))["terminated"] is True


def test_blowup_prints_densities(cli, exact_file, tmp_path, capsys):
    out = tmp_path / "traj.csv"
    assert cli.main(["blowup", str(exact_file), "--r-max", "0.5", "--depth", "2", "--out", str(out)]) == 0
    assert "ζ_u" in capsys.readouterr().out
    frame = pd.read_csv(out)
    assert {"zeta_u", "zeta_v"} <= set(frame.columns)
    assert np.allclose(frame["zeta_u"], 2.0, rtol=0.02)
    assert np.allclose(frame["zeta_v"], 3.0, rtol=0.02)
