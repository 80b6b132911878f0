# tests/test_experiments.py
from pathlib import Path

import pytest

from errors import ConfigError
from experiments import (
    CRITERIA,
    DEFAULT_CONFIGS,
    REGISTRY,
    ExperimentConfig,
    registry_list,
    run_experiment,
)
from state import RunState

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL_ORACLE = {
    "experiment": {"id": "beta-oracle"},
    "fit": {"clouds": 4, "max_points": 50, "trials": 2000},
    "seed": 11,
}


def test_registry():
    assert len(registry_list()) == 12
    assert set(REGISTRY) == set(DEFAULT_CONFIGS)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    config = ExperimentConfig.load(path)
    assert config.experiment == path.stem
    assert len(config.hash) == 64


def test_config_errors():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": {"id": "no-such-experiment"}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": {"id": "beta-oracle"}, "extras": {}})
    with pytest.raises(ConfigError):
        # 4h = 1/32 on this grid
        ExperimentConfig.from_dict({"experiment": {"id": "exact-pair-sanity"},
                                    "grid": {"half_width": 4.0, "nodes": 513}, "ladder": {"radii": [0.01]}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": {"id": "koch-nonrect"}, "generator": {"koch": {"kind": "fractal"}}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": {"id": "covering-line-spiral"}, "cover": {"R": []}})


@pytest.mark.parametrize("exp_id, cover", [
    # 4h = 1/64：ρ̄R = 1/128
    ("covering-line-spiral", {"R": [0.125, 0.015625]}),
    ("covering-line-spiral", {"rho_bar": 0.01}),
    ("covering-line-spiral", {"eta": 0.05}),
    # 4h = 1/16：ρ̄r = 0.025
    ("dichotomy", {"rho_bar": 0.05}),
    ("dichotomy", {"eta_schedule": [0.25, 0.125, 0.03125]}),
    ("dichotomy", {"r": 0.125}),
])
def test_cover_scales_below_floor_are_rejected(exp_id, cover):
    with pytest.raises(ConfigError, match="4h"):
        ExperimentConfig.from_dict({"experiment": {"id": exp_id}, "cover": cover})


def test_cover_defaults_resolve_on_their_grids():
    config = ExperimentConfig.from_dict({"experiment": {"id": "covering-line-spiral"}})
    floor = config.make_grid().resolution_floor
    assert floor == pytest.approx(1 / 64)
    assert min(config.cover["R"]) * config.cover["rho_bar"] >= floor
    dich = ExperimentConfig.from_dict({"experiment": {"id": "dichotomy"}})
    assert dich.cover["r"] * min(dich.cover["eta_schedule"]) >= dich.make_grid().resolution_floor


def test_defaults_are_merged():
    config = ExperimentConfig.from_dict(SMALL_ORACLE)
    assert config.fit["two_mass_d"] == [0.1, 0.3]
    assert config.fit["clouds"] == 4
    assert config.seed == 11
    assert DEFAULT_CONFIGS["beta-oracle"]["fit"]["clouds"] == 20


def test_ladder_resolution():
    config = ExperimentConfig.from_dict({"experiment": {"id": "line-blowup"}})
    radii = config.ladder_radii()
    assert radii[0] == 0.25
    assert radii[-1] == pytest.approx(0.0625)


def test_beta_oracle_run(tmp_path):
    config = ExperimentConfig.from_dict(SMALL_ORACLE)
    report = run_experiment(config, {}, RunState("first", tmp_path))
    assert report.complete
    assert report.criteria["C04"]["status"] == "pass"
    assert all(report.criteria[c]["status"] == "not-run" for c in CRITERIA if c != "C04")
    assert report.passed
    for name in ("report.json", "report.md", "report.html", "config.yaml", "tables/oracle.csv", "tables/two_mass.csv"):
        assert (tmp_path / "first" / name).exists()

    run_experiment(config, {}, RunState("second", tmp_path))
    for name in ("oracle.csv", "two_mass.csv"):
        first = (tmp_path / "first" / "tables" / name).read_bytes()
        second = (tmp_path / "second" / "tables" / name).read_bytes()
        assert first == second


def test_failed_run_is_reported_incomplete(tmp_path):
    config = ExperimentConfig.from_dict({
        "experiment": {"id": "exact-pair-sanity"},
        "grid": {"half_width": 1.0, "nodes": 65},
        "ladder": {"radii": [2.0]},
    })
    report = run_experiment(config, {}, RunState("broken", tmp_path))
    assert not report.complete
    assert report.error.startswith("DomainError")
    assert not report.passed
    assert "不完整" in (tmp_path / "broken" / "report.md").read_text(encoding="utf-8")
