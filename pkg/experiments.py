# experiments.py
"""
配置驱动的实验

每个实验由 configs/<id>.yaml 描述（可只写与内置默认值不同的部分），
run_experiment 执行流水线、判定验收标准并写出 CSV/JSON/Markdown。
"""

import copy
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pandas as pd
import yaml

from acf_functional import (
    acf_value,
    arc_lengths,
    carleson_epsilon,
    characteristic_constants,
    estimate_j0plus,
    radial_profile,
    spectral_lambda2,
    spectral_lower_bound_check,
    square_function_trace,
    usc_probe,
)
from blowup import (
    blowup_trajectory,
    density_trajectory,
    energy_convergence_probe,
    laplacian_measure_mass,
    normal_two_valuedness,
    rescale_pair,
    slope_relations,
)
from covering import (
    AcfCache,
    CoverParams,
    condition_three_audit,
    dichotomy_probe,
    dichotomy_with_schedule,
    iterated_cover,
    minkowski_content,
    main_packing_cover,
    packing_hypothesis_audit,
    required_scales,
    stratum_points,
    unresolved_scales,
)
from errors import AcfLabError, ConfigError, DegenerateFitError, NoQualifyingCentersError
from fields import Grid, validate_pair
from generators import (
    CURVE_KINDS,
    InterfaceCurveSpec,
    SolverConfig,
    TruncatedLinearPairSpec,
    default_domain_radius,
    koch_corners,
    make_pair,
)
from stability_fit import fit_truncated_pair, hyperplane_distance_check, nondegeneracy_probe, stability_ratio
from state import RunState
from strata_beta import (
    InterfaceCloud,
    beta_number,
    build_strata_table,
    extract_interface,
    l2_subspace_inequality_probe,
    random_plane_oracle,
    square_function_sum,
)
from utils import acf_constant, config_hash, dyadic_ladder, fmt_run_label, merge_dicts, now_in_tz, to_jsonable

logger = logging.getLogger(__name__)

CONFIG_DIR = Path("configs")
SECTIONS = ("experiment", "grid", "generator", "ladder", "cover", "fit", "output", "seed")

CRITERIA = {
    "C01": "ACF 精确性",
    "C02": "单调性审计",
    "C03": "规范/对称不变性",
    "C04": "β 数暴力核对",
    "C05": "Carleson/谱几何",
    "C06": "稳定性不等式探针",
    "C07": "L² 子空间不等式探针",
    "C08": "覆盖机制",
    "C09": "二择一探针",
    "C10": "放大唯一性与非唯一性",
    "C11": "密度/斜率一致性",
    "C12": "Koch 不可求长信号",
}

GRID = {"dim": 2, "half_width": 4.0, "nodes": 513}
FINE_GRID = {"dim": 2, "half_width": 1.0, "nodes": 1025}

DEFAULT_CONFIGS = {
    "exact-pair-sanity": {
        "grid": GRID,
        "generator": {"exact": {"kind": "linear", "a": 2.0, "b": 3.0, "theta_deg": 90.0}},
        "ladder": {"radii": [1.0, 0.5, 0.25]},
        "fit": {"rho": 0.25, "R": 1.0, "rotation_deg": [0.0, 30.0, 75.0, 120.0, 200.0], "gauge": 2.5},
    },
    "monotonicity-audit": {
        "grid": GRID,
        "generator": {
            "exact": {"kind": "linear", "a": 2.0, "b": 3.0},
            "line": {"kind": "line"},
            "wedge": {"kind": "wedge", "slope": 0.2},
            "spiral": {"kind": "spiral", "rate": 1.0},
            "koch": {"kind": "koch", "depth": 4},
            "modkoch": {"kind": "modkoch", "budget": [2, 2, 2]},
        },
        "ladder": {"r_max": 1.0},
    },
    "beta-oracle": {
        "fit": {"clouds": 20, "max_points": 1000, "trials": 10000, "two_mass_d": [0.1, 0.3]},
        "seed": 20240601,
    },
    "wedge-carleson": {
        "grid": {"dim": 2, "half_width": 4.0, "nodes": 1025},
        "generator": {
            "half_plane": {"kind": "linear", "a": 1.0, "b": 1.0},
            "wedge": {"kind": "wedge", "slope": 0.2},
        },
        "ladder": {"radii": [1.0, 0.5]},
        "fit": {"epsilon_tol": 1e-3, "arc_rel_tol": 0.01},
    },
    "wedge-stability": {
        "grid": GRID,
        "generator": {"wedge": {"kind": "wedge"}},
        "fit": {"slopes": [0.05, 0.1, 0.2, 0.4], "R": 1.0, "rho_fractions": [0.5, 0.25, 0.125], "spread": 10.0,
                "kappa": 1.0, "arm_offset": 0.5, "hyperplane_c": 0.05},
    },
    "l2-subspace": {
        "grid": GRID,
        "generator": {
            "line": {"kind": "line"},
            "wedge": {"kind": "wedge", "slope": 0.2},
            "spiral": {"kind": "spiral", "rate": 1.0},
        },
        "ladder": {"radii": [0.25, 0.125, 0.0625]},
        "fit": {"kappa": 1.0, "centers": [-0.5, -0.25, 0.0, 0.25, 0.5], "spread": 5.0},
    },
    "covering-line-spiral": {
        "grid": {"dim": 2, "half_width": 2.0, "nodes": 1025},
        "generator": {
            "line": {"kind": "line", "boundary_data": 1.5},
            "spiral": {"kind": "spiral", "rate": 1.0, "boundary_data": 1.5},
        },
        "cover": {"epsilon": 1.0, "eta_bar": 0.5, "rho_bar": 0.5, "eta": 0.5, "eta_schedule": [0.5],
                  "R": [0.125, 0.0625, 0.03125]},
    },
    "dichotomy": {
        "grid": GRID,
        "generator": {
            "exact": {"kind": "linear", "a": 1.0, "b": 1.0},
            "koch": {"kind": "koch", "depth": 4, "boundary_data": 3.0},
        },
        "cover": {"epsilon": 0.1, "r": 0.5, "eta_bar": 0.25, "rho_bar": 0.25, "eta": 0.25, "eta_schedule": [0.25, 0.125],
                  "exact_centers": [[-0.5, 0.0], [0.0, 0.0], [0.5, 0.0]], "corner_level": 1, "corner_reach": 2.0},
    },
    "line-blowup": {
        "grid": GRID,
        "generator": {
            "exact": {"kind": "linear", "a": 2.0, "b": 3.0},
            "line": {"kind": "line", "grid": FINE_GRID},
        },
        "ladder": {"r_max": 0.25},
        "fit": {"zeta_tol": 0.05, "slope_tol": 0.05, "rescale_min": 0.0625},
    },
    "spiral-nonunique-blowup": {
        "grid": FINE_GRID,
        "generator": {
            "line": {"kind": "line", "grid": FINE_GRID},
            "spiral": {"kind": "spiral", "rate": 1.0, "grid": FINE_GRID},
        },
        "ladder": {"radii": [0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125]},
        "fit": {"line_max_deg": 2.0, "spiral_min_deg": 30.0, "spiral_last_step_deg": 5.0},
    },
    "koch-nonrect": {
        "grid": GRID,
        "generator": {"koch": {"kind": "koch", "depth": 4, "boundary_data": 3.0}},
        "ladder": {"radii": [0.5, 0.25, 0.125]},
        "cover": {"epsilon": 0.1, "corner_level": 1, "corner_reach": 2.0, "region_radius": 1.0},
    },
    "modkoch-strata": {
        "grid": GRID,
        "generator": {"modkoch": {"kind": "modkoch", "budget": [2, 2, 2], "boundary_data": 3.0}},
        "ladder": {"radii": [0.5, 0.25, 0.125, 0.0625]},
        "cover": {"epsilons": [0.05, 0.1, 0.2], "region_radius": 1.0},
    },
}


# ==================== 配置 ====================

@dataclass
class ExperimentConfig:
    experiment: str
    grid: dict
    generator: dict
    ladder: dict
    cover: dict
    fit: dict
    output: dict
    seed: int
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "ExperimentConfig":
        """
        与内置默认值合并并校验

        Raises:
            ConfigError: 空配置、未知实验、未知小节、尺度低于 4h 或序列为空
        """
        if not data:
            raise ConfigError("实验配置为空")
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"未知的配置小节: {sorted(unknown)}")
        exp = data.get("experiment")
        exp_id = exp.get("id") if isinstance(exp, dict) else exp
        if not exp_id:
            raise ConfigError("配置缺少 experiment.id")
        if exp_id not in REGISTRY:
            raise ConfigError(f"未注册的实验: {exp_id}")
        merged = merge_dicts(copy.deepcopy(DEFAULT_CONFIGS.get(exp_id, {})), {k: v for k, v in data.items() if k != "experiment"})
        cfg = cls(
            experiment=exp_id,
            grid=dict(merged.get("grid") or GRID),
            generator=dict(merged.get("generator") or {}),
            ladder=dict(merged.get("ladder") or {}),
            cover=dict(merged.get("cover") or {}),
            fit=dict(merged.get("fit") or {}),
            output=dict(merged.get("output") or {}),
            seed=int(merged.get("seed", 0)),
            raw=merged,
        )
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(yaml.safe_load(f))

    def to_dict(self) -> dict:
        out = {"experiment": {"id": self.experiment}}
        for key in SECTIONS[1:]:
            out[key] = getattr(self, key)
        return out

    @property
    def hash(self) -> str:
        return config_hash(self.to_dict())

    def make_grid(self, spec: Optional[dict] = None) -> Grid:
        spec = spec or self.grid
        try:
            return Grid.centered(int(spec.get("dim", 2)), float(spec["half_width"]), int(spec["nodes"]))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"网格配置无效: {spec} ({e})") from e

    def ladder_radii(self, floor: Optional[float] = None) -> list:
        if "radii" in self.ladder:
            return [float(r) for r in self.ladder["radii"]]
        r_max = float(self.ladder.get("r_max", 1.0))
        if "depth" in self.ladder:
            return list(dyadic_ladder(r_max, int(self.ladder["depth"])))
        floor = floor if floor is not None else self.make_grid().resolution_floor
        depth = int(math.floor(math.log2(r_max / floor) + 1e-9)) if r_max >= floor else 0
        return list(dyadic_ladder(r_max, depth))

    def validate(self):
        grid = self.make_grid()
        floor = grid.resolution_floor
        if self.ladder:
            radii = self.ladder_radii(floor)
            if not radii:
                raise ConfigError("尺度序列为空")
            if min(radii) < floor * (1 - 1e-9):
                raise ConfigError(f"尺度 {min(radii):.4g} 低于分辨率下限 4h = {floor:.4g}")
        for key in ("eta_schedule", "R", "epsilons"):
            if key in self.cover and not self.cover[key]:
                raise ConfigError(f"cover.{key} 为空")
        for name, spec in self.generator.items():
            if not isinstance(spec, dict) or "kind" not in spec:
                raise ConfigError(f"生成器 {name} 缺少 kind")
            if spec["kind"] not in ("linear",) + CURVE_KINDS:
                raise ConfigError(f"生成器 {name} 的类型未知: {spec['kind']}")
        self._validate_cover_scales(floor)

    def _validate_cover_scales(self, floor: float):
        """覆盖 / 二择一的 R、r 连同 ρ̄R、ηR、η̄R、ρ̄r、ηr 都不得低于 4h"""
        cover = self.cover
        if "epsilon" not in cover or not ("R" in cover or "r" in cover):
            return
        params = CoverParams.from_config({k: v for k, v in cover.items() if k in CoverParams.__dataclass_fields__})
        for spec in self.generator.values():
            if isinstance(spec, dict) and spec.get("grid"):
                floor = max(floor, self.make_grid(spec["grid"]).resolution_floor)
        Rs = [float(R) for R in cover.get("R", [])] or [None]
        r = float(cover["r"]) if "r" in cover else None
        for R in Rs:
            low = unresolved_scales(floor, required_scales(params, R=R, r=r, audit=True))
            if low:
                name, value = min(low.items(), key=lambda kv: kv[1])
                raise ConfigError(
                    f"cover 尺度 {name} = {value:.4g} 低于分辨率下限 4h = {floor:.4g}，加密网格或调大 ρ̄ / η"
                )


def config_path(exp_id: str) -> Path:
    return CONFIG_DIR / f"{exp_id}.yaml"


def config_for(exp_id: str) -> ExperimentConfig:
    """configs/<id>.yaml 存在时读取，否则只用内置默认值"""
    path = config_path(exp_id)
    if path.exists():
        return ExperimentConfig.load(path)
    return ExperimentConfig.from_dict({"experiment": {"id": exp_id}})


# ==================== 报告与上下文 ====================

@dataclass
class ExperimentReport:
    experiment: str
    description: str
    config_hash: str
    seed: int
    criteria: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    complete: bool = True
    error: Optional[str] = None
    wall_clock_s: float = 0.0

    @property
    def executed(self) -> dict:
        return {k: v for k, v in self.criteria.items() if v["status"] != "not-run"}

    @property
    def passed(self) -> bool:
        return self.complete and all(v["status"] == "pass" for v in self.executed.values())

    def finalize(self):
        for cid in CRITERIA:
            self.criteria.setdefault(cid, {"status": "not-run", "detail": {}})

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "description": self.description,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "criteria": {k: self.criteria[k] for k in sorted(self.criteria)},
            "tables": sorted(self.tables),
            "summary": self.summary,
            "complete": self.complete,
            "error": self.error,
            "wall_clock_s": self.wall_clock_s,
        }


class ExperimentContext:
    def __init__(self, config: ExperimentConfig, settings: dict, report: ExperimentReport,
                 state: Optional[RunState] = None):
        self.config = config
        self.settings = settings
        self.report = report
        self.state = state
        self.workers = int(settings.get("workers", 1))
        self._pairs = {}

    @property
    def grid(self) -> Grid:
        return self.config.make_grid()

    def solver(self, overrides: Optional[dict] = None) -> SolverConfig:
        return SolverConfig.from_settings(merge_dicts(self.settings, {"solver": overrides or {}}))

    def generator_spec(self, name: str) -> dict:
        if name not in self.config.generator:
            raise ConfigError(f"配置中没有生成器 {name}")
        return dict(self.config.generator[name])

    def build_pair(self, spec: dict):
        spec = dict(spec)
        kind = spec.pop("kind")
        grid = self.config.make_grid(spec.pop("grid", None))
        solver = self.solver(spec.pop("solver", None))
        logger.info(f"构造容许对: {kind} {spec}")
        return make_pair(kind, grid, cfg=solver, domain_radius=default_domain_radius(grid), **spec)

    def pair(self, name: str):
        if name not in self._pairs:
            self._pairs[name] = self.build_pair(self.generator_spec(name))
        return self._pairs[name]

    def table(self, name: str, frame: pd.DataFrame):
        self.report.tables[name] = frame
        if self.state is not None:
            self.state.save_table(name, frame)

    def criterion(self, cid: str, passed: bool, **detail):
        prev = self.report.criteria.get(cid)
        if prev and prev["status"] == "fail":
            passed = False
        entry = {"status": "pass" if passed else "fail", "detail": to_jsonable({**(prev or {}).get("detail", {}), **detail})}
        self.report.criteria[cid] = entry
        icon = "✅" if passed else "❌"
        logger.info(f"{icon} {cid} {CRITERIA[cid]}: {entry['status']}")

    def note(self, key: str, value):
        self.report.summary[key] = to_jsonable(value)


REGISTRY = {}


def register(exp_id: str, description: str):
    def deco(fn: Callable[[ExperimentContext], None]):
        REGISTRY[exp_id] = (description, fn)
        return fn
    return deco


def registry_list() -> list:
    return [(exp_id, desc) for exp_id, (desc, _) in REGISTRY.items()]


def _spread(values) -> float:
    arr = np.asarray(values, dtype=float)
    if len(arr) == 0 or arr.min() <= 0 or not np.all(np.isfinite(arr)):
        return math.inf
    return float(arr.max() / arr.min())


# ==================== 实验 ====================

@register("exact-pair-sanity", "精确截断线性对: J 等于 c_*a²b²，交换/规范/旋转不变性")
def exact_pair_sanity(ctx: ExperimentContext):
    spec = ctx.generator_spec("exact")
    pair = ctx.pair("exact")
    x = pair.grid.center
    a, b = float(spec.get("a", 1.0)), float(spec.get("b", 1.0))
    target = acf_constant(pair.dim) * (a * b) ** 2
    rows = []
    for r in ctx.config.ladder_radii():
        j = acf_value(pair, x, r)
        rows.append({"r": r, "J": j, "target": target, "rel_err": abs(j - target) / target})
    frame = pd.DataFrame(rows)
    ctx.table("acf_exact", frame)
    ctx.criterion("C01", bool(frame["rel_err"].max() <= 0.02), target=target, max_rel_err=float(frame["rel_err"].max()))

    fit_cfg = ctx.config.fit
    R = float(fit_cfg.get("R", 1.0))
    j = acf_value(pair, x, R)
    swap_err = abs(acf_value(pair.swapped(), x, R) - j) / j
    c = float(fit_cfg.get("gauge", 2.5))
    gauged = validate_pair(pair.u.scaled(c), pair.v.scaled(1 / c), domain_radius=pair.domain_radius)
    gauge_err = abs(acf_value(gauged, x, R) - j) / j

    rows = []
    for deg in fit_cfg.get("rotation_deg", [0.0, 30.0]):
        rotated = make_pair("linear", pair.grid, a=a, b=b, theta_deg=deg, domain_radius=pair.domain_radius)
        fit = fit_truncated_pair(rotated, x, float(fit_cfg.get("rho", 0.25)), R)
        err = (math.degrees(fit.angle) - deg + 180.0) % 360.0 - 180.0
        rows.append({"theta_deg": deg, "fit_deg": math.degrees(fit.angle), "err_deg": abs(err),
                     "a": fit.a, "b": fit.b, "residual": fit.residual})
    rot = pd.DataFrame(rows)
    ctx.table("rotation_fits", rot)
    ok = swap_err <= 1e-12 and gauge_err <= 1e-12 and rot["err_deg"].max() <= 0.5
    ctx.criterion("C03", bool(ok), swap_err=swap_err, gauge_err=gauge_err, max_angle_err_deg=float(rot["err_deg"].max()))


@register("monotonicity-audit", "所有生成器在二进尺度上的单调性缺陷")
def monotonicity_audit(ctx: ExperimentContext):
    tolerances = ctx.settings.get("tolerances", {})
    budget = float(ctx.config.fit.get("monotone_rel", tolerances.get("monotone_rel", 0.05)))
    budget_exact = float(ctx.config.fit.get("monotone_rel_exact", tolerances.get("monotone_rel_exact", 0.005)))
    r_max = float(ctx.config.ladder.get("r_max", 1.0))
    rows = []
    for name, spec in ctx.config.generator.items():
        pair = ctx.pair(name)
        profile = radial_profile(pair, pair.grid.center, r_max, ctx.config.ladder.get("depth"), ctx.workers)
        frame = profile.to_frame()
        ctx.table(f"profile_{name}", frame)
        allowed = budget_exact if spec["kind"] == "linear" else budget
        worst = profile.max_relative_defect
        est = estimate_j0plus(profile)
        rows.append({"generator": name, "max_rel_defect": worst, "budget": allowed, "ok": worst <= allowed,
                     "j0plus": est.value, "trend": est.flag})
    audit = pd.DataFrame(rows)
    ctx.table("monotonicity", audit)
    ctx.criterion("C02", bool(audit["ok"].all()), worst=float(audit["max_rel_defect"].max()))


def _random_cloud(rng: np.random.Generator, max_points: int, k: int) -> InterfaceCloud:
    m = int(rng.integers(20, max_points + 1))
    if k % 2 == 0:
        theta = rng.uniform(0, np.pi)
        t = rng.uniform(-0.9, 0.9, size=m)
        noise = rng.normal(scale=rng.uniform(0.0, 0.2), size=m)
        pts = np.outer(t, [math.cos(theta), math.sin(theta)]) + np.outer(noise, [-math.sin(theta), math.cos(theta)])
    else:
        radius = np.sqrt(rng.uniform(0, 0.8, size=m))
        phi = rng.uniform(0, 2 * np.pi, size=m)
        pts = np.stack([radius * np.cos(phi), radius * np.sin(phi)], axis=1)
    return InterfaceCloud(pts, rng.uniform(0.5, 1.5, size=m), f"random-{k}")


@register("beta-oracle", "β 数闭式解与随机超平面暴力搜索的比较")
def beta_oracle(ctx: ExperimentContext):
    cfg = ctx.config.fit
    seed = ctx.config.seed
    trials = int(cfg.get("trials", 10000))
    logger.info(f"随机点云种子: {seed}")
    rng = np.random.default_rng(seed)
    origin = np.zeros(2)
    rows = []
    for k in range(int(cfg.get("clouds", 20))):
        cloud = _random_cloud(rng, int(cfg.get("max_points", 1000)), k)
        closed = beta_number(cloud, origin, 1.0)
        oracle = random_plane_oracle(cloud, origin, 1.0, trials, seed + k)
        rows.append({"cloud": k, "points": len(cloud), "closed": closed.beta2, "oracle": oracle.beta2,
                     "ok": closed.beta2 <= oracle.beta2 * (1 + 1e-9) + 1e-15})
    frame = pd.DataFrame(rows)
    ctx.table("oracle", frame)

    mass_rows = []
    for d in cfg.get("two_mass_d", [0.1, 0.3]):
        two = InterfaceCloud(np.array([[0.0, d], [0.0, -d]]), np.ones(2), "two-mass")
        four = InterfaceCloud(np.array([[0.0, d], [0.0, -d], [0.5, 0.0], [-0.5, 0.0]]), np.ones(4), "four-mass")
        b2, b4 = beta_number(two, origin, 1.0), beta_number(four, origin, 1.0)
        mass_rows.append({"d": d, "two_mass_beta2": b2.beta2, "augmented_beta2": b4.beta2, "expected": 2 * d * d,
                          "normal_x2": abs(b4.normal[1]),
                          "ok": abs(b4.beta2 - 2 * d * d) <= 1e-6 and abs(b4.normal[1]) >= 1 - 1e-9})
    masses = pd.DataFrame(mass_rows)
    ctx.table("two_mass", masses)
    ctx.criterion("C04", bool(frame["ok"].all() and masses["ok"].all()),
                  clouds=len(frame), seed=seed, max_two_mass_err=float((masses["augmented_beta2"] - masses["expected"]).abs().max()))


@register("wedge-carleson", "半平面与楔形界面的弧长、Carleson ε 与谱 λ²")
def wedge_carleson(ctx: ExperimentContext):
    cfg = ctx.config.fit
    radii = ctx.config.ladder_radii()
    half = ctx.pair("half_plane")
    wedge = ctx.pair("wedge")
    slope = float(ctx.generator_spec("wedge").get("slope", 0.2))
    rows = []
    for r in radii:
        x = half.grid.center
        rows.append({"pair": "half_plane", "r": r, "epsilon": carleson_epsilon(half, x, r),
                     "lambda2": spectral_lambda2(half, x, r), "arc_plus": math.nan, "arc_expected": math.nan})
    for r in radii:
        x = wedge.grid.center
        ip, _ = arc_lengths(wedge, x, r)
        consts = characteristic_constants(wedge, x, r)
        rows.append({"pair": "wedge", "r": r, "epsilon": carleson_epsilon(wedge, x, r),
                     "lambda2": spectral_lambda2(wedge, x, r), "arc_plus": ip,
                     "arc_expected": r * (math.pi - 2 * math.atan(slope)),
                     "deficit": consts.deficit, "quadratic_bound": consts.quadratic_bound})
    frame = pd.DataFrame(rows)
    ctx.table("arcs", frame)
    ctx.table("spectral_lower_bound", spectral_lower_bound_check(wedge, wedge.grid.center, max(radii), 3))

    hp = frame[frame["pair"] == "half_plane"]
    wd = frame[frame["pair"] == "wedge"]
    arc_err = ((wd["arc_plus"] - wd["arc_expected"]).abs() / wd["arc_expected"]).max()
    tol = float(cfg.get("epsilon_tol", 1e-3))
    ok = hp["epsilon"].max() <= tol and hp["lambda2"].max() <= tol and arc_err <= float(cfg.get("arc_rel_tol", 0.01))
    ctx.criterion("C05", bool(ok), half_plane_eps=float(hp["epsilon"].max()),
                  half_plane_lambda2=float(hp["lambda2"].max()), wedge_arc_rel_err=float(arc_err))


@register("wedge-stability", "楔形族上 (归一化拟合误差)/(log-drop) 的经验常数")
def wedge_stability(ctx: ExperimentContext):
    cfg = ctx.config.fit
    base = ctx.generator_spec("wedge")
    R = float(cfg.get("R", 1.0))
    kappa = float(cfg.get("kappa", 1.0))
    offset = float(cfg.get("arm_offset", 0.5))
    rows, planes, nondeg, traces = [], [], [], []
    for s in cfg.get("slopes", [0.05, 0.1, 0.2, 0.4]):
        s = float(s)
        pair = ctx.build_pair({**base, "slope": s})
        center = pair.grid.center
        reports = []
        for frac in cfg.get("rho_fractions", [0.5, 0.25, 0.125]):
            rep = stability_ratio(pair, center, frac * R, R)
            reports.append(rep)
            row = {"slope": s, "rho": frac * R, "R": R}
            row.update({k: v for k, v in rep.to_dict().items() if k in
                        ("a", "b", "residual", "log_drop", "ratio", "normalized_error", "normalized_ratio")})
            rows.append(row)

        # 角点处的拟合与臂上一点的拟合比较零超平面
        arm = center + np.array([offset, s * offset])
        corner_fit = reports[0].fit
        try:
            arm_fit = fit_truncated_pair(pair, arm, corner_fit.rho / 2, R / 2)
            plane = hyperplane_distance_check(corner_fit, arm_fit, c=float(cfg.get("hyperplane_c", 0.05)))
            planes.append({"slope": s, **plane.to_dict()})
        except DegenerateFitError as e:
            logger.warning(f"⚠️ 斜率 {s}: 超平面距离检查跳过 ({e})")

        arms = [center, arm, center + np.array([-offset, s * offset])]
        try:
            nd = nondegeneracy_probe(pair, arms, kappa, R / 2)
            nondeg.append({"slope": s, "included": len(nd.included), "min_slope_sum": nd.min_slope_sum,
                           "floor": nd.floor, "pass": nd.passed})
        except NoQualifyingCentersError as e:
            nondeg.append({"slope": s, "included": 0, "min_slope_sum": math.nan,
                           "floor": e.report.floor, "pass": False})

        trace = square_function_trace(pair, center, R, kind="log-drop")
        traces.append({"slope": s, "kind": trace.kind, "scales": len(trace.entries), "total": trace.total})

    frame = pd.DataFrame(rows)
    ctx.table("stability", frame)
    ctx.table("hyperplane", pd.DataFrame(planes))
    ctx.table("nondegeneracy", pd.DataFrame(nondeg))
    ctx.table("square_function_trace", pd.DataFrame(traces))
    values = frame["normalized_ratio"].astype(float).to_numpy()
    spread = _spread(values)
    ok = np.all(np.isfinite(values)) and np.all(values > 0) and spread <= float(cfg.get("spread", 10.0))
    plane_ratios = [p["ratio"] for p in planes if math.isfinite(p["ratio"])]
    ctx.criterion("C06", bool(ok), spread=spread,
                  hyperplane_ratio_max=max(plane_ratios, default=math.nan),
                  nondegenerate=all(row["pass"] for row in nondeg),
                  trace_totals=[t["total"] for t in traces])


@register("l2-subspace", "β² 与 log-drop 积分之比（门限内的中心）")
def l2_subspace(ctx: ExperimentContext):
    cfg = ctx.config.fit
    kappa = float(cfg.get("kappa", 1.0))
    limit = float(cfg.get("spread", 5.0))
    rows, verdicts = [], []
    for name in ctx.config.generator:
        pair = ctx.pair(name)
        cloud = extract_interface(pair)
        targets = np.array([[t, 0.0] for t in cfg.get("centers", [0.0])]) + pair.grid.center
        _, idx = cloud.tree.query(targets)
        ratios = []
        for c in cloud.points[np.unique(idx)]:
            for r in ctx.config.ladder_radii():
                rep = l2_subspace_inequality_probe(pair, cloud, c, r, kappa)
                row = {"pair": name, "x1": c[0], "x2": c[1]}
                row.update({k: v for k, v in rep.to_dict().items() if k not in ("center",)})
                rows.append(row)
                if not rep.gated_out:
                    ratios.append(rep.ratio)
        ratios = np.array(ratios, dtype=float)
        if len(ratios) == 0 or not np.all(np.isfinite(ratios)):
            verdicts.append(False)
            continue
        median = float(np.median(ratios))
        verdicts.append(bool(np.all(ratios == 0)) if median == 0 else bool(ratios.max() <= limit * median))
    frame = pd.DataFrame(rows)
    ctx.table("l2_subspace", frame)
    ctx.criterion("C07", bool(verdicts) and all(verdicts), pairs=len(verdicts), gated=int(frame["gated_out"].sum()))


@register("covering-line-spiral", "直线与螺旋对上的迭代覆盖、填充和与 Minkowski 内容")
def covering_line_spiral(ctx: ExperimentContext):
    cover_cfg = ctx.config.cover
    epsilon = float(cover_cfg.get("epsilon", 1.0))
    params = CoverParams.from_config({k: v for k, v in cover_cfg.items() if k != "R"})
    Rs = [float(R) for R in cover_cfg.get("R", [0.125, 0.0625])]
    rows, ok = [], True
    for name in ctx.config.generator:
        pair = ctx.pair(name)
        cloud = extract_interface(pair)
        counts, mink = [], []
        cache = AcfCache(pair)
        region = (pair.grid.center, params.region_radius)
        for R in Rs:
            cover = iterated_cover(pair, cloud, epsilon, R, params, ctx.workers)
            budget = math.ceil(cover.jbar / params.eta) if params.eta else 0
            content = minkowski_content(pair, cloud, epsilon, R, params.region_radius, ctx.workers)
            info = cover.to_dict()
            hypothesis = packing_hypothesis_audit(pair, cover, cache)
            # 第一层覆盖中 r_x > R 的球检查 B_{4r_x} 内的 J 上确界
            stratum = stratum_points(pair, cloud, epsilon, params.eta * R, region, ctx.workers)
            first = main_packing_cover(pair, cloud, epsilon, R, params, region, params.region_radius,
                                       stratum, cache, ctx.workers)
            third = condition_three_audit(pair, first, stratum, cache)
            rows.append({
                "pair": name, "R": R, "balls": len(cover.entries), "normalized_count": info["normalized_count"],
                "packing_sum": cover.packing_sum, "iterations": len(cover.trace), "budget": budget,
                "terminated": cover.terminated, "audits_ok": all(cover.audits.values()),
                "hypothesis_holds": hypothesis["holds"],
                "first_level_balls": len(first.entries), "condition_three_checked": third["checked"],
                "condition_three_violations": len(third["violations"]),
                "minkowski": content.volume, "minkowski_ratio": content.ratio,
            })
            ok &= cover.terminated and len(cover.trace) <= budget + 1 and all(cover.audits.values())
            counts.append(info["normalized_count"])
            mink.append(content.ratio)
        ok &= _spread(counts) <= 2.0 and _spread(mink) <= 2.0
    frame = pd.DataFrame(rows)
    ctx.table("covers", frame)
    ctx.criterion("C08", bool(ok), rows=len(frame))


def _corners(pair, spec: dict, level: int, reach: float) -> np.ndarray:
    curve = InterfaceCurveSpec(**{k: v for k, v in spec.items() if k in InterfaceCurveSpec.__dataclass_fields__})
    corners = koch_corners(curve, pair.domain_radius, level)
    return corners[np.linalg.norm(corners - pair.grid.center, axis=1) <= reach]


@register("dichotomy", "精确对与 Koch 对上的二择一探针")
def dichotomy(ctx: ExperimentContext):
    cfg = ctx.config.cover
    epsilon = float(cfg.get("epsilon", 0.1))
    r = float(cfg.get("r", 0.25))
    params = CoverParams.from_config({k: v for k, v in cfg.items()
                                      if k in CoverParams.__dataclass_fields__})
    rows = []
    exact = ctx.pair("exact")
    exact_cloud = extract_interface(exact)
    exact_ok = True
    for c in cfg.get("exact_centers", [[0.0, 0.0]]):
        rep = dichotomy_probe(exact, exact_cloud, c, r, epsilon, params)
        rows.append({"pair": "exact", "step": 0, **rep.to_dict()})
        exact_ok &= rep.case == "small-drop"

    koch = ctx.pair("koch")
    koch_cloud = extract_interface(koch)
    koch_ok = True
    corners = _corners(koch, ctx.generator_spec("koch"), int(cfg.get("corner_level", 1)), float(cfg.get("corner_reach", 2.0)))
    for c in corners:
        reports = dichotomy_with_schedule(koch, koch_cloud, c, r, epsilon, params, ctx.workers)
        for step, rep in enumerate(reports):
            rows.append({"pair": "koch", "step": step, **rep.to_dict()})
        koch_ok &= reports[-1].case == "definite-drop"
    frame = pd.DataFrame(rows)
    frame["center"] = frame["center"].astype(str)
    frame["witnesses"] = frame["witnesses"].astype(str)
    ctx.table("dichotomy", frame)
    ctx.criterion("C09", bool(exact_ok and koch_ok), exact_ok=exact_ok, koch_ok=koch_ok, corners=len(corners))


@register("line-blowup", "精确对的密度比与直线调和对的斜率关系")
def line_blowup(ctx: ExperimentContext):
    cfg = ctx.config.fit
    exact = ctx.pair("exact")
    spec = ctx.generator_spec("exact")
    cloud = extract_interface(exact)
    ladder = ctx.config.ladder_radii(exact.grid.resolution_floor)
    dens = density_trajectory(exact, cloud, exact.grid.center, ladder)
    ctx.table("density_exact", dens.to_frame())
    tol = float(cfg.get("zeta_tol", 0.05))
    a, b = float(spec.get("a", 1.0)), float(spec.get("b", 1.0))
    tail_u, tail_v = dens.zeta_u[-2:], dens.zeta_v[-2:]
    zeta_ok = bool(np.all(np.abs(tail_u - a) <= tol * a) and np.all(np.abs(tail_v - b) <= tol * b))

    line = ctx.pair("line")
    x = line.grid.center
    r_max = float(ctx.config.ladder.get("r_max", 0.25))
    fine = [r for r in dyadic_ladder(r_max, 16) if r >= line.grid.resolution_floor]
    traj = blowup_trajectory(line, x, fine)
    est = estimate_j0plus(radial_profile(line, x, r_max))
    rel = slope_relations(traj, est.value)
    ctx.table("trajectory_line", traj.to_frame())
    if rel["matches"] != "sqrt":
        logger.warning(f"⚠️ 斜率关系更接近 {rel['matches']}: {rel['relative_errors']}")
    slope_ok = rel["relative_errors"]["sqrt"] <= float(cfg.get("slope_tol", 0.05))
    ctx.note("slope_relations", rel)

    # 放大序列向最细尺度拟合给出的截断线性对收敛
    finest = traj.fits[-1]
    limit = TruncatedLinearPairSpec(finest.a, finest.b, finest.nu, (0.0,) * line.dim)
    scales = [r for r in fine if r >= float(cfg.get("rescale_min", r_max / 4))]
    energy = energy_convergence_probe([rescale_pair(line, x, r) for r in scales], limit)
    energy_frame = pd.DataFrame(energy["rows"])
    energy_frame.insert(0, "r", scales)
    ctx.table("energy_convergence_line", energy_frame)

    usc = usc_probe(line, x, [(x + np.array([r, 0.0]), r) for r in fine], r_max)
    mu_u, mu_v = laplacian_measure_mass(line, x, r_max)
    ctx.note("usc_line", usc.to_dict())
    ctx.note("line_laplacian_mass", {"r": r_max, "mu_u": mu_u, "mu_v": mu_v})
    ctx.criterion("C11", zeta_ok and slope_ok, zeta_u=float(tail_u[-1]), zeta_v=float(tail_v[-1]),
                  sqrt_rel_err=rel["relative_errors"]["sqrt"], linear_rel_err=rel["relative_errors"]["linear"],
                  energy_decaying=energy["decaying"], usc_pass=usc.passed, line_mu_ratio=mu_u / mu_v if mu_v else math.nan)


@register("spiral-nonunique-blowup", "直线对放大唯一、对数-对数螺旋放大不唯一")
def spiral_nonunique_blowup(ctx: ExperimentContext):
    cfg = ctx.config.fit
    radii = ctx.config.ladder_radii()
    line = ctx.pair("line")
    spiral = ctx.pair("spiral")
    lt = blowup_trajectory(line, line.grid.center, radii)
    st = blowup_trajectory(spiral, spiral.grid.center, radii)
    ctx.table("trajectory_line", lt.to_frame())
    ctx.table("trajectory_spiral", st.to_frame())
    summary = {
        "line_variation_deg": lt.angle_variation_deg,
        "line_two_valued_deg": normal_two_valuedness(lt),
        "spiral_variation_deg": st.angle_variation_deg,
        "spiral_last_step_deg": st.last_step_change_deg,
        "line_dini_sum": lt.dini_sum,
        "spiral_dini_sum": st.dini_sum,
    }
    for key, value in summary.items():
        ctx.note(key, value)
    ok = (lt.angle_variation_deg <= float(cfg.get("line_max_deg", 2.0))
          and st.angle_variation_deg >= float(cfg.get("spiral_min_deg", 30.0))
          and st.last_step_change_deg >= float(cfg.get("spiral_last_step_deg", 5.0)))
    ctx.criterion("C10", bool(ok), **summary)


@register("koch-nonrect", "Koch 对: 角点处 β 平方函数比与 Γ* 选中比例")
def koch_nonrect(ctx: ExperimentContext):
    cfg = ctx.config.cover
    pair = ctx.pair("koch")
    cloud = extract_interface(pair)
    radii = sorted(ctx.config.ladder_radii(), reverse=True)
    floor = pair.grid.resolution_floor
    ladder = [r for r in dyadic_ladder(2 * radii[0], 24) if r >= floor]
    corners = _corners(pair, ctx.generator_spec("koch"), int(cfg.get("corner_level", 1)), float(cfg.get("corner_reach", 2.0)))
    rows, beta_ok = [], True
    for c in corners:
        ratios = []
        for r in radii:
            rep = square_function_sum(cloud, c, r, ladder)
            rows.append({"x1": c[0], "x2": c[1], "r": r, "sum": rep.total, "ratio": rep.ratio})
            ratios.append(rep.ratio)
        beta_ok &= bool(np.all(np.diff(ratios) > 0))
    ctx.table("koch_square_function", pd.DataFrame(rows))

    epsilon = float(cfg.get("epsilon", 0.1))
    region = (pair.grid.center, float(cfg.get("region_radius", 1.0)))
    table = build_strata_table(cloud, pair, radii, region, ctx.workers)
    fractions = [table.select(epsilon, r).fraction for r in radii]
    ctx.table("koch_strata", pd.DataFrame({"r": radii, "fraction": fractions}))
    strata_ok = bool(np.all(np.diff(fractions) <= 0) and fractions[-1] < fractions[0])
    ctx.note("cloud_mass", cloud.mass)
    ctx.criterion("C12", beta_ok and strata_ok, beta_growth=beta_ok, strata_shrinking=strata_ok, fractions=fractions)


@register("modkoch-strata", "修正 Koch 对的分层比例与 β 平方函数")
def modkoch_strata(ctx: ExperimentContext):
    cfg = ctx.config.cover
    pair = ctx.pair("modkoch")
    cloud = extract_interface(pair)
    radii = sorted(ctx.config.ladder_radii(), reverse=True)
    region = (pair.grid.center, float(cfg.get("region_radius", 1.0)))
    table = build_strata_table(cloud, pair, radii, region, ctx.workers)
    rows = []
    for eps in cfg.get("epsilons", [0.1]):
        for r in radii:
            rows.append({"epsilon": eps, "r": r, "fraction": table.select(float(eps), r).fraction})
    ctx.table("modkoch_strata", pd.DataFrame(rows))
    floor = pair.grid.resolution_floor
    ladder = [r for r in dyadic_ladder(2 * radii[0], 24) if r >= floor]
    sums = [square_function_sum(cloud, pair.grid.center, r, ladder) for r in radii]
    ctx.table("modkoch_square_function", pd.DataFrame({"r": radii, "sum": [s.total for s in sums],
                                                       "ratio": [s.ratio for s in sums]}))
    ctx.note("cloud_mass", cloud.mass)
    ctx.note("excluded_points", table.excluded)


# ==================== 执行 ====================

def run_experiment(config: ExperimentConfig, settings: Optional[dict] = None,
                   state: Optional[RunState] = None) -> ExperimentReport:
    """
    执行一个注册实验

    出错时返回标记为不完整的部分报告；state 给出时写出 CSV、report.json、report.md/html
    """
    from report import markdown_to_html, render_markdown

    settings = settings or {}
    description, fn = REGISTRY[config.experiment]
    report = ExperimentReport(config.experiment, description, config.hash, config.seed)
    ctx = ExperimentContext(config, settings, report, state)
    logger.info("=" * 80)
    logger.info(f"🚀 实验 {config.experiment}: {description}")
    logger.info("=" * 80)
    start = time.perf_counter()
    try:
        fn(ctx)
    except AcfLabError as e:
        logger.error(f"❌ 实验 {config.experiment} 中止: {e}", exc_info=True)
        report.complete = False
        report.error = f"{type(e).__name__}: {e}"
    finally:
        report.wall_clock_s = time.perf_counter() - start
        report.finalize()

    if state is not None:
        state.save_config(config.to_dict())
        state.save_json(report.to_dict())
        md = render_markdown(report.to_dict())
        state.save_report(md, markdown_to_html(md, config.experiment))
        logger.info(f"💾 结果已保存: {state.dir}")
    status = "✅ 全部通过" if report.passed else "❌ 存在未通过项"
    logger.info(f"📊 {config.experiment} 结束 ({report.wall_clock_s:.1f} s): {status}")
    return report


def run_label(config: ExperimentConfig, settings: dict) -> str:
    out = config.output.get("dir")
    if out:
        return str(out)
    return fmt_run_label(now_in_tz(settings.get("timezone", "Asia/Shanghai")), config.experiment)
