# covering.py
"""
构造性覆盖

停时半径 r̂_x → Vitali 子覆盖 → G/A/V 分类 → A/V 球内的极大分离网，
以及迭代覆盖、填充和审计、二择一探针、Minkowski 内容。
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from acf_functional import acf_value
from errors import ConfigError, UnderResolvedScaleError
from fields import AdmissiblePair
from strata_beta import InterfaceCloud, build_strata_table
from utils import dyadic_ladder, parallel_map, to_jsonable

logger = logging.getLogger(__name__)

CLASSES = ("G", "A", "V")
DICHOTOMY_CASES = ("small-drop", "definite-drop", "mixed", "vacuous")


@dataclass(frozen=True)
class CoverParams:
    """
    覆盖参数；未给出的按 η̄ = ε/10、ρ̄ = η̄/10、η 取 {η̄, η̄/4, η̄/16} 的第一个补全
    """

    epsilon: float
    eta_bar: Optional[float] = None
    rho_bar: Optional[float] = None
    eta: Optional[float] = None
    eta_schedule: Optional[tuple] = None
    jbar: Optional[float] = None
    jbar_radius: Optional[float] = None
    region_radius: float = 1.0

    def resolved(self) -> "CoverParams":
        if not self.epsilon > 0:
            raise ConfigError(f"ε 必须为正，收到 {self.epsilon}")
        eta_bar = self.eta_bar if self.eta_bar is not None else self.epsilon / 10
        rho_bar = self.rho_bar if self.rho_bar is not None else eta_bar / 10
        schedule = tuple(self.eta_schedule) if self.eta_schedule else (eta_bar, eta_bar / 4, eta_bar / 16)
        eta = self.eta if self.eta is not None else schedule[0]
        for name, value in (("η̄", eta_bar), ("ρ̄", rho_bar), ("η", eta)):
            if not 0 < value < 1:
                raise ConfigError(f"{name} 必须在 (0, 1) 内，收到 {value}")
        return replace(self, eta_bar=eta_bar, rho_bar=rho_bar, eta=eta, eta_schedule=schedule)

    @classmethod
    def from_config(cls, cfg: dict) -> "CoverParams":
        known = {k: cfg[k] for k in cls.__dataclass_fields__ if k in cfg}
        if "epsilon" not in known:
            raise ConfigError("覆盖配置缺少 epsilon")
        return cls(**known).resolved()


class AcfCache:
    """同一 (x, r) 的 J 值只算一次；r 低于 4h 时抛 UnderResolvedScaleError，不做截断"""

    def __init__(self, pair: AdmissiblePair):
        self.pair = pair
        self._values = {}

    def __call__(self, x, r: float) -> float:
        key = (tuple(np.round(np.asarray(x, dtype=float), 12)), round(float(r), 15))
        if key not in self._values:
            self._values[key] = acf_value(self.pair, x, r)
        return self._values[key]

    def capped(self, x, r: float) -> float:
        """r 截到 x 处可用的半径"""
        return self(x, min(r, self.pair.available_radius(x)))


def default_jbar_radius(pair: AdmissiblePair) -> float:
    """min(4, (D - 2h)/2)，保证 y ∈ B_s(中心) 时 B_s(y) 仍在求解区域内"""
    D = pair.domain_radius if pair.domain_radius is not None else pair.grid.inscribed_radius
    return min(4.0, (D - 2 * pair.grid.spacing) / 2)


def compute_jbar(pair: AdmissiblePair, cloud: InterfaceCloud, radius: Optional[float] = None,
                 center=None, cache: Optional[AcfCache] = None, workers: int = 1) -> float:
    """J̄ = sup_{y ∈ cloud ∩ B_s(center)} J_y(s)"""
    s = radius if radius is not None else default_jbar_radius(pair)
    center = pair.grid.center if center is None else np.asarray(center, dtype=float)
    cache = cache or AcfCache(pair)
    pts = cloud.points[cloud.ball(center, s)] if len(cloud) else np.zeros((0, pair.dim))
    if len(pts) == 0:
        return 0.0
    values = parallel_map(lambda y: cache.capped(y, s), pts, workers)
    return float(max(values))


@dataclass(frozen=True)
class StoppingTime:
    radius: float
    bracket: tuple  # (J(ρ̄ r̂/2) 或 None, J(ρ̄ r̂))


def stopping_time(pair: AdmissiblePair, x, R: float, rho_bar: float, eta_bar: float, jbar: float,
                  top: float = 1.0, cache: Optional[AcfCache] = None) -> StoppingTime:
    """
    r̂_x = inf{r ∈ 二进阶梯 ∩ [R, top] : J_x(ρ̄ r) > J̄ - η̄}，条件在 top 处不成立时 r̂ = top

    J 关于 r 单调，条件集合向上封闭，自上而下扫描到条件失效为止。
    """
    cache = cache or AcfCache(pair)
    threshold = jbar - eta_bar
    depth = max(0, int(math.floor(math.log2(top / R) + 1e-9))) if R < top else 0
    ladder = list(dyadic_ladder(top, depth))
    if ladder[-1] > R * (1 + 1e-12):
        ladder.append(R)
    above = cache(x, rho_bar * ladder[0])
    if not above > threshold:
        return StoppingTime(float(top), (None, above))
    r_hat, j_hat = ladder[0], above
    for r in ladder[1:]:
        j = cache(x, rho_bar * r)
        if not j > threshold:
            return StoppingTime(float(r_hat), (j, j_hat))
        r_hat, j_hat = r, j
    return StoppingTime(float(r_hat), (None, j_hat))


def stopping_radius(pair: AdmissiblePair, x, R: float, rho_bar: float, eta_bar: float, jbar: float,
                    top: float = 1.0) -> float:
    return stopping_time(pair, x, R, rho_bar, eta_bar, jbar, top).radius


def required_scales(params: CoverParams, R: Optional[float] = None, r: Optional[float] = None,
                    audit: bool = False) -> dict:
    """
    覆盖 / 二择一会用到的最小半径

    R 给出时: R、ρ̄R（停时半径）、ηR（分层），audit 时再加 η̄R（打包假设）；
    r 给出时: 对 η 序列中每个 η 取 ρ̄r 与 ηr
    """
    scales = {}
    if R is not None:
        scales["R"] = R
        scales["rho_bar*R"] = params.rho_bar * R
        scales["eta*R"] = params.eta * R
        if audit:
            scales["eta_bar*R"] = params.eta_bar * R
    if r is not None:
        scales["rho_bar*r"] = params.rho_bar * r
        for eta in params.eta_schedule or (params.eta,):
            scales[f"eta*r (η={eta:g})"] = eta * r
    return scales


def unresolved_scales(floor: float, scales: dict) -> dict:
    return {name: value for name, value in scales.items() if value < floor * (1 - 1e-9)}


def check_resolved(pair: AdmissiblePair, scales: dict):
    """任一尺度低于 4h 时抛 UnderResolvedScaleError"""
    floor = pair.grid.resolution_floor
    low = unresolved_scales(floor, scales)
    if low:
        name, value = min(low.items(), key=lambda kv: kv[1])
        raise UnderResolvedScaleError(
            f"尺度 {name} = {value:.6g} 低于分辨率下限 4h = {floor:.6g}（共 {len(low)} 项）"
        )


def vitali_subcover(candidates: Sequence) -> list:
    """
    按半径从大到小贪心，1/5 半径核与已保留的核不交时保留

    Args:
        candidates: [(center, radius), ...]

    Returns:
        保留下来的候选下标（按保留顺序）
    """
    order = sorted(range(len(candidates)), key=lambda i: (-float(candidates[i][1]), i))
    kept = []
    for i in order:
        ci, ri = np.asarray(candidates[i][0], dtype=float), float(candidates[i][1])
        if all(np.linalg.norm(ci - np.asarray(candidates[j][0], dtype=float)) >= (ri + float(candidates[j][1])) / 5
               for j in kept):
            kept.append(i)
    return kept


def _cores_disjoint(centers: np.ndarray, radii: np.ndarray, fraction: float) -> bool:
    n = len(radii)
    for i in range(n):
        d = np.linalg.norm(centers[i + 1:] - centers[i], axis=1)
        if np.any(d < fraction * (radii[i] + radii[i + 1:]) * (1 - 1e-12)):
            return False
    return True


def _all_covered(points: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> bool:
    if len(points) == 0:
        return True
    if len(centers) == 0:
        return False
    for p in points:
        if not np.any(np.linalg.norm(centers - p, axis=1) <= radii * (1 + 1e-12)):
            return False
    return True


def vitali_audit(candidates: Sequence, kept: Sequence[int]) -> dict:
    """核两两不交，且每个候选中心落在某个保留的整球内"""
    centers = np.array([np.asarray(candidates[i][0], dtype=float) for i in kept]).reshape(len(kept), -1)
    radii = np.array([float(candidates[i][1]) for i in kept])
    all_centers = np.array([np.asarray(c, dtype=float) for c, _ in candidates]).reshape(len(candidates), -1)
    return {
        "disjoint_cores": _cores_disjoint(centers, radii, 0.2),
        "covers_centers": _all_covered(all_centers, centers, radii),
    }


def separated_net(points: np.ndarray, radii: np.ndarray) -> list:
    """
    r_y/2 核两两不交的极大网：按 r_y 从大到小、同半径按下标顺序贪心
    被拒的点落在某个已选点的 r_y 球内
    """
    order = sorted(range(len(radii)), key=lambda i: (-float(radii[i]), i))
    kept = []
    for i in order:
        if all(np.linalg.norm(points[i] - points[j]) >= (radii[i] + radii[j]) / 2 for j in kept):
            kept.append(i)
    return kept


@dataclass
class CoverEntry:
    center: tuple
    radius: float
    cls: str
    r_hat: float
    parent: Optional[int] = None


@dataclass
class BallCover:
    entries: list
    R: float
    params: dict
    jbar: float
    audits: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    terminated: bool = True
    stratum_size: int = 0

    @property
    def centers(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, 2))
        return np.array([e.center for e in self.entries])

    @property
    def radii(self) -> np.ndarray:
        return np.array([e.radius for e in self.entries])

    @property
    def dim(self) -> int:
        return len(self.entries[0].center) if self.entries else 2

    @property
    def packing_sum(self) -> float:
        return float(np.sum(self.radii ** (self.dim - 1))) if self.entries else 0.0

    def class_counts(self) -> dict:
        return {c: sum(1 for e in self.entries if e.cls == c) for c in CLASSES}

    def to_dict(self) -> dict:
        return {
            "R": self.R,
            "params": self.params,
            "jbar": self.jbar,
            "entries": [asdict(e) for e in self.entries],
            "classes": self.class_counts(),
            "packing_sum": self.packing_sum,
            "normalized_count": len(self.entries) * self.R ** (self.dim - 1),
            "stratum_size": self.stratum_size,
            "audits": self.audits,
            "trace": self.trace,
            "terminated": self.terminated,
        }

    def to_json(self, path):
        Path(path).write_text(json.dumps(to_jsonable(self.to_dict()), ensure_ascii=False, indent=2), encoding="utf-8")


def stratum_points(pair: AdmissiblePair, cloud: InterfaceCloud, epsilon: float, scale: float,
                   region: tuple, workers: int = 1) -> InterfaceCloud:
    """区域内 J_x(scale) >= ε 的点"""
    check_resolved(pair, {"stratum scale": scale})
    table = build_strata_table(cloud, pair, [scale], region=region, workers=workers)
    return table.select(epsilon, scale).measure()


def main_packing_cover(
    pair: AdmissiblePair,
    cloud: InterfaceCloud,
    epsilon: float,
    R: float,
    params: Optional[CoverParams] = None,
    region: Optional[tuple] = None,
    top: float = 1.0,
    stratum: Optional[InterfaceCloud] = None,
    cache: Optional[AcfCache] = None,
    workers: int = 1,
) -> BallCover:
    """
    单层覆盖: 停时半径 → Vitali → G/A/V → A/V 球内按 r_y = max(R, η r̂_y) 取极大分离网

    Args:
        region: (中心, 半径)，缺省为 (网格中心, top)
        stratum: 已选好的 Γ*_{ε,ηR} 点；缺省时在 region 内按 J_x(ηR) >= ε 选取

    Returns:
        BallCover

    Raises:
        UnderResolvedScaleError: R、ρ̄R 或 ηR 低于 4h
    """
    params = (params or CoverParams(epsilon)).resolved()
    check_resolved(pair, required_scales(params, R=R))
    cache = cache or AcfCache(pair)
    if region is None:
        region = (pair.grid.center, top)
    center, radius = np.asarray(region[0], dtype=float), float(region[1])
    if stratum is None:
        stratum = stratum_points(pair, cloud, epsilon, params.eta * R, (center, radius), workers)
    else:
        stratum = stratum.within(center, radius)
    jbar = params.jbar if params.jbar is not None else compute_jbar(pair, cloud, params.jbar_radius, cache=cache, workers=workers)
    pdict = asdict(replace(params, jbar=jbar))
    if len(stratum) == 0:
        logger.info("分层为空，覆盖为空")
        return BallCover([], R, pdict, jbar, {"covered": True, "vitali_disjoint": True, "net_disjoint": True})

    pts = stratum.points
    times = parallel_map(
        lambda p: stopping_time(pair, p, R, params.rho_bar, params.eta_bar, jbar, top, cache), pts, workers
    )
    r_hat = np.array([t.radius for t in times])
    candidates = list(zip(pts, r_hat))
    kept = vitali_subcover(candidates)
    vitali = vitali_audit(candidates, kept)

    entries = []
    net_ok = True
    tree = cKDTree(pts)
    for k, i in enumerate(kept):
        if math.isclose(r_hat[i], R, rel_tol=1e-12):
            cls = "G"
        elif math.isclose(r_hat[i], top, rel_tol=1e-12):
            cls = "V"
        else:
            cls = "A"
        if cls == "G":
            entries.append(CoverEntry(tuple(map(float, pts[i])), float(R), cls, float(r_hat[i]), k))
            continue
        inside = np.array(sorted(tree.query_ball_point(pts[i], r_hat[i] * (1 + 1e-12))), dtype=int)
        r_y = np.maximum(R, params.eta * r_hat[inside])
        net = separated_net(pts[inside], r_y)
        net_ok &= _cores_disjoint(pts[inside][net], r_y[net], 0.5)
        for j in net:
            entries.append(CoverEntry(tuple(map(float, pts[inside[j]])), float(r_y[j]), cls, float(r_hat[inside[j]]), k))

    cover = BallCover(entries, R, pdict, jbar, stratum_size=len(stratum))
    cover.audits = {
        "covered": _all_covered(pts, cover.centers, cover.radii),
        "vitali_disjoint": vitali["disjoint_cores"],
        "vitali_covers": vitali["covers_centers"],
        "net_disjoint": bool(net_ok),
    }
    if not all(cover.audits.values()):
        logger.warning(f"⚠️ 覆盖审计未通过: {cover.audits}")
    logger.debug(f"单层覆盖: {len(stratum)} 个分层点 → {len(entries)} 个球 {cover.class_counts()}")
    return cover


def iterated_cover(
    pair: AdmissiblePair,
    cloud: InterfaceCloud,
    epsilon: float,
    R: float,
    params: Optional[CoverParams] = None,
    workers: int = 1,
) -> BallCover:
    """
    在每个 r_x > R 的球内以局部顶尺度 r_x 与局部 J̄ 重复单层覆盖，
    直到所有半径为 R 或用完 ⌈J̄/η⌉ 次迭代

    Returns:
        BallCover，trace 记录每次迭代，terminated 为 False 表示未终止
    """
    params = (params or CoverParams(epsilon)).resolved()
    check_resolved(pair, required_scales(params, R=R))
    cache = AcfCache(pair)
    region = (pair.grid.center, params.region_radius)
    stratum = stratum_points(pair, cloud, epsilon, params.eta * R, region, workers)
    cover = main_packing_cover(pair, cloud, epsilon, R, params, region, params.region_radius, stratum, cache, workers)
    jbar = cover.jbar
    budget = max(1, math.ceil(jbar / params.eta))

    entries = list(cover.entries)
    trace = []
    audits = dict(cover.audits)
    iteration = 0
    while True:
        iteration += 1
        pending = [e for e in entries if e.radius > R * (1 + 1e-12)]
        trace.append({
            "iteration": iteration,
            "balls": len(entries),
            "pending": len(pending),
            "max_radius": max((e.radius for e in entries), default=0.0),
        })
        if not pending or iteration >= budget + 1:
            break
        done = [e for e in entries if e.radius <= R * (1 + 1e-12)]
        for e in pending:
            x = np.array(e.center)
            s = min(4 * e.radius, pair.available_radius(x))
            local = stratum.points[stratum.ball(x, s)]
            local_jbar = max((cache.capped(y, s) for y in local), default=0.0)
            sub = main_packing_cover(
                pair, cloud, epsilon, R, replace(params, jbar=local_jbar),
                (x, e.radius), e.radius, stratum, cache, workers,
            )
            for key, ok in sub.audits.items():
                audits[key] = audits.get(key, True) and ok
            done.extend(sub.entries)
        entries = done

    pending = [e for e in entries if e.radius > R * (1 + 1e-12)]
    result = BallCover(entries, R, asdict(replace(params, jbar=jbar)), jbar, audits, trace,
                       terminated=not pending, stratum_size=len(stratum))
    result.audits["covered"] = _all_covered(stratum.points, result.centers, result.radii) if entries else len(stratum) == 0
    if pending:
        logger.warning(f"⚠️ 迭代覆盖在 {budget} 次预算内未终止，仍有 {len(pending)} 个球半径 > R")
    else:
        logger.info(f"✅ 迭代覆盖 {iteration} 次终止: N = {len(entries)}, N·R^(n-1) = {result.to_dict()['normalized_count']:.4g}")
    return result


# ==================== 审计 ====================

def packing_hypothesis_audit(pair: AdmissiblePair, cover: BallCover, cache: Optional[AcfCache] = None) -> dict:
    """每个球检查 J_p(η̄ r_p) >= J̄ - η̄"""
    cache = cache or AcfCache(pair)
    eta_bar = cover.params["eta_bar"]
    threshold = cover.jbar - eta_bar
    failures = []
    for e in cover.entries:
        j = cache(e.center, eta_bar * e.radius)
        if j < threshold:
            failures.append({"center": list(e.center), "radius": e.radius, "J": j})
    return {
        "balls": len(cover.entries),
        "holds": len(cover.entries) - len(failures),
        "holds_all": not failures,
        "failures": failures,
        "packing_sum": cover.packing_sum,
    }


def condition_three_audit(pair: AdmissiblePair, cover: BallCover, stratum: InterfaceCloud,
                          cache: Optional[AcfCache] = None) -> dict:
    """r_x > R 的球检查 sup_{y ∈ B_{4r_x}(x) ∩ 分层} J_y(4r_x) <= J̄ - η"""
    cache = cache or AcfCache(pair)
    threshold = cover.jbar - cover.params["eta"]
    checked, violations = 0, []
    for e in cover.entries:
        if e.radius <= cover.R * (1 + 1e-12):
            continue
        checked += 1
        s = 4 * e.radius
        sup = max((cache.capped(y, s) for y in stratum.points[stratum.ball(e.center, s)]), default=0.0)
        if sup > threshold:
            violations.append({"center": list(e.center), "radius": e.radius, "sup_J": sup})
    return {"checked": checked, "violations": violations, "holds_all": not violations}


@dataclass(frozen=True)
class MinkowskiReport:
    volume: float
    R: float
    stratum_size: int

    @property
    def ratio(self) -> float:
        return self.volume / self.R

    def to_dict(self) -> dict:
        return {"volume": self.volume, "R": self.R, "ratio": self.ratio, "stratum_size": self.stratum_size}


def minkowski_content(pair: AdmissiblePair, cloud: InterfaceCloud, epsilon: float, R: float,
                      region_radius: float = 1.0, workers: int = 1) -> MinkowskiReport:
    """|B_R(Γ*_{ε,R}) ∩ B_1| 按节点计数"""
    grid = pair.grid
    center = grid.center
    stratum = stratum_points(pair, cloud, epsilon, R, (center, region_radius + R), workers)
    if len(stratum) == 0:
        return MinkowskiReport(0.0, R, 0)
    nodes = grid.points()
    nodes = nodes[np.linalg.norm(nodes - center, axis=1) <= region_radius]
    dist, _ = stratum.tree.query(nodes, distance_upper_bound=R * (1 + 1e-12))
    count = int(np.sum(np.isfinite(dist)))
    return MinkowskiReport(count * grid.spacing ** grid.dim, R, len(stratum))


# ==================== 二择一 ====================

@dataclass
class DichotomyReport:
    center: tuple
    r: float
    eta: float
    case: str
    points: int
    witnesses: dict = field(default_factory=dict)

    @property
    def violation(self) -> bool:
        return self.case == "mixed"

    def to_dict(self) -> dict:
        return {"center": list(self.center), "r": self.r, "eta": self.eta, "case": self.case,
                "points": self.points, "witnesses": self.witnesses, "violation": self.violation}


def dichotomy_probe(
    pair: AdmissiblePair,
    cloud: InterfaceCloud,
    x0,
    r: float,
    epsilon: float,
    params: Optional[CoverParams] = None,
    cache: Optional[AcfCache] = None,
    workers: int = 1,
) -> DichotomyReport:
    """
    对 Γ*_{ε,ηr} ∩ B_{2r}(x0) 的每个点检查
        (1) J_x(ρ̄ r) > J̄ - η̄
        (2) J_x(4ηr) <= J̄ - η
    全部满足 (1) 为 small-drop，全部满足 (2) 为 definite-drop，否则 mixed
    """
    params = (params or CoverParams(epsilon)).resolved()
    check_resolved(pair, required_scales(replace(params, eta_schedule=(params.eta,)), r=r))
    cache = cache or AcfCache(pair)
    x0 = np.asarray(x0, dtype=float)
    jbar = params.jbar if params.jbar is not None else compute_jbar(pair, cloud, params.jbar_radius, cache=cache, workers=workers)
    pts = stratum_points(pair, cloud, epsilon, params.eta * r, (x0, 2 * r), workers).points
    center = tuple(float(c) for c in x0)
    if len(pts) == 0:
        return DichotomyReport(center, r, params.eta, "vacuous", 0)
    one = np.array([cache(p, params.rho_bar * r) > jbar - params.eta_bar for p in pts])
    two = np.array([cache(p, 4 * params.eta * r) <= jbar - params.eta for p in pts])
    if one.all():
        case = "small-drop"
    elif two.all():
        case = "definite-drop"
    else:
        case = "mixed"
    witnesses = {}
    if case == "mixed":
        witnesses = {"fails_small_drop": pts[int(np.argmin(one))].tolist(),
                     "fails_definite_drop": pts[int(np.argmin(two))].tolist()}
    return DichotomyReport(center, r, params.eta, case, len(pts), witnesses)


def dichotomy_with_schedule(
    pair: AdmissiblePair,
    cloud: InterfaceCloud,
    x0,
    r: float,
    epsilon: float,
    params: Optional[CoverParams] = None,
    workers: int = 1,
) -> list:
    """按 η 序列依次探测，遇到非 mixed 结果即停"""
    params = (params or CoverParams(epsilon)).resolved()
    check_resolved(pair, required_scales(params, r=r))
    cache = AcfCache(pair)
    if params.jbar is None:
        params = replace(params, jbar=compute_jbar(pair, cloud, params.jbar_radius, cache=cache, workers=workers))
    reports = []
    for eta in params.eta_schedule:
        report = dichotomy_probe(pair, cloud, x0, r, epsilon, replace(params, eta=eta), cache, workers)
        reports.append(report)
        if not report.violation:
            break
        logger.info(f"η = {eta:.3g} 出现 mixed，缩小 η 重试")
    return reports
