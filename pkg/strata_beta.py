# strata_beta.py
"""
界面点云、分层 Γ*_{ε,r} 与 L² Jones β 数

- extract_interface: 支集节点与非支集节点之间的面中点，权重 h^{n-1}
- StrataTable / select_stratum: 按 J_x(r) >= ε 选点
- beta_number: 质心 + 最小二阶矩方向给出的最优超平面
- square_function_sum / l2_subspace_inequality_probe
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from acf_functional import acf_value_resolved, log_drop
from errors import UnderResolvedScaleError
from fields import AdmissiblePair
from utils import parallel_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class InterfaceCloud:
    points: np.ndarray
    weights: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.ndim != 2:
            raise ValueError(f"points 必须是二维数组，收到形状 {pts.shape}")
        if len(w) != len(pts):
            raise ValueError("points 与 weights 长度不一致")
        if np.any(w <= 0):
            raise ValueError("权重必须为正")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @cached_property
    def tree(self) -> Optional[cKDTree]:
        return cKDTree(self.points) if len(self.points) else None

    def ball(self, x, r: float) -> np.ndarray:
        """闭球 B_r(x) 内点的下标（升序）"""
        if self.tree is None:
            return np.zeros(0, dtype=int)
        return np.array(sorted(self.tree.query_ball_point(np.asarray(x, dtype=float), r)), dtype=int)

    def ball_mass(self, x, r: float) -> float:
        return float(self.weights[self.ball(x, r)].sum())

    def subset(self, mask) -> "InterfaceCloud":
        return InterfaceCloud(self.points[mask], self.weights[mask], self.provenance)

    def within(self, center, radius: float) -> "InterfaceCloud":
        d = np.linalg.norm(self.points - np.asarray(center, dtype=float), axis=1)
        return self.subset(d <= radius)

    def to_frame(self) -> pd.DataFrame:
        data = {f"x{a + 1}": self.points[:, a] for a in range(self.dim)}
        data["weight"] = self.weights
        return pd.DataFrame(data)


def _empty_cloud(dim: int, provenance: str) -> InterfaceCloud:
    return InterfaceCloud(np.zeros((0, dim)), np.zeros(0), provenance)


def extract_interface(pair: AdmissiblePair, provenance: Optional[str] = None) -> InterfaceCloud:
    """
    Γ = ∂{u>0} ∪ ∂{v>0} 的面中点采样

    支集节点与相邻非支集节点之间的面取中点；沿某轴出现 [u>0, 0, v>0]
    （或反向）时两侧的面合并为中间的零节点，避免把同一段界面计两次。
    """
    grid = pair.grid
    dim = grid.dim
    provenance = provenance or str(pair.meta.get("kind", ""))
    pos = pair.u.values > 0
    neg = pair.v.values > 0
    support = pos | neg
    counts = np.array(grid.counts)
    dims = tuple(2 * counts - 1)

    facets, dropped, merged = [], [], []
    for a in range(dim):
        lo = [slice(None)] * dim
        hi = [slice(None)] * dim
        lo[a], hi[a] = slice(0, -1), slice(1, None)
        idx = np.argwhere(support[tuple(lo)] != support[tuple(hi)])
        if len(idx):
            key = 2 * idx
            key[:, a] += 1
            facets.append(key)

        l3, m3, h3 = list(lo), [slice(None)] * dim, [slice(None)] * dim
        l3[a], m3[a], h3[a] = slice(0, -2), slice(1, -1), slice(2, None)
        gap = ~support[tuple(m3)]
        cross = gap & ((pos[tuple(l3)] & neg[tuple(h3)]) | (neg[tuple(l3)] & pos[tuple(h3)]))
        idx = np.argwhere(cross)
        if len(idx):
            node = 2 * idx
            node[:, a] += 2
            merged.append(node)
            for off in (1, 3):
                k = 2 * idx
                k[:, a] += off
                dropped.append(k)

    def encode(blocks):
        if not blocks:
            return np.zeros(0, dtype=np.int64)
        keys = np.vstack(blocks)
        return np.ravel_multi_index(tuple(keys.T), dims).astype(np.int64)

    keys = np.setdiff1d(encode(facets), encode(dropped))
    keys = np.union1d(keys, encode(merged))
    if len(keys) == 0:
        logger.info("界面为空")
        return _empty_cloud(dim, provenance)

    doubled = np.stack(np.unravel_index(keys, dims), axis=1).astype(float)
    points = grid.lower + 0.5 * grid.spacing * doubled
    if pair.domain_radius is not None:
        d = np.linalg.norm(points - grid.center, axis=1)
        points = points[d <= pair.domain_radius]
    weights = np.full(len(points), grid.spacing ** (dim - 1))
    logger.debug(f"界面点云: {len(points)} 个点，质量 {weights.sum():.4g}")
    return InterfaceCloud(points, weights, provenance)


# ==================== 分层 ====================

@dataclass
class StratumSelection:
    epsilon: float
    r: float
    flags: np.ndarray
    values: np.ndarray
    cloud: InterfaceCloud

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    @property
    def fraction(self) -> float:
        return self.count / len(self.flags) if len(self.flags) else 0.0

    def measure(self) -> InterfaceCloud:
        """H^{n-1}⌞Γ*_{ε,r} 的离散版本"""
        return self.cloud.subset(self.flags)


@dataclass
class StrataTable:
    """
    点云各点在一组尺度上的 J 值

    select 使用单调包络 J̃_x(r) = max_{s<=r} J_x(s)，离散剖面单调时与 J 一致，
    并保证 (ε, r) 越严格选中的点越少。
    """

    cloud: InterfaceCloud
    radii: np.ndarray
    values: np.ndarray
    excluded: int = 0

    @cached_property
    def envelope(self) -> np.ndarray:
        if self.values.size == 0:
            return self.values
        return np.maximum.accumulate(self.values, axis=1)

    def column(self, r: float) -> int:
        k = int(np.searchsorted(self.radii, r * (1 + 1e-12), side="right")) - 1
        if k < 0:
            raise UnderResolvedScaleError(f"尺度 {r:.4g} 小于表中最小尺度 {self.radii[0]:.4g}")
        return k

    def select(self, epsilon: float, r: float) -> StratumSelection:
        k = self.column(r)
        env = self.envelope[:, k] if len(self.cloud) else np.zeros(0)
        return StratumSelection(epsilon, r, env >= epsilon, self.values[:, k] if len(self.cloud) else env, self.cloud)

    def to_frame(self) -> pd.DataFrame:
        frame = self.cloud.to_frame()
        for k, r in enumerate(self.radii):
            frame[f"J@{r:.6g}"] = self.values[:, k]
        return frame


def build_strata_table(
    cloud: InterfaceCloud,
    pair: AdmissiblePair,
    radii: Sequence[float],
    region: Optional[tuple] = None,
    workers: int = 1,
) -> StrataTable:
    """
    Args:
        radii: 尺度（低于 4h 的按 4h 取值）
        region: (中心, 半径)，只保留区域内的点；另外丢弃最大尺度的球超出求解区域的点
    """
    radii = np.sort(np.asarray(radii, dtype=float))
    if region is not None:
        cloud = cloud.within(*region)
    r_top = max(float(radii[-1]), pair.grid.resolution_floor)
    fits = np.array([pair.available_radius(p) >= r_top - 1e-9 * pair.grid.spacing for p in cloud.points], dtype=bool)
    excluded = int((~fits).sum()) if len(fits) else 0
    if excluded:
        logger.warning(f"⚠️ {excluded} 个界面点的球超出求解区域，已排除")
        cloud = cloud.subset(fits)

    def row(p):
        return [acf_value_resolved(pair, p, r) for r in radii]

    values = np.array(parallel_map(row, cloud.points, workers), dtype=float).reshape(len(cloud), len(radii))
    return StrataTable(cloud, radii, values, excluded)


def select_stratum(cloud: InterfaceCloud, pair: AdmissiblePair, epsilon: float, r: float, workers: int = 1) -> StratumSelection:
    return build_strata_table(cloud, pair, [r], workers=workers).select(epsilon, r)


# ==================== β 数 ====================

@dataclass(frozen=True)
class BetaResult:
    beta2: float
    normal: Optional[tuple]
    offset: float
    mass: float


def _orient(normal: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(normal)))
    return normal if normal[k] >= 0 else -normal


def beta_number(measure: InterfaceCloud, x, r: float) -> BetaResult:
    """
    β²(x, r) = inf_L ∫_{B_r(x)} d(y, L)² / r² dμ(y) / r^{n-1}

    最优超平面过 μ⌞B_r(x) 的质心，法向为加权二阶矩张量最小特征值方向。
    球内无质量时 β² = 0。
    """
    if r <= 0:
        raise ValueError(f"半径必须为正，收到 {r}")
    idx = measure.ball(x, r)
    if len(idx) == 0:
        return BetaResult(0.0, None, 0.0, 0.0)
    pts = measure.points[idx]
    w = measure.weights[idx]
    mass = float(w.sum())
    centroid = (w[:, None] * pts).sum(axis=0) / mass
    d = pts - centroid
    moment = (w[:, None] * d).T @ d
    evals, evecs = np.linalg.eigh(moment)
    normal = _orient(evecs[:, 0])
    beta2 = max(float(evals[0]), 0.0) / r ** (measure.dim + 1)
    return BetaResult(beta2, tuple(float(c) for c in normal), float(normal @ centroid), mass)


def random_plane_oracle(measure: InterfaceCloud, x, r: float, trials: int = 10000, seed: int = 0) -> BetaResult:
    """随机超平面暴力搜索 β² 的上界，用于核对闭式解"""
    idx = measure.ball(x, r)
    if len(idx) == 0:
        return BetaResult(0.0, None, 0.0, 0.0)
    rng = np.random.default_rng(seed)
    n = measure.dim
    normals = rng.normal(size=(trials, n))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    offsets = normals @ np.asarray(x, dtype=float) + r * rng.uniform(-1.0, 1.0, size=trials)
    pts = measure.points[idx]
    w = measure.weights[idx]
    best, best_k = math.inf, 0
    for start in range(0, trials, 1024):
        sl = slice(start, start + 1024)
        dist = pts @ normals[sl].T - offsets[sl]
        cost = w @ (dist * dist)
        k = int(np.argmin(cost))
        if cost[k] < best:
            best, best_k = float(cost[k]), start + k
    return BetaResult(best / r ** (n + 1), tuple(float(c) for c in _orient(normals[best_k])),
                      float(offsets[best_k]), float(w.sum()))


@dataclass
class BetaTable:
    centers: np.ndarray
    radii: np.ndarray
    beta2: np.ndarray
    normals: np.ndarray
    offsets: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        dim = self.centers.shape[1]
        rows = []
        for i, c in enumerate(self.centers):
            for j, r in enumerate(self.radii):
                row = {f"x{a + 1}": c[a] for a in range(dim)}
                row.update({"r": r, "beta2": self.beta2[i, j]})
                row.update({f"n{a + 1}": self.normals[i, j, a] for a in range(dim)})
                row["offset"] = self.offsets[i, j]
                rows.append(row)
        return pd.DataFrame(rows)


def beta_table(measure: InterfaceCloud, centers, radii: Sequence[float], workers: int = 1) -> BetaTable:
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = np.asarray(radii, dtype=float)
    jobs = [(c, r) for c in centers for r in radii]
    results = parallel_map(lambda job: beta_number(measure, *job), jobs, workers)
    shape = (len(centers), len(radii))
    dim = centers.shape[1]
    beta2 = np.array([res.beta2 for res in results]).reshape(shape)
    normals = np.array([res.normal if res.normal is not None else (np.nan,) * dim for res in results]).reshape(shape + (dim,))
    offsets = np.array([res.offset for res in results]).reshape(shape)
    return BetaTable(centers, radii, beta2, normals, offsets)


@dataclass(frozen=True)
class SquareSumReport:
    total: float
    scale: float
    terms: tuple

    @property
    def ratio(self) -> float:
        return self.total / self.scale if self.scale > 0 else math.inf

    def to_dict(self) -> dict:
        return {"total": self.total, "scale": self.scale, "ratio": self.ratio, "terms": list(self.terms)}


def square_function_sum(measure: InterfaceCloud, x, r: float, ladder: Sequence[float]) -> SquareSumReport:
    """Σ_{r_j <= 2r} ∫_{B_r(x)} β²(z, r_j) dμ(z)，同时给出 r^{n-1}"""
    idx = measure.ball(x, r)
    terms = []
    for rj in sorted((float(s) for s in ladder), reverse=True):
        if rj > 2 * r * (1 + 1e-12):
            continue
        term = sum(measure.weights[i] * beta_number(measure, measure.points[i], rj).beta2 for i in idx)
        terms.append((rj, float(term)))
    total = float(sum(t for _, t in terms))
    return SquareSumReport(total, r ** (measure.dim - 1), tuple(terms))


@dataclass(frozen=True)
class SubspaceReport:
    center: tuple
    r: float
    gate_log_drop: float
    kappa: float
    gated_out: bool
    left: Optional[float] = None
    right: Optional[float] = None

    @property
    def ratio(self) -> Optional[float]:
        if self.gated_out:
            return None
        if self.right > 0:
            return self.left / self.right
        return 0.0 if self.left <= 1e-14 else math.inf

    def to_dict(self) -> dict:
        return {"center": list(self.center), "r": self.r, "gate_log_drop": self.gate_log_drop,
                "kappa": self.kappa, "gated_out": self.gated_out,
                "left": self.left, "right": self.right, "ratio": self.ratio}


def l2_subspace_inequality_probe(
    pair: AdmissiblePair,
    measure: InterfaceCloud,
    x,
    r: float,
    kappa: float = 1.0,
) -> SubspaceReport:
    """
    左边 β²_μ(x, r)，右边 r^{1-n} ∫_{B_r(x)} log(J_y(8r)/J_y(r)) dμ(y)

    门限 log(J_x(8r)/J_x(r)) < κ 不满足时返回 gated_out 报告。
    """
    x = np.asarray(x, dtype=float)
    if r < pair.grid.resolution_floor * (1 - 1e-9):
        raise UnderResolvedScaleError(f"r = {r:.4g} 小于分辨率下限")
    gate = log_drop(acf_value_resolved(pair, x, 8 * r), acf_value_resolved(pair, x, r))
    center = tuple(float(c) for c in x)
    if not gate < kappa:
        return SubspaceReport(center, r, gate, kappa, True)
    left = beta_number(measure, x, r).beta2
    idx = measure.ball(x, r)
    integral = 0.0
    for i in idx:
        y = measure.points[i]
        integral += measure.weights[i] * log_drop(acf_value_resolved(pair, y, 8 * r), acf_value_resolved(pair, y, r))
    right = integral / r ** (measure.dim - 1)
    report = SubspaceReport(center, r, gate, kappa, False, left, right)
    if math.isinf(report.ratio):
        logger.warning(f"⚠️ 右边为 0 而 β² = {left:.3e} (x={list(center)}, r={r:.4g})")
    return report


def packing_measure(cover) -> InterfaceCloud:
    """覆盖 {B_{r_x}(x)} 的 (n-1) 维填充测度 Σ r_x^{n-1} δ_x"""
    centers = np.atleast_2d(np.asarray(cover.centers, dtype=float))
    radii = np.asarray(cover.radii, dtype=float)
    if len(radii) == 0:
        return _empty_cloud(centers.shape[1] if centers.size else 2, "packing")
    return InterfaceCloud(centers, radii ** (centers.shape[1] - 1), "packing")


# ==================== CSV ====================

def write_cloud_csv(path, cloud: InterfaceCloud):
    cloud.to_frame().to_csv(path, index=False, float_format="%.17g")


def read_cloud_csv(path, provenance: str = "") -> InterfaceCloud:
    frame = pd.read_csv(path)
    coords = sorted((c for c in frame.columns if c.startswith("x")), key=lambda c: int(c[1:]))
    return InterfaceCloud(frame[coords].to_numpy(), frame["weight"].to_numpy(), provenance or str(path))


def write_beta_csv(path, table: BetaTable):
    table.to_frame().to_csv(path, index=False, float_format="%.12g")
