# generators.py
"""
容许对生成器

- make_truncated_linear_pair: 精确的截断线性对 u = a((y-x)·ν)⁺, v = b((y-x)·ν)⁻
- rasterize_interface: 把二维界面曲线（直线、楔形、对数螺旋替身、Koch 前缀、改进 Koch）
  栅格化为节点标签 Ω⁺ / Ω⁻ / Γ
- solve_two_sided_harmonic: 在两侧区域上解离散拉普拉斯方程（红黑 SOR 或稀疏直接法）
- make_spiral_pair / make_pair: 组合入口
"""

import cmath
import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.linalg import spsolve

from errors import DegenerateInterfaceError, DomainError, SolverStallError
from fields import AdmissiblePair, Grid, GridField, ValidationTolerances, validate_pair
from utils import rotation_2d

logger = logging.getLogger(__name__)

CURVE_KINDS = ("line", "wedge", "spiral", "koch", "modkoch")
WEDGE_PROFILES = ("abs", "power", "nondini")
SOLVER_METHODS = ("sor", "direct")

# 与外边界不连通且不超过该节点数的孤立区域并入 Γ
MAX_POCKET_NODES = 16


# ==================== 精确截断线性对 ====================

@dataclass(frozen=True)
class TruncatedLinearPairSpec:
    a: float
    b: float
    nu: tuple
    center: Optional[tuple] = None

    def __post_init__(self):
        nu = tuple(float(c) for c in self.nu)
        object.__setattr__(self, "nu", nu)
        if abs(math.sqrt(sum(c * c for c in nu)) - 1.0) > 1e-12:
            raise ValueError(f"ν 必须为单位向量，|ν| = {math.sqrt(sum(c * c for c in nu))}")
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"斜率必须为正: a={self.a}, b={self.b}")
        center = self.center if self.center is not None else (0.0,) * len(nu)
        if len(center) != len(nu):
            raise ValueError("center 与 ν 维数不一致")
        object.__setattr__(self, "center", tuple(float(c) for c in center))

    @classmethod
    def from_angle(cls, a: float, b: float, theta: float, center=(0.0, 0.0)) -> "TruncatedLinearPairSpec":
        # cos(π/2) 之类的舍入残差置零，保证轴对齐时支集精确
        nu = tuple(0.0 if abs(c) < 1e-15 else c for c in (math.cos(theta), math.sin(theta)))
        return cls(a, b, nu, center)

    @property
    def dim(self) -> int:
        return len(self.nu)

    def signed_distance(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (pts - np.array(self.center)) @ np.array(self.nu)

    def evaluate(self, points):
        s = self.signed_distance(points)
        return self.a * np.maximum(s, 0.0), self.b * np.maximum(-s, 0.0)

    def to_dict(self) -> dict:
        return {"kind": "linear", "a": self.a, "b": self.b, "nu": list(self.nu), "center": list(self.center)}


def make_truncated_linear_pair(
    spec: TruncatedLinearPairSpec,
    grid: Grid,
    tolerances: Optional[ValidationTolerances] = None,
    domain_radius: Optional[float] = None,
) -> AdmissiblePair:
    """在网格节点上精确采样截断线性对并验证"""
    if spec.dim != grid.dim:
        raise ValueError(f"ν 维数 {spec.dim} 与网格维数 {grid.dim} 不一致")
    c = np.array(spec.center)
    if np.any(c < grid.lower) or np.any(c > grid.upper):
        raise DomainError(f"中心 {spec.center} 不在网格内")
    s = sum((m - x) * n for m, x, n in zip(grid.mesh(), spec.center, spec.nu))
    u = GridField(grid, spec.a * np.maximum(s, 0.0))
    v = GridField(grid, spec.b * np.maximum(-s, 0.0))
    return validate_pair(u, v, tolerances, domain_radius, meta=spec.to_dict())


# ==================== 界面曲线 ====================

@dataclass(frozen=True)
class InterfaceCurveSpec:
    """
    二维界面曲线描述（局部坐标），再经刚体运动 (angle, shift) 放入网格

    - line: x₂ = 0，Ω⁺ 在上方
    - wedge: x₂ = f(x₁)，profile ∈ {abs: s|t|, power: s|t|^p, nondini: s|t|/sqrt(1+log(1+1/|t|))}
    - spiral: 半径 ρ 处界面为方向角 θ(ρ) = λ·log log(1/ρ) 的直径（ρ < 1/e），外部 θ = 0
    - koch: 两段深度 k 的 Koch 曲线 (-L,0)→(0,0)→(L,0)，凸起朝 +x₂，两端直线延伸
    - modkoch: 按迭代预算逐段构造，保留其余线段为直线，只在中间一段上继续迭代
    """
    kind: str
    slope: float = 0.0
    profile: str = "abs"
    power: float = 2.0
    rate: float = 0.0
    depth: int = 4
    budget: tuple = ()
    extent: float = 0.9
    angle: float = 0.0
    shift: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in CURVE_KINDS:
            raise ValueError(f"未知的曲线类型: {self.kind}")
        if self.profile not in WEDGE_PROFILES:
            raise ValueError(f"未知的楔形剖面: {self.profile}")
        if self.slope < 0 or self.rate < 0 or self.depth < 0:
            raise ValueError("slope / rate / depth 必须非负")
        if not 0 < self.extent < 1:
            raise ValueError("extent 必须在 (0, 1) 内")
        object.__setattr__(self, "budget", tuple(int(m) for m in self.budget))
        object.__setattr__(self, "shift", tuple(float(s) for s in self.shift))

    def profile_value(self, t) -> np.ndarray:
        t = np.abs(np.asarray(t, dtype=float))
        if self.profile == "abs":
            return self.slope * t
        if self.profile == "power":
            return self.slope * t ** self.power
        with np.errstate(divide="ignore"):
            damp = np.sqrt(1.0 + np.log1p(1.0 / np.where(t > 0, t, 1.0)))
        return np.where(t > 0, self.slope * t / damp, 0.0)

    def spiral_angle(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        inner = (rho > 0) & (rho < 1.0 / math.e)
        safe = np.where(inner, rho, 1.0 / math.e)
        return np.where(inner, self.rate * np.log(np.log(1.0 / safe)), 0.0)

    def to_local(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float)) - np.array(self.shift)
        return pts @ rotation_2d(self.angle)  # R(-angle) p

    def to_global(self, points) -> np.ndarray:
        return np.atleast_2d(points) @ rotation_2d(self.angle).T + np.array(self.shift)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["budget"] = list(self.budget)
        out["shift"] = list(self.shift)
        return out


def koch_points(start, end, depth: int) -> np.ndarray:
    """从 start 到 end 的 Koch 折线（凸起在行进方向左侧）"""
    pts = [complex(*start), complex(*end)]
    turn = cmath.exp(1j * math.pi / 3)
    for _ in range(depth):
        out = []
        for a, b in zip(pts[:-1], pts[1:]):
            d = (b - a) / 3
            out += [a, a + d, a + d + d * turn, a + 2 * d]
        out.append(pts[-1])
        pts = out
    return np.array([[p.real, p.imag] for p in pts])


def modified_koch_points(start, end, budget) -> np.ndarray:
    """每个阶段在当前活动段上做 m_i 次 Koch 迭代，其余线段保留为直线"""
    prefix = [np.asarray(start, dtype=float)]
    suffix = [np.asarray(end, dtype=float)]
    a, b = prefix[0], suffix[0]
    for m in budget:
        pts = koch_points(a, b, m)
        k = (len(pts) - 1) // 2
        prefix += list(pts[1:k + 1])
        suffix = list(pts[k + 1:-1]) + suffix
        a, b = pts[k], pts[k + 1]
    return np.array(prefix + suffix)


def densify(poly: np.ndarray, step: float) -> np.ndarray:
    """在折线上插点，使相邻点间距 <= step"""
    seg = np.diff(poly, axis=0)
    lens = np.linalg.norm(seg, axis=1)
    k = np.maximum(1, np.ceil(lens / step)).astype(int)
    idx = np.repeat(np.arange(len(seg)), k)
    start = np.repeat(np.cumsum(k) - k, k)
    t = (np.arange(k.sum()) - start) / np.repeat(k, k)
    pts = poly[idx] + seg[idx] * t[:, None]
    return np.vstack([pts, poly[-1:]])


def curve_polyline(spec: InterfaceCurveSpec, reach: float, domain_radius: float, step: float) -> np.ndarray:
    """局部坐标下的界面折线，两端延伸到 ±reach"""
    if spec.kind == "line":
        poly = np.array([[-reach, 0.0], [reach, 0.0]])
    elif spec.kind == "wedge":
        t = np.linspace(-reach, reach, 2 * int(math.ceil(reach / step)) + 1)
        poly = np.stack([t, spec.profile_value(t)], axis=1)
    elif spec.kind == "spiral":
        rho = np.unique(np.concatenate([
            np.geomspace(step / 2, reach, 4096),
            np.linspace(0.0, reach, int(math.ceil(reach / step)) + 1),
        ]))
        rho = rho[rho > 0]
        theta = spec.spiral_angle(rho)
        ray = np.stack([rho * np.cos(theta), rho * np.sin(theta)], axis=1)
        poly = np.vstack([-ray[::-1], [[0.0, 0.0]], ray])
    else:
        half = spec.extent * domain_radius
        if spec.kind == "koch":
            left = koch_points((-half, 0.0), (0.0, 0.0), spec.depth)
            right = koch_points((0.0, 0.0), (half, 0.0), spec.depth)
            body = np.vstack([left, right[1:]])
        else:
            body = modified_koch_points((-half, 0.0), (half, 0.0), spec.budget)
        poly = np.vstack([[[-reach, 0.0]], body, [[reach, 0.0]]])
    return densify(poly, step)


def koch_corners(spec: InterfaceCurveSpec, domain_radius: float, level: int = 1) -> np.ndarray:
    """Koch 前缀在 level 层的顶点（在更深层次上仍位于曲线上），已变换到全局坐标"""
    half = spec.extent * domain_radius
    level = min(level, spec.depth)
    left = koch_points((-half, 0.0), (0.0, 0.0), level)
    right = koch_points((0.0, 0.0), (half, 0.0), level)
    return spec.to_global(np.vstack([left, right[1:]]))


def _upward_crossings(points: np.ndarray, poly: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """从每个点向 +x₂ 的射线与折线的交点个数"""
    x1, y1 = poly[:-1, 0], poly[:-1, 1]
    x2, y2 = poly[1:, 0], poly[1:, 1]
    dx = np.where(x2 != x1, x2 - x1, 1.0)
    counts = np.zeros(len(points), dtype=int)
    for s in range(0, len(points), chunk):
        px = points[s:s + chunk, 0:1]
        py = points[s:s + chunk, 1:2]
        spans = ((x1 <= px) & (px < x2)) | ((x2 <= px) & (px < x1))
        y_at = y1 + (px - x1) * (y2 - y1) / dx
        counts[s:s + chunk] = np.sum(spans & (y_at > py), axis=1)
    return counts


def _side_test(spec: InterfaceCurveSpec, local_poly: np.ndarray):
    """返回局部坐标下的 Ω⁺ 判定函数"""
    if spec.kind == "line":
        return lambda p: p[:, 1] > 0
    if spec.kind == "wedge":
        return lambda p: p[:, 1] > spec.profile_value(p[:, 0])
    if spec.kind == "spiral":
        def spiral_side(p):
            psi = np.mod(np.arctan2(p[:, 1], p[:, 0]) - spec.spiral_angle(np.hypot(p[:, 0], p[:, 1])), 2 * np.pi)
            return (psi > 0) & (psi < np.pi)
        return spiral_side
    return lambda p: _upward_crossings(p, local_poly) % 2 == 0


@dataclass(frozen=True, eq=False)
class InterfacePartition:
    grid: Grid
    labels: np.ndarray  # +1 Ω⁺, -1 Ω⁻, 0 Γ
    domain_radius: float
    spec: InterfaceCurveSpec
    pockets: int = 0

    @property
    def domain_mask(self) -> np.ndarray:
        return self.grid.distances_from(self.grid.center) <= self.domain_radius + 1e-9 * self.grid.spacing

    @property
    def gamma_mask(self) -> np.ndarray:
        return self.labels == 0

    def gamma_count(self, box_half_width: Optional[float] = None) -> int:
        """Γ 节点个数；给定 box_half_width 时只统计 |x₁| < box_half_width 的节点"""
        mask = self.gamma_mask & self.domain_mask
        if box_half_width is not None:
            x1 = self.grid.mesh()[0]
            mask &= np.abs(x1) < box_half_width
        return int(mask.sum())


def default_domain_radius(grid: Grid) -> float:
    """网格内切球半径减去两个单元"""
    return grid.inscribed_radius - 2 * grid.spacing


def rasterize_interface(
    spec: InterfaceCurveSpec,
    grid: Grid,
    domain_radius: Optional[float] = None,
    max_pocket: int = MAX_POCKET_NODES,
) -> InterfacePartition:
    """
    把界面曲线栅格化为节点划分 Ω⁺ / Ω⁻ / Γ

    Γ 为曲线上以 h/4 步长采样点的最近节点（8-连通路径）；
    其余节点按 4-连通分量整体归入一侧，侧别由解析判定多数表决。

    Args:
        spec: 曲线描述
        grid: 二维网格
        domain_radius: 求解区域半径，缺省为内切半径 - 2h
        max_pocket: 可并入 Γ 的孤立分量的最大节点数

    Returns:
        InterfacePartition
    """
    if grid.dim != 2:
        raise ValueError("界面栅格化只支持二维网格")
    D = default_domain_radius(grid) if domain_radius is None else float(domain_radius)
    if D <= grid.resolution_floor:
        raise DomainError(f"求解区域半径 {D:.4g} 过小")
    h = grid.spacing
    reach = float(np.max(np.linalg.norm(np.stack([grid.lower, grid.upper]) - np.array(spec.shift), axis=1))) * 1.5 + 2 * h

    local_poly = curve_polyline(spec, reach, D, h / 4)
    samples = spec.to_global(local_poly)
    idx = np.rint((samples - grid.lower) / h).astype(int)
    keep = np.all((idx >= 0) & (idx < np.array(grid.counts)), axis=1)
    gamma = np.zeros(grid.counts, dtype=bool)
    gamma[idx[keep, 0], idx[keep, 1]] = True

    comps, ncomp = ndimage.label(~gamma)
    if ncomp == 0:
        raise DegenerateInterfaceError("栅格化后没有剩余区域")
    flat = comps.ravel()
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(ncomp + 2))
    picks, owners = [], []
    for k in range(1, ncomp + 1):
        members = order[bounds[k]:bounds[k + 1]]
        sel = members[np.unique(np.linspace(0, len(members) - 1, min(len(members), 65)).astype(int))]
        picks.append(sel)
        owners.append(np.full(len(sel), k))
    picks = np.concatenate(picks)
    owners = np.concatenate(owners)
    pts = grid.points()[picks]
    votes = _side_test(spec, local_poly)(spec.to_local(pts)).astype(float)
    plus_share = np.bincount(owners, weights=votes, minlength=ncomp + 1)[1:] / np.bincount(owners, minlength=ncomp + 1)[1:]
    sizes = np.bincount(flat, minlength=ncomp + 1)[1:]

    inside = grid.distances_from(grid.center) <= D + 1e-9 * h
    touches = np.zeros(ncomp + 1, dtype=bool)
    touches[np.unique(comps[~inside])] = True
    touches = touches[1:]

    side = np.where(plus_share >= 0.5, 1, -1).astype(np.int8)
    leaky = (np.minimum(plus_share, 1 - plus_share) > 0.2) & (sizes > max_pocket)
    if np.any(leaky):
        raise DegenerateInterfaceError(f"{int(leaky.sum())} 个连通分量跨越界面两侧，栅格化后曲线不分离区域")
    pockets = ~touches
    if np.any(pockets & (sizes > max_pocket)):
        raise DegenerateInterfaceError(
            f"存在与外边界不连通的区域（最大 {int(sizes[pockets].max())} 个节点），曲线栅格化后自接触"
        )
    side[pockets] = 0
    lookup = np.concatenate([[0], side]).astype(np.int8)
    labels = lookup[comps]

    if not (np.any((labels == 1) & ~inside) and np.any((labels == -1) & ~inside)):
        raise DomainError("Ω⁺ 与 Ω⁻ 必须都触及求解区域外边界")
    if int(pockets.sum()):
        logger.debug(f"{int(pockets.sum())} 个孤立小区域并入 Γ")
    logger.info(f"✅ 界面栅格化完成: {spec.kind}, Γ 节点 {int((labels == 0).sum())} 个")
    return InterfacePartition(grid, labels, D, spec, int(pockets.sum()))


# ==================== 两侧调和求解 ====================

@dataclass(frozen=True)
class SolverConfig:
    max_sweeps: int = 20000
    residual_tol: float = 1e-9
    sweep_order: str = "red-black"
    method: str = "sor"
    omega: Optional[float] = None
    check_every: int = 10

    def __post_init__(self):
        if not self.residual_tol > 0:
            raise ValueError("residual_tol 必须为正")
        if self.sweep_order != "red-black":
            raise ValueError(f"只支持确定性的红黑双色顺序，收到 {self.sweep_order}")
        if self.method not in SOLVER_METHODS:
            raise ValueError(f"未知的求解方法: {self.method}")

    @classmethod
    def from_settings(cls, settings: dict) -> "SolverConfig":
        cfg = (settings or {}).get("solver", {})
        return cls(
            max_sweeps=int(cfg.get("max_sweeps", cls.max_sweeps)),
            residual_tol=float(cfg.get("residual_tol", cls.residual_tol)),
            method=cfg.get("method", cls.method),
            omega=cfg.get("omega"),
            check_every=int(cfg.get("check_every", cls.check_every)),
        )


def _strides(counts) -> list:
    return [int(np.prod(counts[a + 1:])) for a in range(len(counts))]


def _neighbour_sum(flat: np.ndarray, idx: np.ndarray, strides) -> np.ndarray:
    total = np.zeros(len(idx))
    for st in strides:
        total += flat[idx + st] + flat[idx - st]
    return total


def _solve_sor(flat, unknown_idx, grid, cfg, scale):
    strides = _strides(grid.counts)
    two_n = 2 * grid.dim
    parity = np.sum(np.stack(np.unravel_index(unknown_idx, grid.counts)), axis=0) % 2
    colours = [unknown_idx[parity == 0], unknown_idx[parity == 1]]
    omega = cfg.omega or 2.0 / (1.0 + math.sin(math.pi / (max(grid.counts) - 1)))
    residual = math.inf
    for sweep in range(1, cfg.max_sweeps + 1):
        for idx in colours:
            nb = _neighbour_sum(flat, idx, strides)
            flat[idx] += omega * (nb / two_n - flat[idx])
        if sweep % cfg.check_every == 0 or sweep == cfg.max_sweeps:
            residual = float(np.max(np.abs(_neighbour_sum(flat, unknown_idx, strides) - two_n * flat[unknown_idx]),
                                    initial=0.0))
            if residual <= cfg.residual_tol * scale:
                logger.info(f"✅ SOR 收敛: {sweep} 次扫描, 残差 {residual:.3e} (ω={omega:.4f})")
                return flat, residual, sweep
    raise SolverStallError(
        f"SOR 在 {cfg.max_sweeps} 次扫描内未收敛，残差 {residual:.3e}", residual=residual, sweeps=cfg.max_sweeps
    )


def _solve_direct(flat, unknown_idx, grid, cfg, scale):
    strides = _strides(grid.counts)
    m = len(unknown_idx)
    pos = np.full(flat.size, -1)
    pos[unknown_idx] = np.arange(m)
    rows = [np.arange(m)]
    cols = [np.arange(m)]
    vals = [np.full(m, 2.0 * grid.dim)]
    rhs = np.zeros(m)
    for st in strides:
        for sgn in (1, -1):
            nb = unknown_idx + sgn * st
            p = pos[nb]
            known = p >= 0
            rows.append(np.flatnonzero(known))
            cols.append(p[known])
            vals.append(-np.ones(int(known.sum())))
            rhs[~known] += flat[nb[~known]]
    A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m))
    flat[unknown_idx] = spsolve(A.tocsc(), rhs)
    residual = float(np.max(np.abs(_neighbour_sum(flat, unknown_idx, strides) - 2 * grid.dim * flat[unknown_idx]),
                            initial=0.0))
    if residual > cfg.residual_tol * scale:
        raise SolverStallError(f"直接法残差 {residual:.3e} 超过容差", residual=residual, sweeps=0)
    logger.info(f"✅ 稀疏直接法求解完成: {m} 个未知量, 残差 {residual:.3e}")
    return flat, residual, 0


def solve_two_sided_harmonic(
    partition: InterfacePartition,
    boundary_data: float = 1.0,
    cfg: Optional[SolverConfig] = None,
    tolerances: Optional[ValidationTolerances] = None,
) -> AdmissiblePair:
    """
    在 Ω⁺ 与 Ω⁻ 上分别求离散调和函数：Γ 上为 0，区域外 Ω± 节点上为 boundary_data

    两侧属于不同的 4-连通分量，互不相邻，因此可以作为一个场同时求解。

    Returns:
        AdmissiblePair: 零延拓后的 (u, v)，已验证
    """
    cfg = cfg or SolverConfig()
    grid = partition.grid
    if not boundary_data > 0:
        raise ValueError("边界数据必须为正")
    inside = partition.domain_mask
    labels = partition.labels
    unknown = inside & (labels != 0)
    edge = np.ones(grid.counts, dtype=bool)
    edge[tuple(slice(1, -1) for _ in range(grid.dim))] = False
    if np.any(unknown & edge):
        raise DomainError("求解区域触及网格边界")

    w = np.where(~inside & (labels != 0), boundary_data, 0.0).ravel()
    unknown_idx = np.flatnonzero(unknown.ravel())
    solver = _solve_direct if cfg.method == "direct" else _solve_sor
    w, residual, sweeps = solver(w, unknown_idx, grid, cfg, boundary_data)
    w = w.reshape(grid.counts)

    u = GridField(grid, np.where(labels == 1, w, 0.0))
    v = GridField(grid, np.where(labels == -1, w, 0.0))
    meta = partition.spec.to_dict()
    meta.update({"boundary_data": boundary_data, "solver_residual": residual, "solver_sweeps": sweeps,
                 "solver_method": cfg.method})
    return validate_pair(u, v, tolerances, partition.domain_radius, meta=meta)


def make_spiral_pair(
    rate: float,
    grid: Grid,
    cfg: Optional[SolverConfig] = None,
    domain_radius: Optional[float] = None,
    boundary_data: float = 1.0,
    **placement,
) -> AdmissiblePair:
    """
    对数-对数旋转螺旋替身：界面方向角 θ(r) = λ·log log(1/r)

    Args:
        placement: InterfaceCurveSpec 的 angle / shift / extent
    """
    spec = InterfaceCurveSpec(kind="spiral", rate=rate, **placement)
    partition = rasterize_interface(spec, grid, domain_radius)
    return solve_two_sided_harmonic(partition, boundary_data, cfg)


def make_pair(
    kind: str,
    grid: Grid,
    cfg: Optional[SolverConfig] = None,
    domain_radius: Optional[float] = None,
    **params,
) -> AdmissiblePair:
    """
    按类型构造容许对

    Args:
        kind: linear | line | wedge | spiral | koch | modkoch
        params: linear 取 a, b, theta（或 nu）, center；其余类型为 InterfaceCurveSpec 字段

    Returns:
        AdmissiblePair
    """
    if kind == "linear":
        a = float(params.get("a", 1.0))
        b = float(params.get("b", 1.0))
        center = tuple(params.get("center", (0.0,) * grid.dim))
        if "nu" in params:
            spec = TruncatedLinearPairSpec(a, b, tuple(params["nu"]), center)
        else:
            spec = TruncatedLinearPairSpec.from_angle(a, b, math.radians(float(params.get("theta_deg", 90.0))), center)
        return make_truncated_linear_pair(spec, grid, domain_radius=domain_radius)
    if kind not in CURVE_KINDS:
        raise ValueError(f"未知的生成器类型: {kind}")
    fields_ = {k: v for k, v in params.items() if k in InterfaceCurveSpec.__dataclass_fields__}
    boundary_data = float(params.get("boundary_data", 1.0))
    if kind == "spiral":
        placement = {k: v for k, v in fields_.items() if k in ("angle", "shift", "extent")}
        return make_spiral_pair(float(fields_.get("rate", 0.0)), grid, cfg, domain_radius, boundary_data, **placement)
    spec = InterfaceCurveSpec(kind=kind, **fields_)
    partition = rasterize_interface(spec, grid, domain_radius)
    return solve_two_sided_harmonic(partition, boundary_data, cfg)
