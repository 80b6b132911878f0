# fields.py
"""
网格、网格函数与离散算子

- Grid: 均匀直角网格（原点、步长、各轴节点数）
- GridField: 网格节点上的只读标量场
- 中心差分梯度、(2n+1) 点拉普拉斯、球域求积
- validate_pair: 检查 (u, v) 是否为容许对（非负、支集不交、各自在正集上离散次调和）
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from errors import (
    DomainError,
    IncompatibleGridError,
    OutOfStencilError,
    UnderResolvedScaleError,
)
from utils import unit_ball_volume

logger = logging.getLogger(__name__)

# 可分辨的最小半径 = RESOLUTION_CELLS * h
RESOLUTION_CELLS = 4
WEIGHTINGS = ("center", "exact", "supersample")


@dataclass(frozen=True)
class Grid:
    dim: int
    origin: tuple
    spacing: float
    counts: tuple

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if self.dim < 2:
            raise ValueError(f"维数必须 >= 2，收到 {self.dim}")
        if len(self.origin) != self.dim or len(self.counts) != self.dim:
            raise ValueError("origin/counts 长度与维数不一致")
        if not self.spacing > 0:
            raise ValueError(f"步长必须为正，收到 {self.spacing}")
        if min(self.counts) < 3:
            raise ValueError(f"每个轴至少 3 个节点，收到 {self.counts}")

    @classmethod
    def centered(cls, dim: int, half_width: float, nodes: int) -> "Grid":
        """以原点为中心、覆盖 [-half_width, half_width]^dim 的网格"""
        spacing = 2.0 * half_width / (nodes - 1)
        return cls(dim, (-half_width,) * dim, spacing, (nodes,) * dim)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def lower(self) -> np.ndarray:
        return np.array(self.origin)

    @property
    def upper(self) -> np.ndarray:
        return self.lower + self.spacing * (np.array(self.counts) - 1)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def resolution_floor(self) -> float:
        return RESOLUTION_CELLS * self.spacing

    @property
    def inscribed_radius(self) -> float:
        return float(np.min(self.upper - self.lower) / 2)

    def coordinates(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing * np.arange(self.counts[axis])

    def mesh(self) -> list:
        return np.meshgrid(*[self.coordinates(a) for a in range(self.dim)], indexing="ij")

    def points(self) -> np.ndarray:
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def node_position(self, index) -> np.ndarray:
        return self.lower + self.spacing * np.asarray(index, dtype=float)

    def nearest_node(self, point) -> tuple:
        idx = np.rint((np.asarray(point, dtype=float) - self.lower) / self.spacing).astype(int)
        return tuple(int(i) for i in idx)

    def covers_ball(self, center, radius: float) -> bool:
        c = np.asarray(center, dtype=float)
        tol = 1e-9 * self.spacing
        return bool(np.all(c - radius >= self.lower - tol) and np.all(c + radius <= self.upper + tol))

    def distances_from(self, point) -> np.ndarray:
        """每个节点到 point 的距离，形状为 counts"""
        p = np.asarray(point, dtype=float)
        d2 = 0.0
        for a in range(self.dim):
            shape = [1] * self.dim
            shape[a] = self.counts[a]
            d2 = d2 + ((self.coordinates(a) - p[a]) ** 2).reshape(shape)
        return np.sqrt(np.broadcast_to(d2, self.counts))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "origin": list(self.origin), "spacing": self.spacing, "counts": list(self.counts)}


@dataclass(frozen=True, eq=False)
class GridField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.size != self.grid.size:
            raise ValueError(f"数值个数 {arr.size} 与网格节点数 {self.grid.size} 不一致")
        arr = arr.reshape(self.grid.counts)
        if not np.all(np.isfinite(arr)):
            raise ValueError("场中存在非有限值")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "GridField":
        """fn 接收各轴坐标网格 (x1, ..., xn)，返回节点值"""
        return cls(grid, np.broadcast_to(fn(*grid.mesh()), grid.counts))

    @classmethod
    def zeros(cls, grid: Grid) -> "GridField":
        return cls(grid, np.zeros(grid.counts))

    @property
    def max(self) -> float:
        return float(self.values.max())

    def scaled(self, c: float) -> "GridField":
        return GridField(self.grid, c * self.values)

    @cached_property
    def energy_density(self) -> np.ndarray:
        return gradient_energy_density(self)

    @cached_property
    def _interpolator(self) -> RegularGridInterpolator:
        axes = tuple(self.grid.coordinates(a) for a in range(self.grid.dim))
        return RegularGridInterpolator(axes, self.values, method="linear", bounds_error=True)

    def interpolate(self, points) -> np.ndarray:
        """多线性插值；点超出网格时抛出 DomainError"""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        try:
            return self._interpolator(pts)
        except ValueError as e:
            raise DomainError(f"插值点超出网格范围: {e}") from e


def _axis_slice(ndim: int, axis: int, sl: slice) -> tuple:
    out = [slice(None)] * ndim
    out[axis] = sl
    return tuple(out)


def _check_stencil(f: GridField, node) -> tuple:
    idx = tuple(int(i) for i in node)
    if len(idx) != f.grid.dim:
        raise ValueError(f"节点索引维数 {len(idx)} 与网格维数 {f.grid.dim} 不一致")
    for a, i in enumerate(idx):
        if i < 1 or i > f.grid.counts[a] - 2:
            raise OutOfStencilError(f"节点 {idx} 位于网格边界，模板越界")
    return idx


def discrete_gradient(f: GridField, node) -> np.ndarray:
    """中心差分梯度 (f(node+e_i) - f(node-e_i)) / 2h"""
    idx = _check_stencil(f, node)
    h = f.grid.spacing
    grad = np.empty(f.grid.dim)
    for a in range(f.grid.dim):
        plus = list(idx)
        minus = list(idx)
        plus[a] += 1
        minus[a] -= 1
        grad[a] = (f.values[tuple(plus)] - f.values[tuple(minus)]) / (2 * h)
    return grad


def discrete_laplacian(f: GridField, node) -> float:
    """(2n+1) 点模板 Σ_i (f(node+e_i) + f(node-e_i) - 2 f(node)) / h²"""
    idx = _check_stencil(f, node)
    h = f.grid.spacing
    center = f.values[idx]
    total = 0.0
    for a in range(f.grid.dim):
        plus = list(idx)
        minus = list(idx)
        plus[a] += 1
        minus[a] -= 1
        total += f.values[tuple(plus)] + f.values[tuple(minus)] - 2 * center
    return float(total / (h * h))


def laplacian_field(f: GridField) -> np.ndarray:
    """所有内部节点的离散拉普拉斯，边界层为 NaN"""
    v = f.values
    n = f.grid.dim
    core = tuple(slice(1, -1) for _ in range(n))
    acc = np.zeros(tuple(c - 2 for c in f.grid.counts))
    for a in range(n):
        plus = list(core)
        minus = list(core)
        plus[a] = slice(2, None)
        minus[a] = slice(0, -2)
        acc += v[tuple(plus)] + v[tuple(minus)] - 2 * v[core]
    out = np.full(f.grid.counts, np.nan)
    out[core] = acc / f.grid.spacing ** 2
    return out


def gradient_energy_density(f: GridField) -> np.ndarray:
    """
    单元中心处多线性插值函数的梯度平方 |∇f|²

    沿轴 a 的偏导取该单元 2^(n-1) 条 a 向棱上差商的平均。
    对仿射函数以及折线位于网格超平面上的截断线性函数是精确的。

    Returns:
        np.ndarray: 形状为 counts - 1 的单元数组
    """
    v = f.values
    n = f.grid.dim
    h = f.grid.spacing
    total = None
    for axis in range(n):
        d = np.diff(v, axis=axis) / h
        for other in range(n):
            if other == axis:
                continue
            d = 0.5 * (d[_axis_slice(n, other, slice(None, -1))] + d[_axis_slice(n, other, slice(1, None))])
        total = d * d if total is None else total + d * d
    return total


def _quadrant_area(x, y, r):
    # ∫_0^x ∫_0^y 1{s²+t² <= r²} dt ds，对每个自变量奇延拓
    sx, sy = np.sign(x), np.sign(y)
    x = np.minimum(np.abs(x), r)
    y = np.minimum(np.abs(y), r)
    inside = x * x + y * y <= r * r
    xs = np.minimum(np.sqrt(np.maximum(r * r - y * y, 0.0)), x)

    def primitive(s):
        return 0.5 * (s * np.sqrt(np.maximum(r * r - s * s, 0.0)) + r * r * np.arcsin(np.clip(s / r, -1.0, 1.0)))

    partial = xs * y + primitive(x) - primitive(xs)
    return sx * sy * np.where(inside, x * y, partial)


def _disc_cell_fraction(rel0, rel1, h, r):
    """二维：单元 [rel0±h/2]×[rel1±h/2] 与圆盘 B_r(0) 交集的面积占比"""
    x0, x1 = rel0 - h / 2, rel0 + h / 2
    y0, y1 = rel1 - h / 2, rel1 + h / 2
    area = (_quadrant_area(x1, y1, r) - _quadrant_area(x0, y1, r)
            - _quadrant_area(x1, y0, r) + _quadrant_area(x0, y0, r))
    return np.clip(area / (h * h), 0.0, 1.0)


def _supersample_fraction(rel, h, r, m):
    frac = np.zeros(rel[0].shape)
    offsets = ((np.arange(m) + 0.5) / m - 0.5) * h
    for combo in itertools.product(offsets, repeat=len(rel)):
        d2 = sum((rel[a] + combo[a]) ** 2 for a in range(len(rel)))
        frac += d2 <= r * r
    return frac / m ** len(rel)


def ball_integral(
    grid: Grid,
    integrand,
    center,
    radius: float,
    kernel: Optional[str] = None,
    weighting: str = "center",
    supersample: int = 4,
) -> float:
    """
    球域中点求积 Σ f · kernel · w · h^n

    Args:
        grid: 网格
        integrand: 常数、形状为 counts-1 的单元数组，或接收 (m, n) 点数组的函数
        center: 球心
        radius: 半径，必须 >= 4h
        kernel: None 或 "newton"（|x-y|^(2-n)，含奇点的单元用等体积球上的精确平均代替）
        weighting: "center" 按单元中心判定归属；"exact" 二维用单元与圆盘交集的精确面积；
                   "supersample" 用 m^n 个子单元中心计数
        supersample: 子采样数 m

    Returns:
        float: 积分值
    """
    if weighting not in WEIGHTINGS:
        raise ValueError(f"未知的 weighting: {weighting}")
    h = grid.spacing
    n = grid.dim
    if radius < grid.resolution_floor * (1 - 1e-9):
        raise UnderResolvedScaleError(f"半径 {radius:.6g} 小于分辨率下限 4h = {grid.resolution_floor:.6g}")
    c = np.asarray(center, dtype=float)
    if not grid.covers_ball(c, radius):
        raise DomainError(f"球 B({c.tolist()}, {radius:.6g}) 超出网格覆盖范围")

    # 与球相交的单元子块
    box = []
    rel = []
    for a in range(n):
        lo = max(0, int(math.floor((c[a] - radius - grid.origin[a]) / h)))
        hi = min(grid.counts[a] - 1, int(math.ceil((c[a] + radius - grid.origin[a]) / h)))
        box.append(slice(lo, hi))
        centers = grid.origin[a] + h * (np.arange(lo, hi) + 0.5)
        shape = [1] * n
        shape[a] = hi - lo
        rel.append((centers - c[a]).reshape(shape))
    box = tuple(box)
    sub_shape = tuple(s.stop - s.start for s in box)
    rel = [np.broadcast_to(r_a, sub_shape) for r_a in rel]
    dist = np.sqrt(sum(r_a ** 2 for r_a in rel))

    if weighting == "center":
        w = (dist <= radius).astype(float)
    elif weighting == "exact" and n == 2:
        w = _disc_cell_fraction(rel[0], rel[1], h, radius)
    else:
        w = _supersample_fraction(rel, h, radius, supersample)

    if callable(integrand):
        vals = np.zeros(sub_shape)
        mask = w > 0
        pts = np.stack([r_a[mask] + c[a] for a, r_a in enumerate(rel)], axis=1)
        vals[mask] = integrand(pts)
    elif np.isscalar(integrand):
        vals = float(integrand)
    else:
        vals = np.asarray(integrand)[box]

    if kernel is None or n == 2:
        k = 1.0
    elif kernel == "newton":
        with np.errstate(divide="ignore"):
            k = dist ** (2 - n)
        # 含奇点的单元：等体积球上 |y|^(2-n) 的平均 (n/2) ρ^(2-n)
        rho = h * unit_ball_volume(n) ** (-1.0 / n)
        sing = tuple(int(math.floor((c[a] - grid.origin[a]) / h)) - box[a].start for a in range(n))
        if all(0 <= sing[a] < sub_shape[a] for a in range(n)):
            k[sing] = (n / 2.0) * rho ** (2 - n)
    else:
        raise ValueError(f"未知的 kernel: {kernel}")

    return float(np.sum(w * vals * k) * h ** n)


@dataclass(frozen=True)
class ValidationTolerances:
    negative_rel: float = 1e-12
    disjoint_rel: float = 1e-12
    subharmonic: float = 1e-6

    @classmethod
    def from_settings(cls, settings: dict) -> "ValidationTolerances":
        tol = (settings or {}).get("tolerances", {})
        return cls(
            negative_rel=float(tol.get("negative_rel", cls.negative_rel)),
            disjoint_rel=float(tol.get("disjoint_rel", cls.disjoint_rel)),
            subharmonic=float(tol.get("subharmonic", cls.subharmonic)),
        )


@dataclass(frozen=True)
class ValidationReport:
    max_negative_value: float
    max_product: float
    worst_superharmonic_defect: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "max_negative_value": self.max_negative_value,
            "max_product": self.max_product,
            "worst_superharmonic_defect": self.worst_superharmonic_defect,
            "pass": self.passed,
        }


@dataclass(frozen=True, eq=False)
class AdmissiblePair:
    u: GridField
    v: GridField
    report: ValidationReport
    domain_radius: Optional[float] = None
    meta: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.u.grid

    @property
    def dim(self) -> int:
        return self.u.grid.dim

    def domain_mask(self) -> np.ndarray:
        if self.domain_radius is None:
            return np.ones(self.grid.counts, dtype=bool)
        return self.grid.distances_from(self.grid.center) <= self.domain_radius + 1e-9 * self.grid.spacing

    def available_radius(self, x) -> float:
        """以 x 为心、仍落在求解区域（或网格）内的最大半径"""
        x = np.asarray(x, dtype=float)
        box = float(min(np.min(x - self.grid.lower), np.min(self.grid.upper - x)))
        if self.domain_radius is None:
            return box
        return min(box, self.domain_radius - float(np.linalg.norm(x - self.grid.center)))

    def check_ball(self, x, r: float):
        if r > self.available_radius(x) + 1e-9 * self.grid.spacing:
            raise DomainError(f"球 B({np.asarray(x).tolist()}, {r:.6g}) 超出求解区域")

    def swapped(self) -> "AdmissiblePair":
        return AdmissiblePair(self.v, self.u, self.report, self.domain_radius, dict(self.meta))


def validate_pair(
    u: GridField,
    v: GridField,
    tolerances: Optional[ValidationTolerances] = None,
    domain_radius: Optional[float] = None,
    meta: Optional[dict] = None,
) -> AdmissiblePair:
    """
    检查 (u, v) 的容许性并返回带报告的 AdmissiblePair，不修改输入

    Args:
        u, v: 同一网格上的场
        tolerances: 容差；τ_disj 与负值容差相对于 max u · max v，τ_sub 以 h⁻²·max 为单位
        domain_radius: 求解区域半径（以网格中心为心），区域外节点视为边界数据不参与检查

    Returns:
        AdmissiblePair
    """
    if u.grid != v.grid:
        raise IncompatibleGridError(f"u 与 v 网格不一致: {u.grid} vs {v.grid}")
    tol = tolerances or ValidationTolerances()
    grid = u.grid
    pair = AdmissiblePair(u, v, None, domain_radius, dict(meta or {}))
    mask = pair.domain_mask()

    su = float(u.values[mask].max(initial=0.0))
    sv = float(v.values[mask].max(initial=0.0))
    max_negative = float(max(0.0, -u.values[mask].min(initial=0.0), -v.values[mask].min(initial=0.0)))
    max_product = float(np.max(u.values[mask] * v.values[mask], initial=0.0))

    interior = np.zeros(grid.counts, dtype=bool)
    interior[tuple(slice(1, -1) for _ in range(grid.dim))] = True
    worst = 0.0
    for f, scale in ((u, su), (v, sv)):
        if scale <= 0:
            continue
        lap = laplacian_field(f)
        check = mask & interior & (f.values > 0)
        if np.any(check):
            defect = float(np.max(-lap[check]) * grid.spacing ** 2 / scale)
            worst = max(worst, defect, 0.0)

    scale = max(su, sv, 1e-300)
    passed = (
        max_negative <= tol.negative_rel * scale
        and max_product <= tol.disjoint_rel * su * sv
        and worst <= tol.subharmonic
    )
    report = ValidationReport(max_negative, max_product, worst, bool(passed))
    if not passed:
        logger.warning(
            f"⚠️ 容许性检查未通过: 负值 {max_negative:.3g}, 乘积 {max_product:.3g}, 次调和缺陷 {worst:.3g}"
        )
    return AdmissiblePair(u, v, report, domain_radius, dict(meta or {}))
