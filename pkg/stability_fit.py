# stability_fit.py
"""
截断线性对拟合

在环域 ρ <= |y-x| < R 上求
    min_{a,b>=0, |ν|=1} ∫ (u - a((y-x)·ν)⁺)² + (v - b((y-x)·ν)⁻)²
固定 ν 时 a、b 有闭式解，ν 先粗网格搜索再局部细化。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import minimize_scalar

from acf_functional import acf_value_resolved, log_drop
from errors import DegenerateFitError, DomainError, NoQualifyingCentersError, UnderResolvedScaleError
from fields import AdmissiblePair

logger = logging.getLogger(__name__)

ANGLE_GRID = 256
ANGLE_TOL = 1e-6
SEED_WINDOW = math.pi / 4
SPHERE_LATTICE = 9
SPHERE_LEVELS = 3
_CHUNK = 32


@dataclass(frozen=True)
class TruncatedLinearFit:
    a: float
    b: float
    nu: tuple
    center: tuple
    rho: float
    R: float
    residual: float
    u_norm: float
    v_norm: float
    region_energy: float = 0.0

    @property
    def angle(self) -> Optional[float]:
        if len(self.nu) != 2:
            return None
        return math.atan2(self.nu[1], self.nu[0])

    @property
    def product(self) -> float:
        return self.a * self.b

    @property
    def relative_residual(self) -> float:
        return self.residual / self.region_energy if self.region_energy > 0 else 0.0

    def evaluate(self, points):
        """拟合出的 (a s⁺, b s⁻)，s = (y - center)·ν"""
        s = (np.atleast_2d(points) - np.array(self.center)) @ np.array(self.nu)
        return self.a * np.maximum(s, 0.0), self.b * np.maximum(-s, 0.0)

    def to_dict(self) -> dict:
        return {
            "a": self.a, "b": self.b, "nu": list(self.nu), "center": list(self.center),
            "rho": self.rho, "R": self.R, "residual": self.residual,
            "u_norm": self.u_norm, "v_norm": self.v_norm,
            "angle": self.angle, "product": self.product,
            "relative_residual": self.relative_residual,
        }


@dataclass
class _Samples:
    rel: np.ndarray
    dist: np.ndarray
    u: np.ndarray
    v: np.ndarray
    weight: float

    def restrict(self, mask: np.ndarray) -> "_Samples":
        return _Samples(self.rel[mask], self.dist[mask], self.u[mask], self.v[mask], self.weight)


def _ball_samples(pair: AdmissiblePair, x: np.ndarray, R: float) -> _Samples:
    """B_R(x) 内的网格节点，权重 h^n"""
    grid = pair.grid
    h = grid.spacing
    lo = np.maximum(np.floor((x - R - grid.lower) / h).astype(int), 0)
    hi = np.minimum(np.ceil((x + R - grid.lower) / h).astype(int), np.array(grid.counts) - 1)
    sl = tuple(slice(int(l), int(u) + 1) for l, u in zip(lo, hi))
    axes = [grid.coordinates(a)[sl[a]] for a in range(grid.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    rel = np.stack([m.ravel() for m in mesh], axis=1) - x
    dist = np.linalg.norm(rel, axis=1)
    inside = dist < R
    return _Samples(
        rel[inside], dist[inside],
        pair.u.values[sl].ravel()[inside], pair.v.values[sl].ravel()[inside],
        h ** grid.dim,
    )


def _objective(s: _Samples, normals: np.ndarray):
    """
    对每个方向给出最优 (a, b) 与对应残差

    Args:
        normals: (k, n) 单位向量

    Returns:
        (residual[k], a[k], b[k])
    """
    uu = float(s.u @ s.u)
    vv = float(s.v @ s.v)
    res, aa, bb = [], [], []
    for start in range(0, len(normals), _CHUNK):
        proj = s.rel @ normals[start:start + _CHUNK].T
        lp = np.maximum(proj, 0.0)
        lm = np.maximum(-proj, 0.0)
        up, vm = s.u @ lp, s.v @ lm
        pp, mm = (lp * lp).sum(axis=0), (lm * lm).sum(axis=0)
        a = np.where(pp > 0, np.maximum(up, 0.0) / np.where(pp > 0, pp, 1.0), 0.0)
        b = np.where(mm > 0, np.maximum(vm, 0.0) / np.where(mm > 0, mm, 1.0), 0.0)
        r = (uu - a * up) + (vv - b * vm)
        res.append(np.maximum(r, 0.0) * s.weight)
        aa.append(a)
        bb.append(b)
    return np.concatenate(res), np.concatenate(aa), np.concatenate(bb)


def _angle_normal(theta) -> np.ndarray:
    theta = np.atleast_1d(theta)
    return np.stack([np.cos(theta), np.sin(theta)], axis=1)


def _search_2d(s: _Samples, seed_angle: Optional[float]) -> np.ndarray:
    if seed_angle is None:
        thetas = 2 * np.pi * np.arange(ANGLE_GRID) / ANGLE_GRID
    else:
        k = ANGLE_GRID // 8
        thetas = seed_angle + SEED_WINDOW * np.arange(-k, k + 1) / k
    res, _, _ = _objective(s, _angle_normal(thetas))
    best = int(np.argmin(res))
    theta0, coarse = float(thetas[best]), float(res[best])
    step = 2 * np.pi / ANGLE_GRID
    opt = minimize_scalar(
        lambda t: float(_objective(s, _angle_normal(t))[0][0]),
        bounds=(theta0 - step, theta0 + step),
        method="bounded",
        options={"xatol": ANGLE_TOL},
    )
    theta = float(opt.x) if opt.fun < coarse else theta0
    return _angle_normal(theta)[0]


def _sphere_lattice(dim: int, m: int = SPHERE_LATTICE) -> np.ndarray:
    """立方体表面格点投影到球面"""
    ticks = np.linspace(-1.0, 1.0, m)
    pts = np.stack([g.ravel() for g in np.meshgrid(*([ticks] * dim), indexing="ij")], axis=1)
    pts = pts[np.max(np.abs(pts), axis=1) >= 1.0 - 1e-12]
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _search_nd(s: _Samples, dim: int, seed: Optional[np.ndarray]) -> np.ndarray:
    cand = _sphere_lattice(dim)
    if seed is not None:
        seed = np.asarray(seed, dtype=float) / np.linalg.norm(seed)
        cand = cand[cand @ seed >= math.cos(SEED_WINDOW)]
        cand = np.vstack([cand, seed])
    res, _, _ = _objective(s, cand)
    nu = cand[int(np.argmin(res))]
    best = float(res.min())
    step = 2.0 / (SPHERE_LATTICE - 1)
    # 切空间模式搜索，每层步长减半直到角度容差
    while step > ANGLE_TOL:
        for _ in range(SPHERE_LEVELS):
            basis = null_space(nu[None, :]).T
            moves = np.vstack([basis, -basis])
            trial = nu + step * moves
            trial /= np.linalg.norm(trial, axis=1, keepdims=True)
            tres, _, _ = _objective(s, trial)
            k = int(np.argmin(tres))
            if tres[k] >= best:
                break
            nu, best = trial[k], float(tres[k])
        step /= 2
    return nu


def fit_truncated_pair(
    pair: AdmissiblePair,
    x,
    rho: float,
    R: float,
    seed_angle: Optional[float] = None,
    seed_normal=None,
) -> TruncatedLinearFit:
    """
    环域 ρ <= |y-x| < R 上的最优截断线性对

    Args:
        rho: 内半径，0 表示整球
        seed_angle / seed_normal: 给定时粗搜索只在其 ±45° 范围内进行

    Returns:
        TruncatedLinearFit
    """
    x = np.asarray(x, dtype=float)
    h = pair.grid.spacing
    if not 0 <= rho < R:
        raise ValueError(f"需要 0 <= ρ < R，收到 ρ={rho}, R={R}")
    # 整球只要求 R >= 4h，真环域要求宽度 >= 8h
    if rho == 0 and R < pair.grid.resolution_floor * (1 - 1e-9):
        raise UnderResolvedScaleError(f"球半径 {R:.4g} < 4h = {pair.grid.resolution_floor:.4g}")
    if rho > 0 and R - rho < 8 * h * (1 - 1e-9):
        raise UnderResolvedScaleError(f"环域宽度 {R - rho:.4g} < 8h = {8 * h:.4g}")
    pair.check_ball(x, R)

    ball = _ball_samples(pair, x, R)
    s = ball.restrict(ball.dist >= rho)
    energy = float(s.u @ s.u + s.v @ s.v) * s.weight
    if energy == 0.0:
        raise DegenerateFitError(f"环域 ({rho:.4g}, {R:.4g}) 上 u、v 全为零")

    if pair.dim == 2:
        if seed_angle is None and seed_normal is not None:
            seed_angle = math.atan2(seed_normal[1], seed_normal[0])
        nu = _search_2d(s, seed_angle)
    else:
        nu = _search_nd(s, pair.dim, seed_normal)

    _, a, b = _objective(s, nu[None, :])
    a, b = float(a[0]), float(b[0])
    proj = s.rel @ nu
    residual = float(np.sum((s.u - a * np.maximum(proj, 0)) ** 2 + (s.v - b * np.maximum(-proj, 0)) ** 2)) * s.weight
    fit = TruncatedLinearFit(
        a=a, b=b, nu=tuple(float(c) for c in nu), center=tuple(float(c) for c in x),
        rho=float(rho), R=float(R), residual=residual,
        u_norm=math.sqrt(float(ball.u @ ball.u) * ball.weight),
        v_norm=math.sqrt(float(ball.v @ ball.v) * ball.weight),
        region_energy=energy,
    )
    logger.debug(f"拟合 x={x.tolist()} (ρ={rho:.3g}, R={R:.3g}): a={a:.4g}, b={b:.4g}, 残差={residual:.3e}")
    return fit


def normalized_fit_error(pair: AdmissiblePair, fit: TruncatedLinearFit) -> float:
    """∫ (u/a - s⁺)² + (v/b - s⁻)²，在拟合所用的环域上"""
    if fit.a <= 0 or fit.b <= 0:
        raise DegenerateFitError(f"斜率为零 (a={fit.a:.3g}, b={fit.b:.3g})，无法归一化")
    x = np.array(fit.center)
    ball = _ball_samples(pair, x, fit.R)
    s = ball.restrict(ball.dist >= fit.rho)
    proj = s.rel @ np.array(fit.nu)
    err = (s.u / fit.a - np.maximum(proj, 0)) ** 2 + (s.v / fit.b - np.maximum(-proj, 0)) ** 2
    return float(err.sum()) * s.weight


@dataclass(frozen=True)
class StabilityReport:
    fit: TruncatedLinearFit
    log_drop: float
    ratio: float
    normalized_error: Optional[float]
    normalized_ratio: Optional[float]

    def to_dict(self) -> dict:
        out = self.fit.to_dict()
        out.update({
            "log_drop": self.log_drop,
            "ratio": self.ratio,
            "normalized_error": self.normalized_error,
            "normalized_ratio": self.normalized_ratio,
        })
        return out


def _ratio(num: float, den: float, zero_tol: float = 0.0) -> float:
    if den > 0:
        return num / den
    return 0.0 if num <= zero_tol else math.inf


def stability_ratio(pair: AdmissiblePair, x, rho: float, R: float, seed_angle: Optional[float] = None) -> StabilityReport:
    """
    拟合残差与 log(J(R)/J(ρ)) 的比较

    ratio = residual / (log_drop · (‖u‖² + ‖v‖²)_{B_R})
    normalized_ratio = normalized_error / log_drop
    """
    fit = fit_truncated_pair(pair, x, rho, R, seed_angle=seed_angle)
    drop = log_drop(acf_value_resolved(pair, x, R), acf_value_resolved(pair, x, rho))
    mass = fit.u_norm ** 2 + fit.v_norm ** 2
    ratio = _ratio(fit.residual, drop * mass, zero_tol=1e-10 * mass)
    nerr = nratio = None
    if fit.a > 0 and fit.b > 0:
        nerr = normalized_fit_error(pair, fit)
        nratio = _ratio(nerr, drop, zero_tol=1e-10)
    return StabilityReport(fit, drop, ratio, nerr, nratio)


@dataclass(frozen=True)
class HyperplaneReport:
    distance: float
    l2_gap: float
    ratio: float
    eta: Optional[float] = None

    def to_dict(self) -> dict:
        return {"distance": self.distance, "l2_gap": self.l2_gap, "ratio": self.ratio, "eta": self.eta}


def hyperplane_distance_check(
    fit1: TruncatedLinearFit,
    fit2: TruncatedLinearFit,
    c: float,
    eta: Optional[float] = None,
) -> HyperplaneReport:
    """
    两个拟合在 fit1 的环域上的 L² 距离，以及 fit2 中心到 fit1 零超平面的距离

    ratio = distance / √gap 作为经验常数
    """
    if max(fit1.a, fit1.b) < c:
        raise DegenerateFitError(f"fit1 斜率 max(a, b) = {max(fit1.a, fit1.b):.3g} < c = {c}")
    if max(fit2.a, fit2.b) <= 0:
        raise DegenerateFitError("fit2 斜率全为零")
    dim = len(fit1.nu)
    x1 = np.array(fit1.center)
    step = fit1.R / (128 if dim == 2 else 32)
    ticks = np.arange(-fit1.R + step / 2, fit1.R, step)
    pts = np.stack([g.ravel() for g in np.meshgrid(*([ticks] * dim), indexing="ij")], axis=1)
    d = np.linalg.norm(pts, axis=1)
    pts = pts[(d >= fit1.rho) & (d < fit1.R)] + x1
    u1, v1 = fit1.evaluate(pts)
    u2, v2 = fit2.evaluate(pts)
    gap = float(np.sum((u1 - u2) ** 2 + (v1 - v2) ** 2)) * step ** dim
    distance = abs(float((np.array(fit2.center) - x1) @ np.array(fit1.nu)))
    ratio = distance / math.sqrt(gap) if gap > 0 else (0.0 if distance == 0 else math.inf)
    return HyperplaneReport(distance, gap, ratio, eta)


@dataclass
class NondegeneracyReport:
    kappa: float
    floor: float
    scale: float
    included: list = field(default_factory=list)
    excluded: list = field(default_factory=list)

    @property
    def min_slope_sum(self) -> float:
        return min((row["slope_sum"] for row in self.included), default=math.nan)

    @property
    def passed(self) -> bool:
        return bool(self.included) and self.min_slope_sum >= self.floor

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa, "floor": self.floor, "scale": self.scale,
            "included": self.included, "excluded": self.excluded,
            "min_slope_sum": self.min_slope_sum, "pass": self.passed,
        }


NONDEGENERACY_FRACTION = 0.1


def _normalization_scale(pair: AdmissiblePair, radius: float = 8.0) -> tuple:
    """(‖u + v‖_{L²(B_r(中心))}, r)，r 截到求解区域内"""
    center = pair.grid.center
    r = min(radius, pair.available_radius(center))
    ball = _ball_samples(pair, center, r)
    w = ball.u + ball.v
    return math.sqrt(float(w @ w) * ball.weight), r


def equivalent_slope(norm: float, radius: float, dim: int) -> float:
    """
    与 ‖u + v‖_{L²(B_r)} 同范数的对称线性对 a|x·ν| 的斜率 a

    ∫_{B_r} (x·ν)² = |B_r| r² / (n + 2)
    """
    volume = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * radius ** dim
    return norm / (radius * math.sqrt(volume / (dim + 2)))


def nondegeneracy_probe(
    pair: AdmissiblePair,
    centers: Sequence,
    kappa: float,
    R: float = 1.0,
    floor: Optional[float] = None,
    normalize: bool = True,
) -> NondegeneracyReport:
    """
    在 log(J(R)/J(R/8)) <= κ 的中心上拟合并报告 min (a_z + b_z)

    Args:
        floor: min(a_z + b_z) 的下限；缺省为 NONDEGENERACY_FRACTION 乘以归一化球上的等效斜率
            （归一化时再除以 ‖u+v‖）
        normalize: 先把对整体除以 ‖u+v‖_{L²(B_8)}，斜率随之缩放

    Raises:
        NoQualifyingCentersError: 没有中心通过 κ 门限
    """
    norm, radius = _normalization_scale(pair)
    if norm == 0:
        raise DegenerateFitError("u + v 在归一化球上为零")
    scale = norm if normalize else 1.0
    if floor is None:
        floor = NONDEGENERACY_FRACTION * equivalent_slope(norm, radius, pair.dim) / scale
    report = NondegeneracyReport(kappa, floor, scale)
    for z in centers:
        z = np.asarray(z, dtype=float)
        try:
            pair.check_ball(z, R)
        except DomainError:
            report.excluded.append({"center": z.tolist(), "reason": "outside-domain", "log_drop": None})
            continue
        drop = log_drop(acf_value_resolved(pair, z, R), acf_value_resolved(pair, z, R / 8))
        if drop > kappa:
            report.excluded.append({"center": z.tolist(), "reason": "kappa-gate", "log_drop": drop})
            continue
        try:
            fit = fit_truncated_pair(pair, z, R / 8, R)
        except DegenerateFitError:
            report.excluded.append({"center": z.tolist(), "reason": "degenerate", "log_drop": drop})
            continue
        report.included.append({
            "center": z.tolist(), "log_drop": drop,
            "a": fit.a / scale, "b": fit.b / scale, "slope_sum": (fit.a + fit.b) / scale,
        })
    if not report.included:
        raise NoQualifyingCentersError(f"κ = {kappa} 下没有合格的中心（共 {len(report.excluded)} 个被排除）", report)
    logger.info(f"📊 非退化探针: {len(report.included)} 个中心合格，min(a+b) = {report.min_slope_sum:.4g}")
    return report
