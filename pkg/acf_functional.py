# acf_functional.py
"""
ACF 单调性泛函

J_x(r) = (r⁻² ∫_{B_r(x)} |∇u|² |x-y|^{2-n}) · (r⁻² ∫_{B_r(x)} |∇v|² |x-y|^{2-n})

另外提供: 二进半径剖面与单调性审计、J_x(0⁺) 估计、二维弧长 I±、
Carleson ε、谱 λ²、特征常数、各类平方函数轨迹、上半连续性探针。
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from errors import UnderResolvedScaleError, UnsupportedDimensionError
from fields import AdmissiblePair, ball_integral
from utils import dyadic_ladder, parallel_map, resolved_depth

logger = logging.getLogger(__name__)

TRACE_KINDS = ("log-drop", "carleson", "spectral", "deficit")
MIN_ARC_SAMPLES = 64

# 求积设置，由入口脚本按 config.yaml 覆盖
QUADRATURE = {"weighting": "exact", "supersample": 4, "arc_samples": 8192}


def configure(settings: dict):
    quad = (settings or {}).get("quadrature", {})
    QUADRATURE["weighting"] = quad.get("weighting", QUADRATURE["weighting"])
    QUADRATURE["supersample"] = int(quad.get("supersample", QUADRATURE["supersample"]))
    QUADRATURE["arc_samples"] = int((settings or {}).get("arcs", {}).get("samples", QUADRATURE["arc_samples"]))


def log_drop(big: float, small: float) -> float:
    """log(big/small)，small = 0 时为 +∞（两者皆 0 时为 0），负值截为 0"""
    if small <= 0:
        return 0.0 if big <= 0 else math.inf
    if big <= 0:
        return 0.0
    return max(0.0, math.log(big / small))


def acf_factors(pair: AdmissiblePair, x, r: float, weighting: Optional[str] = None):
    """
    J_x(r) 的两个因子

    Returns:
        (factor_u, factor_v)
    """
    x = np.asarray(x, dtype=float)
    grid = pair.grid
    if r < grid.resolution_floor * (1 - 1e-9):
        raise UnderResolvedScaleError(f"半径 {r:.6g} 小于分辨率下限 {grid.resolution_floor:.6g}")
    pair.check_ball(x, r)
    w = weighting or QUADRATURE["weighting"]
    m = QUADRATURE["supersample"]
    fu = ball_integral(grid, pair.u.energy_density, x, r, kernel="newton", weighting=w, supersample=m) / r ** 2
    fv = ball_integral(grid, pair.v.energy_density, x, r, kernel="newton", weighting=w, supersample=m) / r ** 2
    return fu, fv


def acf_value(pair: AdmissiblePair, x, r: float, weighting: Optional[str] = None) -> float:
    fu, fv = acf_factors(pair, x, r, weighting)
    return fu * fv


def acf_value_resolved(pair: AdmissiblePair, x, r: float) -> float:
    """r 低于分辨率下限时在 4h 处取值（由单调性，这是真值的上界）"""
    floor = pair.grid.resolution_floor
    if r < floor:
        logger.debug(f"尺度 {r:.3g} 低于下限，改用 {floor:.3g}")
        r = floor
    return acf_value(pair, x, r)


@dataclass
class RadialProfile:
    center: np.ndarray
    radii: np.ndarray
    values: np.ndarray
    half_energies: np.ndarray
    monotone_defects: np.ndarray

    @property
    def relative_defects(self) -> np.ndarray:
        base = self.values[:-1]
        out = np.zeros_like(self.monotone_defects)
        pos = base > 0
        out[pos] = self.monotone_defects[pos] / base[pos]
        out[~pos & (self.monotone_defects > 0)] = math.inf
        return out

    @property
    def log_drops(self) -> np.ndarray:
        return np.array([log_drop(a, b) for a, b in zip(self.values[:-1], self.values[1:])])

    @property
    def max_relative_defect(self) -> float:
        return float(self.relative_defects.max(initial=0.0))

    def to_frame(self) -> pd.DataFrame:
        pad = lambda arr: np.append(arr, np.nan)
        return pd.DataFrame({
            "r": self.radii,
            "J": self.values,
            "factor_u": self.half_energies[:, 0],
            "factor_v": self.half_energies[:, 1],
            "monotone_defect": pad(self.monotone_defects),
            "log_drop": pad(self.log_drops),
        })


def radial_profile(
    pair: AdmissiblePair,
    x,
    r_max: float = 1.0,
    depth: Optional[int] = None,
    workers: int = 1,
) -> RadialProfile:
    """
    二进半径 r_j = r_max·2^-j 上的 J_x(r_j) 及单调性缺陷

    Args:
        depth: 缺省时一直取到 4h

    Returns:
        RadialProfile
    """
    floor = pair.grid.resolution_floor
    if depth is None:
        depth = resolved_depth(r_max, floor)
        if depth < 0:
            raise UnderResolvedScaleError(f"r_max = {r_max:.4g} 小于分辨率下限 {floor:.4g}")
    radii = dyadic_ladder(r_max, depth)
    if radii[-1] < floor * (1 - 1e-9):
        raise UnderResolvedScaleError(f"最小半径 {radii[-1]:.4g} 小于分辨率下限 {floor:.4g}")
    x = np.asarray(x, dtype=float)
    factors = np.array(parallel_map(lambda r: acf_factors(pair, x, r), radii, workers))
    values = factors[:, 0] * factors[:, 1]
    defects = np.maximum(0.0, values[1:] - values[:-1])
    profile = RadialProfile(x, radii, values, factors, defects)
    logger.debug(f"剖面 x={x.tolist()}: J = {np.array2string(values, precision=4)}")
    return profile


@dataclass(frozen=True)
class J0PlusEstimate:
    value: float
    flag: str
    scale: float
    last_relative_drop: float
    tail_estimate: float


def estimate_j0plus(profile: RadialProfile, tol: float = 0.02, noise_tol: float = 0.05) -> J0PlusEstimate:
    """
    J_x(0⁺) 取最小可分辨尺度的值（单调序列的末值是上界），并附趋势标记

    - converged: 最后一步相对下降 <= tol
    - noisy: 最后一步相对上升 > noise_tol
    - still-decreasing: 其余情形
    tail_estimate 为按几何衰减外推的剩余下降量（Richardson 式），只作参考。
    """
    J = np.asarray(profile.values, dtype=float)
    if len(J) < 3:
        raise ValueError("估计 J(0⁺) 至少需要 3 个尺度")
    scale = float(profile.radii[-1])
    if np.all(J == 0):
        return J0PlusEstimate(0.0, "converged", scale, 0.0, 0.0)
    prev, last = J[-2], J[-1]
    rel = (prev - last) / prev if prev > 0 else -math.inf
    d1, d2 = J[-3] - J[-2], J[-2] - J[-1]
    q = d2 / d1 if d1 > 0 else 0.0
    tail = d2 * q / (1 - q) if 0 < q < 1 else (0.0 if d2 <= 0 else math.inf)
    if rel < -noise_tol:
        flag = "noisy"
    elif rel <= tol:
        flag = "converged"
    else:
        flag = "still-decreasing"
    return J0PlusEstimate(float(last), flag, scale, float(rel), float(tail))


# ==================== 二维弧长与 ε、λ² ====================

def _require_2d(pair: AdmissiblePair, what: str):
    if pair.dim != 2:
        raise UnsupportedDimensionError(f"{what} 只支持二维，当前维数 {pair.dim}")


def _longest_circular_run(mask: np.ndarray) -> int:
    if mask.all():
        return len(mask)
    if not mask.any():
        return 0
    rolled = np.roll(mask, -int(np.argmin(mask)))
    d = np.diff(np.concatenate([[0], rolled.astype(int), [0]]))
    return int((np.flatnonzero(d == -1) - np.flatnonzero(d == 1)).max())


def arc_lengths(pair: AdmissiblePair, x, r: float, samples: Optional[int] = None):
    """
    ∂B_r(x) 上含于 {u>v} 与 {v>u} 的最长弧长 (I⁺, I⁻)

    采样角取半步偏移 φ_j = 2π(j + 1/2)/M，M 个样本表示的弧长为 M·2πr/M。
    """
    _require_2d(pair, "arc_lengths")
    M = int(samples or QUADRATURE["arc_samples"])
    if M < MIN_ARC_SAMPLES:
        raise UnderResolvedScaleError(f"圆周采样 {M} < {MIN_ARC_SAMPLES}")
    if r < pair.grid.resolution_floor * (1 - 1e-9):
        raise UnderResolvedScaleError(f"半径 {r:.6g} 小于分辨率下限")
    x = np.asarray(x, dtype=float)
    pair.check_ball(x, r)
    phi = 2 * np.pi * (np.arange(M) + 0.5) / M
    pts = x + r * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    uu = pair.u.interpolate(pts)
    vv = pair.v.interpolate(pts)
    step = 2 * np.pi * r / M
    return _longest_circular_run(uu > vv) * step, _longest_circular_run(vv > uu) * step


def carleson_epsilon(pair: AdmissiblePair, x, r: float, samples: Optional[int] = None) -> float:
    ip, im = arc_lengths(pair, x, r, samples)
    return max(abs(ip / r - math.pi), abs(im / r - math.pi))


def spectral_lambda2(pair: AdmissiblePair, x, r: float, samples: Optional[int] = None) -> float:
    """二维: λ₁(弧长 L 的单位圆弧) = (π/L)²，返回 Σ± |(π/L±)² - 1|²；一侧弧长为 0 时为 +∞"""
    if pair.dim != 2:
        raise UnsupportedDimensionError("n >= 3 的球冠第一特征值不在支持范围内")
    ip, im = arc_lengths(pair, x, r, samples)
    if ip <= 0 or im <= 0:
        return math.inf
    lp, lm = ip / r, im / r
    return ((math.pi / lp) ** 2 - 1) ** 2 + ((math.pi / lm) ** 2 - 1) ** 2


@dataclass(frozen=True)
class CharacteristicConstants:
    arc_plus: float
    arc_minus: float
    alpha_plus: float
    alpha_minus: float

    @property
    def deficit(self) -> float:
        return self.alpha_plus + self.alpha_minus - 2

    @property
    def quadratic_bound(self) -> float:
        return (self.alpha_plus - 1) ** 2 + (self.alpha_minus - 1) ** 2

    def to_dict(self) -> dict:
        return {
            "arc_plus": self.arc_plus,
            "arc_minus": self.arc_minus,
            "alpha_plus": self.alpha_plus,
            "alpha_minus": self.alpha_minus,
            "deficit": self.deficit,
            "quadratic_bound": self.quadratic_bound,
        }


def characteristic_constants(pair: AdmissiblePair, x, r: float, samples: Optional[int] = None) -> CharacteristicConstants:
    """
    弧角 L± = I±/r（角度读法）与齐次度 α± = π/L±（齐次调和函数读法）同时给出
    """
    ip, im = arc_lengths(pair, x, r, samples)
    lp, lm = ip / r, im / r
    ap = math.pi / lp if lp > 0 else math.inf
    am = math.pi / lm if lm > 0 else math.inf
    return CharacteristicConstants(lp, lm, ap, am)


# ==================== 平方函数 ====================

@dataclass
class SquareFunctionTrace:
    center: np.ndarray
    radii: np.ndarray
    kind: str
    entries: np.ndarray

    @property
    def partial_sums(self) -> np.ndarray:
        return np.cumsum(self.entries)

    @property
    def total(self) -> float:
        return float(self.partial_sums[-1]) if len(self.entries) else 0.0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"r": self.radii, self.kind: self.entries, "partial_sum": self.partial_sums})


def square_function_trace(
    pair: AdmissiblePair,
    x,
    r_max: float = 1.0,
    depth: Optional[int] = None,
    kind: str = "log-drop",
    workers: int = 1,
) -> SquareFunctionTrace:
    """
    log-drop: log(J(r_j)/J(r_{j+1}))，j = 0..depth-1
    carleson: ε(x, r_j)²
    spectral: λ²(x, r_j)
    deficit: α⁺ + α⁻ - 2
    """
    if kind not in TRACE_KINDS:
        raise ValueError(f"未知的平方函数类型: {kind}")
    x = np.asarray(x, dtype=float)
    if kind == "log-drop":
        profile = radial_profile(pair, x, r_max, depth, workers)
        return SquareFunctionTrace(x, profile.radii[:-1], kind, profile.log_drops)
    if depth is None:
        depth = max(0, resolved_depth(r_max, pair.grid.resolution_floor))
    radii = dyadic_ladder(r_max, depth)
    if kind == "carleson":
        fn = lambda r: carleson_epsilon(pair, x, r) ** 2
    elif kind == "spectral":
        fn = lambda r: spectral_lambda2(pair, x, r)
    else:
        fn = lambda r: characteristic_constants(pair, x, r).deficit
    return SquareFunctionTrace(x, radii, kind, np.array(parallel_map(fn, radii, workers)))


def spectral_lower_bound_check(pair: AdmissiblePair, x, r_max: float = 1.0, depth: Optional[int] = None) -> pd.DataFrame:
    """
    每个二进步上比较 log(J(r_j)/J(r_{j+1})) 与 log 2 · (α⁺ + α⁻ - 2)|_{r_{j+1}}

    Returns:
        DataFrame: r, log_drop, deficit, predicted, ratio
    """
    profile = radial_profile(pair, x, r_max, depth)
    rows = []
    for j, drop in enumerate(profile.log_drops):
        deficit = characteristic_constants(pair, x, profile.radii[j + 1]).deficit
        predicted = math.log(2) * deficit
        ratio = drop / predicted if predicted > 0 else (0.0 if drop == 0 else math.inf)
        rows.append({"r": profile.radii[j], "log_drop": drop, "deficit": deficit,
                     "predicted": predicted, "ratio": ratio})
    return pd.DataFrame(rows)


def dini_sum(profile: RadialProfile, j0plus: Optional[float] = None) -> float:
    """Σ_j log(J(r_j)/J(0⁺))^{1/2}，J(0⁺) 缺省取最小尺度值"""
    j0 = float(profile.values[-1]) if j0plus is None else j0plus
    return float(sum(math.sqrt(log_drop(v, j0)) for v in profile.values))


@dataclass(frozen=True)
class USCReport:
    values: tuple
    limsup: float
    j0plus: float
    flag: str
    passed: bool

    def to_dict(self) -> dict:
        return {"values": list(self.values), "limsup": self.limsup, "j0plus": self.j0plus,
                "flag": self.flag, "pass": self.passed}


def usc_probe(
    pair: AdmissiblePair,
    x0,
    sequence: Sequence,
    r_max: float = 1.0,
    depth: Optional[int] = None,
    tol: float = 0.05,
) -> USCReport:
    """
    检查 limsup J_{x_i}(r_i) <= J_{x0}(0⁺) + 容差

    Args:
        sequence: [(x_i, r_i), ...]，limsup 取后一半的最大值
    """
    vals = [acf_value(pair, xi, ri) for xi, ri in sequence]
    if not vals:
        raise ValueError("usc_probe 需要非空序列")
    tail = vals[len(vals) // 2:]
    limsup = float(max(tail))
    est = estimate_j0plus(radial_profile(pair, x0, r_max, depth))
    passed = limsup <= est.value * (1 + tol) + 1e-12
    if not passed:
        logger.warning(f"⚠️ 上半连续性探针: limsup {limsup:.4g} > J(0⁺) {est.value:.4g}")
    return USCReport(tuple(vals), limsup, est.value, est.flag, bool(passed))
