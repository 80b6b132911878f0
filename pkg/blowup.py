# blowup.py
"""
放大分析

u^{x,r}(z) = u(x + r z) / r 的重采样、逐尺度整球拟合轨迹、
能量收敛诊断、拉普拉斯测度质量与密度比 ζ_u、ζ_v。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from acf_functional import acf_value, acf_value_resolved, log_drop
from errors import CoverageShortfallError, UnderResolvedScaleError
from fields import AdmissiblePair, Grid, GridField, ValidationTolerances, laplacian_field, validate_pair
from generators import TruncatedLinearPairSpec
from stability_fit import fit_truncated_pair
from strata_beta import InterfaceCloud
from utils import acf_constant

logger = logging.getLogger(__name__)

TARGET_HALF_WIDTH = 10.0


def rescale_pair(pair: AdmissiblePair, x, r: float, half_width: float = TARGET_HALF_WIDTH) -> AdmissiblePair:
    """
    在以 0 为心、步长 h/r 的新网格上重采样 (u(x + r·)/r, v(x + r·)/r)

    B_{10r}(x) 超出求解区域时改用可用的最大半宽并在 meta 中记录；半宽 < 1 时报错。
    """
    if r <= 0:
        raise ValueError(f"r 必须为正，收到 {r}")
    x = np.asarray(x, dtype=float)
    h = pair.grid.spacing
    available = pair.available_radius(x) / r
    width = min(half_width, available)
    nodes = int(math.floor(width * r / h + 1e-9))
    width = nodes * h / r
    if width < 1.0 - 1e-12:
        raise CoverageShortfallError(f"B_r({x.tolist()}) 放大后只覆盖半宽 {width:.3g} < 1")
    grid = Grid(pair.dim, (-width,) * pair.dim, h / r, (2 * nodes + 1,) * pair.dim)
    offsets = h * (np.arange(2 * nodes + 1) - nodes)
    src = np.stack([m.ravel() for m in np.meshgrid(*([offsets] * pair.dim), indexing="ij")], axis=1) + x
    u = GridField(grid, np.maximum(pair.u.interpolate(src), 0.0) / r)
    v = GridField(grid, np.maximum(pair.v.interpolate(src), 0.0) / r)
    meta = dict(pair.meta)
    meta.update({"rescaled_from": x.tolist(), "rescale_r": r, "coverage": width})
    if width < half_width:
        logger.info(f"放大覆盖不足 {half_width:g}，实际半宽 {width:.3g}")
    return validate_pair(u, v, domain_radius=width, meta=meta)


@dataclass
class BlowupTrajectory:
    center: np.ndarray
    radii: np.ndarray
    fits: list
    values: np.ndarray
    zeta_u: Optional[np.ndarray] = None
    zeta_v: Optional[np.ndarray] = None

    @property
    def normals(self) -> np.ndarray:
        return np.array([f.nu for f in self.fits])

    @property
    def angles(self) -> np.ndarray:
        """二维法向角（弧度，已展开）"""
        return np.unwrap(np.arctan2(self.normals[:, 1], self.normals[:, 0]))

    @property
    def products(self) -> np.ndarray:
        return np.array([f.product for f in self.fits])

    @property
    def angle_variation_deg(self) -> float:
        a = self.angles
        return float(np.degrees(a.max() - a.min()))

    @property
    def last_step_change_deg(self) -> float:
        a = self.angles
        return float(np.degrees(abs(a[-1] - a[-2]))) if len(a) > 1 else 0.0

    @property
    def log_drop_sum(self) -> float:
        return float(sum(log_drop(p, q) for p, q in zip(self.values[:-1], self.values[1:])))

    @property
    def dini_sum(self) -> float:
        j0 = float(self.values[-1])
        return float(sum(math.sqrt(log_drop(v, j0)) for v in self.values))

    def to_frame(self) -> pd.DataFrame:
        dim = len(self.center)
        data = {
            "r": self.radii,
            "a": [f.a for f in self.fits],
            "b": [f.b for f in self.fits],
        }
        for k in range(dim):
            data[f"nu{k + 1}"] = self.normals[:, k]
        if dim == 2:
            data["angle_deg"] = np.degrees(self.angles)
        data["residual"] = [f.relative_residual for f in self.fits]
        data["J"] = self.values
        n = len(self.radii)
        data["zeta_u"] = self.zeta_u if self.zeta_u is not None else np.full(n, np.nan)
        data["zeta_v"] = self.zeta_v if self.zeta_v is not None else np.full(n, np.nan)
        return pd.DataFrame(data)


def blowup_trajectory(
    pair: AdmissiblePair,
    x,
    ladder: Sequence[float],
    rescaled: bool = False,
    seeded: bool = True,
) -> BlowupTrajectory:
    """
    逐尺度整球拟合

    斜率在放大下不变，所以缺省直接在原网格的 B_r(x) 上拟合；
    rescaled=True 时先经 rescale_pair 再在单位球上拟合。粗尺度的法向作为细尺度搜索的种子。
    """
    x = np.asarray(x, dtype=float)
    radii = np.sort(np.asarray(ladder, dtype=float))[::-1]
    fits, values = [], []
    seed = None
    for r in radii:
        if rescaled:
            scaled = rescale_pair(pair, x, r)
            fit = fit_truncated_pair(scaled, np.zeros(pair.dim), 0.0, 1.0, seed_normal=seed)
        else:
            fit = fit_truncated_pair(pair, x, 0.0, r, seed_normal=seed)
        fits.append(fit)
        values.append(acf_value_resolved(pair, x, r))
        if seeded:
            seed = np.array(fit.nu)
    traj = BlowupTrajectory(x, radii, fits, np.array(values))
    logger.info(
        f"📊 放大轨迹 x={x.tolist()}: {len(radii)} 个尺度，"
        f"log-drop 和 {traj.log_drop_sum:.4g}，Dini 和 {traj.dini_sum:.4g}"
    )
    return traj


def normal_two_valuedness(trajectory: BlowupTrajectory) -> float:
    """各尺度法向到 {ν_ref, -ν_ref} 的最大角距离（度），ν_ref 取最细尺度"""
    normals = trajectory.normals
    ref = normals[-1]
    cos = np.clip(np.abs(normals @ ref), 0.0, 1.0)
    return float(np.degrees(np.arccos(cos)).max())


def energy_convergence_probe(
    pairs: Sequence[AdmissiblePair],
    limit: TruncatedLinearPairSpec,
    radius: float = 1.0,
) -> dict:
    """
    每个元素报告到极限对的 L² 距离、梯度能量差与 |J - c_* a²b²|

    Args:
        radius: 在 B_radius(极限中心) 上比较
    """
    rows = []
    target_j = acf_constant(limit.dim) * (limit.a * limit.b) ** 2
    for k, pair in enumerate(pairs):
        grid = pair.grid
        h = grid.spacing
        c = np.array(limit.center)
        r = min(radius, pair.available_radius(c))
        mask = grid.distances_from(c) <= r
        pts = grid.points()[mask.ravel()]
        lu, lv = limit.evaluate(pts)
        l2 = math.sqrt(float(np.sum((pair.u.values[mask] - lu) ** 2 + (pair.v.values[mask] - lv) ** 2)) * h ** grid.dim)

        ref_u, ref_v = (GridField(grid, vals.reshape(grid.counts)) for vals in limit.evaluate(grid.points()))
        centers = np.stack(
            [m.ravel() for m in np.meshgrid(*[grid.coordinates(a)[:-1] + h / 2 for a in range(grid.dim)], indexing="ij")],
            axis=1,
        )
        cell_mask = np.linalg.norm(centers - c, axis=1) <= r
        gap = 0.0
        for mine, theirs in ((pair.u, ref_u), (pair.v, ref_v)):
            gap += abs(float(mine.energy_density.ravel()[cell_mask].sum() - theirs.energy_density.ravel()[cell_mask].sum()))
        gap *= h ** grid.dim
        j = acf_value(pair, c, r)
        rows.append({"index": k, "l2_distance": l2, "energy_gap": gap, "J": j,
                     "J_gap": abs(j - target_j), "J_gap_rel": abs(j - target_j) / j if j > 0 else math.inf})
    gaps = [row["J_gap"] for row in rows]
    return {"target_J": target_j, "rows": rows, "decaying": gaps_decaying(gaps)}


def gaps_decaying(gaps: Sequence[float]) -> bool:
    """后一半（至少两项）单调不增，且末项不超过首项"""
    if len(gaps) < 2:
        return True
    slack = 1e-12 * max(abs(g) for g in gaps)
    tail = list(gaps[min(len(gaps) // 2, len(gaps) - 2):])
    monotone = all(b <= a + slack for a, b in zip(tail, tail[1:]))
    return bool(monotone and gaps[-1] <= gaps[0] + slack)


def laplacian_measure_mass(pair: AdmissiblePair, x, r: float, tolerances: Optional[ValidationTolerances] = None):
    """
    Σ_{节点 ∈ B_r(x)} Δ_h u · h^n（每个节点截到 -容差），对 v 同样

    Returns:
        (μ_u(B_r(x)), μ_v(B_r(x)))
    """
    x = np.asarray(x, dtype=float)
    grid = pair.grid
    if r < grid.resolution_floor * (1 - 1e-9):
        raise UnderResolvedScaleError(f"半径 {r:.4g} 小于分辨率下限")
    pair.check_ball(x, r)
    tol = tolerances or ValidationTolerances()
    mask = (grid.distances_from(x) <= r * (1 + 1e-12)) & pair.domain_mask()
    out = []
    for f in (pair.u, pair.v):
        lap = laplacian_field(f)[mask]
        lap = lap[np.isfinite(lap)]
        floor = -tol.subharmonic * f.max / grid.spacing ** 2
        clamped = np.maximum(lap, floor)
        removed = float(np.sum(clamped - lap)) * grid.spacing ** grid.dim
        total = float(clamped.sum()) * grid.spacing ** grid.dim
        if removed > 1e-3 * abs(total) and removed > 0:
            logger.warning(f"⚠️ 拉普拉斯截断质量 {removed:.3e} 超过总质量的 10⁻³")
        out.append(total)
    return out[0], out[1]


@dataclass
class DensityEstimate:
    center: np.ndarray
    radii: np.ndarray
    mu_u: np.ndarray
    mu_v: np.ndarray
    nu: np.ndarray
    zeta_u: np.ndarray
    zeta_v: np.ndarray
    skipped: list = field(default_factory=list)

    def _last(self, series: np.ndarray):
        finite = series[np.isfinite(series)]
        if len(finite) == 0:
            return math.nan, "undefined"
        if len(finite) == 1:
            return float(finite[-1]), "single-scale"
        rel = abs(finite[-1] - finite[-2]) / abs(finite[-1]) if finite[-1] != 0 else math.inf
        return float(finite[-1]), "converged" if rel <= 0.02 else "still-changing"

    @property
    def zeta_u_estimate(self):
        return self._last(self.zeta_u)

    @property
    def zeta_v_estimate(self):
        return self._last(self.zeta_v)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"r": self.radii, "mu_u": self.mu_u, "mu_v": self.mu_v, "nu": self.nu,
                             "zeta_u": self.zeta_u, "zeta_v": self.zeta_v})


def density_trajectory(pair: AdmissiblePair, cloud: InterfaceCloud, x, ladder: Sequence[float]) -> DensityEstimate:
    """ζ_u(r) = μ_u(B_r(x)) / ν(B_r(x))，ν 为界面点云测度；ν = 0 的尺度跳过"""
    x = np.asarray(x, dtype=float)
    radii = np.sort(np.asarray(ladder, dtype=float))[::-1]
    n = len(radii)
    mu_u, mu_v, nu = np.full(n, np.nan), np.full(n, np.nan), np.zeros(n)
    zu, zv = np.full(n, np.nan), np.full(n, np.nan)
    skipped = []
    for k, r in enumerate(radii):
        mu_u[k], mu_v[k] = laplacian_measure_mass(pair, x, r)
        nu[k] = cloud.ball_mass(x, r)
        if nu[k] == 0:
            skipped.append({"r": float(r), "reason": "界面测度为零"})
            continue
        zu[k], zv[k] = mu_u[k] / nu[k], mu_v[k] / nu[k]
    if skipped:
        logger.info(f"密度轨迹 x={x.tolist()}: 跳过 {len(skipped)} 个尺度（界面测度为零）")
    return DensityEstimate(x, radii, mu_u, mu_v, nu, zu, zv, skipped)


def slope_relations(trajectory: BlowupTrajectory, j0plus: float) -> dict:
    """
    最细尺度的 a·b 与两种候选关系比较:
    a·b = sqrt(J(0⁺)/c_*) 以及 a·b = c_*·J(0⁺)
    """
    c_star = acf_constant(len(trajectory.center))
    product = float(trajectory.products[-1])
    candidates = {"sqrt": math.sqrt(max(j0plus, 0.0) / c_star), "linear": c_star * j0plus}
    errors = {k: abs(product - v) / v if v > 0 else math.inf for k, v in candidates.items()}
    return {
        "product": product,
        "j0plus": j0plus,
        "c_star": c_star,
        "candidates": candidates,
        "relative_errors": errors,
        "matches": min(errors, key=errors.get),
    }
