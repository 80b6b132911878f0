# utils.py
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from pathlib import Path

import numpy as np
import yaml
from dateutil import tz

logger = logging.getLogger(__name__)

DEFAULT_SETTINGS = {
    "timezone": "Asia/Shanghai",
    "storage_dir": "storage",
    "workers": 1,
    "tolerances": {
        "negative_rel": 1e-12,
        "disjoint_rel": 1e-12,
        "subharmonic": 1e-6,
        "monotone_rel": 0.05,
        "monotone_rel_exact": 0.005,
    },
    "quadrature": {
        "weighting": "exact",
        "supersample": 4,
    },
    "solver": {
        "method": "sor",
        "max_sweeps": 20000,
        "residual_tol": 1e-9,
        "check_every": 10,
    },
    "arcs": {
        "samples": 8192,
    },
}


def now_in_tz(tzname: str):
    return datetime.now(tz.gettz(tzname))


def fmt_run_label(dt, experiment_id: str) -> str:
    return f"{dt.strftime('%Y-%m-%d_%H%M%S')}_{experiment_id}"  # e.g. 2026-10-19_093000_exact-pair-sanity


def merge_dicts(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in (extra or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge_dicts(out[key], value)
        else:
            out[key] = value
    return out


def load_settings(path=None) -> dict:
    """
    读取全局配置 config.yaml，并与内置默认值合并

    Args:
        path: 配置文件路径，缺省时读取环境变量 ACF_LAB_CONFIG，再缺省为 config.yaml

    Returns:
        dict: 合并后的配置
    """
    path = Path(path or os.getenv("ACF_LAB_CONFIG", "config.yaml"))
    try:
        with open(path, "r", encoding="utf-8") as f:
            loaded = yaml.safe_load(f) or {}
    except FileNotFoundError:
        logger.warning(f"⚠️ 未找到 {path}，使用内置默认配置")
        loaded = {}
    settings = merge_dicts(DEFAULT_SETTINGS, loaded)

    # 环境变量覆盖
    if os.getenv("ACF_LAB_STORAGE"):
        settings["storage_dir"] = os.getenv("ACF_LAB_STORAGE")
    if os.getenv("ACF_LAB_WORKERS"):
        settings["workers"] = int(os.getenv("ACF_LAB_WORKERS"))
    if os.getenv("ACF_LAB_TIMEZONE"):
        settings["timezone"] = os.getenv("ACF_LAB_TIMEZONE")
    return settings


def config_hash(cfg: dict) -> str:
    payload = json.dumps(cfg, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def dyadic_ladder(r_max: float, depth: int) -> np.ndarray:
    """r_j = r_max * 2^-j, j = 0..depth"""
    return r_max * np.power(2.0, -np.arange(depth + 1, dtype=float))


def resolved_depth(r_max: float, floor: float) -> int:
    """最大的 depth，使 r_max * 2^-depth >= floor"""
    if r_max < floor:
        return -1
    return int(math.floor(math.log2(r_max / floor) + 1e-9))


def parallel_map(fn, items, workers: int = 1) -> list:
    """按输入顺序返回结果；workers <= 1 时顺序执行"""
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def acf_constant(n: int) -> float:
    """c_* = n^2 ω_n^2 / 16，二维时为 π²/4"""
    return n * n * unit_ball_volume(n) ** 2 / 16.0


def rotation_2d(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def to_jsonable(obj):
    """numpy 标量/数组转为可 JSON 序列化的对象"""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    return obj
