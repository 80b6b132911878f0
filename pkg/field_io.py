# field_io.py
"""
场文件读写

ACF1 二进制格式（小端）:
    b"ACF1" | u32 dim | u32 counts[dim] | f64 origin[dim] | f64 spacing | f64 values[prod(counts)]（行优先）

一个容许对写成同一文件中连续的两条 ACF1 记录（先 u 后 v），
生成参数与验证报告写入同名 .json 侧车文件。
"""

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from errors import FieldFormatError
from fields import AdmissiblePair, Grid, GridField, ValidationReport, validate_pair
from utils import to_jsonable

logger = logging.getLogger(__name__)

MAGIC = b"ACF1"


def encode_field(field: GridField) -> bytes:
    g = field.grid
    parts = [
        MAGIC,
        np.array([g.dim], dtype="<u4").tobytes(),
        np.array(g.counts, dtype="<u4").tobytes(),
        np.array(g.origin, dtype="<f8").tobytes(),
        np.array([g.spacing], dtype="<f8").tobytes(),
        np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C"),
    ]
    return b"".join(parts)


def decode_field(buf: bytes, offset: int = 0):
    """
    从 buf[offset:] 解析一条 ACF1 记录

    Returns:
        (GridField, 下一条记录的偏移)
    """
    if buf[offset:offset + 4] != MAGIC:
        raise FieldFormatError(f"偏移 {offset} 处缺少 ACF1 魔数")
    pos = offset + 4
    try:
        dim = int(np.frombuffer(buf, dtype="<u4", count=1, offset=pos)[0])
        pos += 4
        counts = np.frombuffer(buf, dtype="<u4", count=dim, offset=pos).astype(int)
        pos += 4 * dim
        origin = np.frombuffer(buf, dtype="<f8", count=dim, offset=pos)
        pos += 8 * dim
        spacing = float(np.frombuffer(buf, dtype="<f8", count=1, offset=pos)[0])
        pos += 8
        size = int(np.prod(counts))
        values = np.frombuffer(buf, dtype="<f8", count=size, offset=pos)
        pos += 8 * size
    except ValueError as e:
        raise FieldFormatError(f"ACF1 记录被截断: {e}") from e
    grid = Grid(dim, tuple(origin), spacing, tuple(counts))
    return GridField(grid, values.reshape(tuple(counts))), pos


def write_field(path, field: GridField):
    Path(path).write_bytes(encode_field(field))


def read_field(path) -> GridField:
    field, _ = decode_field(Path(path).read_bytes())
    return field


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_pair(path, pair: AdmissiblePair, spec: dict = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_field(pair.u) + encode_field(pair.v))
    sidecar = {
        "grid": pair.grid.to_dict(),
        "domain_radius": pair.domain_radius,
        "spec": spec if spec is not None else pair.meta,
        "validation": pair.report.to_dict() if pair.report else None,
    }
    sidecar_path(path).write_text(json.dumps(to_jsonable(sidecar), ensure_ascii=False, indent=2), encoding="utf-8")
    logger.info(f"💾 容许对已保存: {path}")


def read_pair(path) -> AdmissiblePair:
    """读取 write_pair 写出的文件；侧车文件存在时恢复求解区域与报告"""
    path = Path(path)
    buf = path.read_bytes()
    u, pos = decode_field(buf, 0)
    v, _ = decode_field(buf, pos)
    meta, domain_radius, report = {}, None, None
    side = sidecar_path(path)
    if side.exists():
        data = json.loads(side.read_text(encoding="utf-8"))
        meta = data.get("spec") or {}
        domain_radius = data.get("domain_radius")
        rep = data.get("validation")
        if rep:
            report = ValidationReport(
                rep["max_negative_value"], rep["max_product"], rep["worst_superharmonic_defect"], rep["pass"]
            )
    if report is None:
        return validate_pair(u, v, domain_radius=domain_radius, meta=meta)
    return AdmissiblePair(u, v, report, domain_radius, meta)


def field_frame(field: GridField) -> pd.DataFrame:
    pts = field.grid.points()
    data = {f"x{a + 1}": pts[:, a] for a in range(field.grid.dim)}
    data["value"] = field.values.ravel()
    return pd.DataFrame(data)


def write_field_csv(path, field: GridField):
    field_frame(field).to_csv(path, index=False, float_format="%.17g")
