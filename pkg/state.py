# state.py
import json
import os
from pathlib import Path
from typing import Optional

import pandas as pd
import yaml

from utils import to_jsonable

CSV_FLOAT_FORMAT = "%.12g"


def storage_root(settings: Optional[dict] = None) -> Path:
    root = Path(os.getenv("ACF_LAB_STORAGE") or (settings or {}).get("storage_dir", "storage"))
    root.mkdir(parents=True, exist_ok=True)
    return root


class RunState:
    def __init__(self, label: str, root: Optional[Path] = None):
        # label: 2026-10-19_093000_exact-pair-sanity，或配置里给出的输出目录
        self.label = label
        self.dir = Path(root or storage_root()) / label
        self.dir.mkdir(parents=True, exist_ok=True)

    @property
    def report_json(self):
        return self.dir / "report.json"

    @property
    def report_md(self):
        return self.dir / "report.md"

    @property
    def report_html(self):
        return self.dir / "report.html"

    @property
    def config_yaml(self):
        return self.dir / "config.yaml"

    @property
    def tables_dir(self):
        d = self.dir / "tables"
        d.mkdir(exist_ok=True)
        return d

    def save_json(self, data: dict, name: str = "report.json") -> Path:
        path = self.dir / name
        path.write_text(json.dumps(to_jsonable(data), ensure_ascii=False, indent=2), encoding="utf-8")
        return path

    def save_config(self, cfg: dict):
        self.config_yaml.write_text(
            yaml.safe_dump(to_jsonable(cfg), allow_unicode=True, sort_keys=True), encoding="utf-8"
        )

    def save_table(self, name: str, frame: pd.DataFrame) -> Path:
        # 固定浮点格式，同一配置两次运行的 CSV 逐字节相同
        path = self.tables_dir / f"{name}.csv"
        frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
        return path

    def save_report(self, md: str, html: Optional[str] = None):
        self.report_md.write_text(md, encoding="utf-8")
        if html is not None:
            self.report_html.write_text(html, encoding="utf-8")


def list_runs(root: Optional[Path] = None) -> list:
    """root 下所有含 report.json 的运行目录，按名称倒序（最近的在前）"""
    root = Path(root or storage_root())
    return sorted((p.parent for p in root.rglob("report.json")), key=lambda p: p.name, reverse=True)
