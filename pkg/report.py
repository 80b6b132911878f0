# report.py
"""
实验报告渲染
report.json → report.md → 带内联样式的 report.html
"""

import json
import logging
from pathlib import Path

import markdown

logger = logging.getLogger(__name__)

STATUS_ICON = {"pass": "✅", "fail": "❌", "not-run": "⏸️"}

_STYLE = """
        body {
            font-family: 'Segoe UI', 'Microsoft YaHei', Arial, sans-serif;
            line-height: 1.7;
            color: #2c3e50;
            max-width: 960px;
            margin: 0 auto;
            padding: 20px;
            background-color: #f5f5f5;
        }
        .container {
            background-color: white;
            padding: 40px;
            border-radius: 10px;
            box-shadow: 0 4px 12px rgba(0,0,0,0.15);
        }
        h1 {
            font-size: 1.8em;
            border-bottom: 4px solid #e74c3c;
            border-left: 6px solid #e74c3c;
            padding: 0 0 15px 15px;
        }
        h2 {
            font-size: 1.4em;
            border-left: 5px solid #3498db;
            padding: 10px 15px;
            background-color: #f8f9fa;
        }
        code {
            background-color: #f8f9fa;
            padding: 2px 6px;
            border-radius: 3px;
            font-family: 'Courier New', 'Consolas', monospace;
        }
        pre {
            background-color: #2c3e50;
            color: #ecf0f1;
            padding: 20px;
            border-radius: 8px;
            overflow-x: auto;
        }
        table {
            border-collapse: collapse;
            width: 100%;
            margin: 20px 0;
        }
        th, td {
            border: 1px solid #ddd;
            padding: 8px 12px;
            text-align: left;
        }
        th {
            background-color: #3498db;
            color: white;
        }
        .footer {
            margin-top: 40px;
            padding-top: 20px;
            border-top: 1px solid #ddd;
            text-align: center;
            color: #7f8c8d;
            font-size: 0.9em;
        }
"""


def markdown_to_html(md_text: str, title: str = "acf-lab") -> str:
    """
    将 Markdown 文本转换为独立的 HTML 页面

    Args:
        md_text: Markdown 格式的文本

    Returns:
        str: HTML 格式的文本
    """
    body = markdown.markdown(md_text, extensions=["extra", "tables", "fenced_code"])
    return f"""<!DOCTYPE html>
<html>
<head>
    <meta charset="utf-8">
    <title>{title}</title>
    <style>{_STYLE}</style>
</head>
<body>
    <div class="container">
        {body}
        <div class="footer">
            <p>📊 acf-lab 自动生成的实验报告</p>
        </div>
    </div>
</body>
</html>
"""


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)


def render_markdown(report: dict) -> str:
    """由 ExperimentReport.to_dict() 的结果生成 Markdown"""
    lines = [f"# {report.get('experiment', '?')}", ""]
    if report.get("description"):
        lines += [report["description"], ""]
    status = "完整" if report.get("complete") else "**不完整**"
    lines += [
        f"- 状态: {status}",
        f"- 配置哈希: `{report.get('config_hash', '')[:16]}`",
        f"- 随机种子: {report.get('seed')}",
        f"- 耗时: {report.get('wall_clock_s', 0):.2f} s",
        "",
    ]
    if report.get("error"):
        lines += ["## 错误", "", "```", str(report["error"]), "```", ""]

    lines += ["## 验收标准", "", "| 编号 | 状态 | 说明 |", "|---|---|---|"]
    for cid, entry in sorted(report.get("criteria", {}).items()):
        st = entry.get("status", "not-run")
        detail = "; ".join(f"{k}={_fmt(v)}" for k, v in (entry.get("detail") or {}).items())
        lines.append(f"| {cid} | {STATUS_ICON.get(st, '')} {st} | {detail} |")
    lines.append("")

    summary = report.get("summary") or {}
    if summary:
        lines += ["## 摘要", ""]
        for key, value in summary.items():
            lines.append(f"- **{key}**: {_fmt(value)}")
        lines.append("")

    tables = report.get("tables") or []
    if tables:
        lines += ["## 数据表", ""]
        lines += [f"- `tables/{name}.csv`" for name in tables]
        lines.append("")
    return "\n".join(lines)


def render_run(run_dir) -> Path:
    """把 run_dir/report.json 渲染为 report.md 与 report.html"""
    run_dir = Path(run_dir)
    report = json.loads((run_dir / "report.json").read_text(encoding="utf-8"))
    md = render_markdown(report)
    (run_dir / "report.md").write_text(md, encoding="utf-8")
    (run_dir / "report.html").write_text(markdown_to_html(md, report.get("experiment", "acf-lab")), encoding="utf-8")
    return run_dir / "report.md"


def render_directory(root) -> list:
    """
    渲染 root 下每个 report.json，并写出汇总 index.md / index.html

    Returns:
        list: 各运行的 report.md 路径
    """
    root = Path(root)
    outputs, rows = [], []
    for path in sorted(root.rglob("report.json")):
        try:
            outputs.append(render_run(path.parent))
            report = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            logger.error(f"❌ 渲染 {path} 失败: {e}", exc_info=True)
            continue
        statuses = [c.get("status") for c in report.get("criteria", {}).values()]
        rows.append(
            f"| {path.parent.relative_to(root)} | {report.get('experiment')} | "
            f"{statuses.count('pass')} | {statuses.count('fail')} | {'是' if report.get('complete') else '否'} |"
        )
    index = ["# 实验汇总", "", "| 运行 | 实验 | 通过 | 失败 | 完整 |", "|---|---|---|---|---|", *rows, ""]
    md = "\n".join(index)
    (root / "index.md").write_text(md, encoding="utf-8")
    (root / "index.html").write_text(markdown_to_html(md, "实验汇总"), encoding="utf-8")
    logger.info(f"✅ 已渲染 {len(outputs)} 份报告")
    return outputs
