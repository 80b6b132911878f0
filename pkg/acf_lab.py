# acf_lab.py
"""
ACF 单调性 / 可求长性数值实验室
- 生成两侧调和容许对并保存为 ACF1 二进制场文件
- 计算 ACF 径向剖面、截断线性拟合、β 数、覆盖与放大轨迹
- 运行配置驱动的实验并生成 CSV / JSON / Markdown / HTML 报告
"""

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
from dotenv import load_dotenv

import acf_functional
from errors import AcfLabError, DomainError
from utils import load_settings

# 加载环境变量
load_dotenv()

# 设置日志
logging.basicConfig(
    level=getattr(logging, os.getenv("ACF_LAB_LOG_LEVEL", "INFO").upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(os.getenv("ACF_LAB_LOG_FILE", "acf_lab.log"), encoding='utf-8'),
        logging.StreamHandler()
    ]
)
logger = logging.getLogger(__name__)

SETTINGS = load_settings()
acf_functional.configure(SETTINGS)


def _point(text: str) -> np.ndarray:
    return np.array([float(t) for t in text.split(",")], dtype=float)


def _params(items) -> dict:
    """k=v 形式的生成器参数；数值自动转换，逗号分隔的转为列表"""
    out = {}
    for item in items or []:
        key, _, raw = item.partition("=")
        values = []
        for part in raw.split(","):
            try:
                values.append(int(part))
            except ValueError:
                try:
                    values.append(float(part))
                except ValueError:
                    values.append(part)
        out[key] = values[0] if len(values) == 1 else values
    return out


def cmd_generate(argv):
    from fields import Grid
    from field_io import write_pair
    from generators import SolverConfig, make_pair

    p = argparse.ArgumentParser(prog="acf_lab.py generate")
    p.add_argument("kind", help="linear | line | wedge | spiral | koch | modkoch")
    p.add_argument("--half-width", type=float, default=4.0)
    p.add_argument("--nodes", type=int, default=513)
    p.add_argument("--out", required=True)
    p.add_argument("--param", action="append", help="生成器参数 k=v，可重复")
    args = p.parse_args(argv)
    grid = Grid.centered(2, args.half_width, args.nodes)
    params = _params(args.param)
    pair = make_pair(args.kind, grid, cfg=SolverConfig.from_settings(SETTINGS), **params)
    write_pair(args.out, pair, {"kind": args.kind, **params})
    print(f"✅ 已生成 {args.kind} 容许对: {args.out}")


def cmd_acf(argv):
    from field_io import read_pair
    from utils import parallel_map

    p = argparse.ArgumentParser(prog="acf_lab.py acf")
    p.add_argument("pair")
    p.add_argument("--x", type=_point, default=None)
    p.add_argument("--r-max", type=float, default=1.0)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--out", default=None, help="剖面 CSV 输出路径")
    args = p.parse_args(argv)
    pair = read_pair(args.pair)
    x = args.x if args.x is not None else pair.grid.center
    workers = int(SETTINGS.get("workers", 1))
    profile = acf_functional.radial_profile(pair, x, args.r_max, args.depth, workers)
    est = acf_functional.estimate_j0plus(profile)
    frame = profile.to_frame()
    if pair.dim == 2:
        frame["epsilon"] = parallel_map(lambda r: acf_functional.carleson_epsilon(pair, x, r), profile.radii, workers)
        frame["lambda2"] = parallel_map(lambda r: acf_functional.spectral_lambda2(pair, x, r), profile.radii, workers)
    print(frame.to_string(index=False))
    print(f"\n📊 J(0⁺) ≈ {est.value:.6g} ({est.flag})，最大相对单调缺陷 {profile.max_relative_defect:.3e}")
    if args.out:
        frame.to_csv(args.out, index=False, float_format="%.12g", lineterminator="\n")


def cmd_fit(argv):
    import json

    from field_io import read_pair
    from stability_fit import stability_ratio
    from utils import to_jsonable

    p = argparse.ArgumentParser(prog="acf_lab.py fit")
    p.add_argument("pair")
    p.add_argument("--x", type=_point, default=None)
    p.add_argument("--rho", type=float, default=0.25)
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--out", default=None, help="拟合 JSON 输出路径")
    args = p.parse_args(argv)
    pair = read_pair(args.pair)
    x = args.x if args.x is not None else pair.grid.center
    report = stability_ratio(pair, x, args.rho, args.R)
    data = report.to_dict()
    for key, value in data.items():
        print(f"  {key}: {value}")
    if args.out:
        Path(args.out).write_text(json.dumps(to_jsonable(data), ensure_ascii=False, indent=2), encoding="utf-8")


def _cloud(pair, pair_path: str, cloud_path):
    """--cloud 给出时读取界面点云 CSV，否则从容许对提取"""
    from strata_beta import extract_interface, read_cloud_csv

    if cloud_path:
        cloud = read_cloud_csv(cloud_path)
        if cloud.points.shape[1] != pair.dim:
            raise DomainError(f"点云维数 {cloud.points.shape[1]} 与容许对维数 {pair.dim} 不符")
        return cloud
    return extract_interface(pair, pair_path)


def cmd_beta(argv):
    from field_io import read_pair
    from strata_beta import beta_table, write_beta_csv, write_cloud_csv

    p = argparse.ArgumentParser(prog="acf_lab.py beta")
    p.add_argument("pair")
    p.add_argument("--cloud", default=None, help="界面点云 CSV（x1..xn,weight）；缺省时从容许对提取")
    p.add_argument("--x", type=_point, default=None)
    p.add_argument("--r", type=float, nargs="+", default=[1.0, 0.5, 0.25])
    p.add_argument("--cloud-out", default=None)
    p.add_argument("--out", default=None)
    args = p.parse_args(argv)
    pair = read_pair(args.pair)
    cloud = _cloud(pair, args.pair, args.cloud)
    x = args.x if args.x is not None else pair.grid.center
    table = beta_table(cloud, [x], args.r)
    print(table.to_frame().to_string(index=False))
    if args.cloud_out:
        write_cloud_csv(args.cloud_out, cloud)
    if args.out:
        write_beta_csv(args.out, table)


def cmd_cover(argv):
    from covering import CoverParams, iterated_cover
    from field_io import read_pair

    p = argparse.ArgumentParser(prog="acf_lab.py cover")
    p.add_argument("pair")
    p.add_argument("--cloud", default=None, help="界面点云 CSV；缺省时从容许对提取")
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--R", type=float, default=0.125)
    p.add_argument("--eta-bar", type=float, default=None, help="缺省 ε/10")
    p.add_argument("--rho-bar", type=float, default=None, help="缺省 η̄/10")
    p.add_argument("--eta", type=float, default=None, help="缺省 η̄")
    p.add_argument("--out", default=None, help="覆盖 JSON 输出路径")
    args = p.parse_args(argv)
    pair = read_pair(args.pair)
    cloud = _cloud(pair, args.pair, args.cloud)
    params = CoverParams(args.epsilon, eta_bar=args.eta_bar, rho_bar=args.rho_bar, eta=args.eta)
    cover = iterated_cover(pair, cloud, args.epsilon, args.R, params, int(SETTINGS.get("workers", 1)))
    info = cover.to_dict()
    print(f"📊 {len(cover.entries)} 个球，N·R^(n-1) = {info['normalized_count']:.4g}，"
          f"类别 {info['classes']}，终止: {cover.terminated}")
    for name, ok in cover.audits.items():
        print(f"  {'✅' if ok else '❌'} {name}")
    if args.out:
        cover.to_json(args.out)


def cmd_blowup(argv):
    from blowup import blowup_trajectory, density_trajectory
    from field_io import read_pair
    from utils import dyadic_ladder

    p = argparse.ArgumentParser(prog="acf_lab.py blowup")
    p.add_argument("pair")
    p.add_argument("--cloud", default=None, help="界面点云 CSV；缺省时从容许对提取")
    p.add_argument("--x", type=_point, default=None)
    p.add_argument("--r-max", type=float, default=0.25)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--out", default=None)
    args = p.parse_args(argv)
    pair = read_pair(args.pair)
    x = args.x if args.x is not None else pair.grid.center
    ladder = list(dyadic_ladder(args.r_max, args.depth))
    traj = blowup_trajectory(pair, x, ladder)
    dens = density_trajectory(pair, _cloud(pair, args.pair, args.cloud), x, ladder)
    frame = traj.to_frame().merge(dens.to_frame()[["r", "zeta_u", "zeta_v"]], on="r", how="left")
    print(frame.to_string(index=False))
    print(f"\n📊 法向总变化 {traj.angle_variation_deg:.3f}°，最后一步 {traj.last_step_change_deg:.3f}°")
    zu, zu_flag = dens.zeta_u_estimate
    zv, zv_flag = dens.zeta_v_estimate
    print(f"📊 ζ_u ≈ {zu:.6g} ({zu_flag})，ζ_v ≈ {zv:.6g} ({zv_flag})")
    if args.out:
        frame.to_csv(args.out, index=False, float_format="%.12g", lineterminator="\n")


def cmd_run(argv):
    from experiments import REGISTRY, ExperimentConfig, config_for, run_experiment, run_label
    from state import RunState, storage_root

    p = argparse.ArgumentParser(prog="acf_lab.py run")
    p.add_argument("target", nargs="?", help="实验 id 或配置文件路径")
    p.add_argument("--all", action="store_true", help="依次运行所有注册实验")
    args = p.parse_args(argv)
    if args.all:
        configs = [config_for(exp_id) for exp_id in REGISTRY]
    elif args.target and Path(args.target).suffix in (".yaml", ".yml"):
        configs = [ExperimentConfig.load(args.target)]
    elif args.target:
        configs = [config_for(args.target)]
    else:
        p.error("需要实验 id、配置路径或 --all")
    failed = 0
    root = storage_root(SETTINGS)
    for config in configs:
        report = run_experiment(config, SETTINGS, RunState(run_label(config, SETTINGS), root))
        failed += 0 if report.passed else 1
    if failed:
        logger.warning(f"⚠️ {failed} 个实验存在未通过或不完整的结果")
    return 1 if failed else 0


def cmd_list(argv):
    from experiments import registry_list

    print("\n" + "=" * 80)
    print("🧪 已注册实验")
    print("=" * 80)
    for exp_id, description in registry_list():
        print(f"  • {exp_id:<26} {description}")
    print()


def cmd_report(argv):
    from report import render_directory
    from state import storage_root

    p = argparse.ArgumentParser(prog="acf_lab.py report")
    p.add_argument("--dir", default=None, help="缺省为存储目录")
    args = p.parse_args(argv)
    root = Path(args.dir) if args.dir else storage_root(SETTINGS)
    outputs = render_directory(root)
    print(f"✅ 已渲染 {len(outputs)} 份报告，汇总: {root / 'index.html'}")


def cmd_status(argv):
    import json

    from experiments import registry_list
    from state import list_runs, storage_root

    root = storage_root(SETTINGS)
    runs = list_runs(root)
    print("\n" + "=" * 80)
    print("📊 ACF 实验室 - 运行状态")
    print("=" * 80)
    print(f"\n💾 存储目录: {root}")
    print(f"🌐 时区: {SETTINGS.get('timezone')}")
    print(f"⚙️  并行度: {SETTINGS.get('workers')}")
    print(f"🧮 求积权重: {acf_functional.QUADRATURE['weighting']}，求解器: {SETTINGS.get('solver', {}).get('method')}")
    print(f"🧪 已注册实验: {len(registry_list())} 个")
    print(f"📈 已有运行: {len(runs)} 次")
    for run in runs[:10]:
        try:
            report = json.loads((run / "report.json").read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            print(f"   • {run.name}: ⚠️ 无法读取 ({e})")
            continue
        statuses = [c.get("status") for c in report.get("criteria", {}).values()]
        flag = "✅" if report.get("complete") and "fail" not in statuses else "❌"
        print(f"   • {flag} {run.name}: 通过 {statuses.count('pass')}，失败 {statuses.count('fail')}")
    print("\n" + "=" * 80 + "\n")


COMMANDS = {
    "generate": cmd_generate,
    "acf": cmd_acf,
    "fit": cmd_fit,
    "beta": cmd_beta,
    "cover": cmd_cover,
    "blowup": cmd_blowup,
    "run": cmd_run,
    "list": cmd_list,
    "report": cmd_report,
    "status": cmd_status,
}


def print_help():
    print("\n可用命令:")
    print("  python acf_lab.py generate <kind> --out pair.acf [--param k=v]  - 生成容许对")
    print("  python acf_lab.py acf <pair.acf> [--x 0,0] [--r-max 1]         - ACF 径向剖面")
    print("  python acf_lab.py fit <pair.acf> [--rho 0.25] [--R 1]          - 截断线性拟合与稳定性比")
    print("  python acf_lab.py beta <pair.acf> [--r 1 0.5]                  - 界面点云与 β 数")
    print("  python acf_lab.py cover <pair.acf> [--epsilon 1] [--R 0.125]   - 迭代覆盖")
    print("  python acf_lab.py blowup <pair.acf> [--r-max 0.25]             - 放大轨迹")
    print("  python acf_lab.py run <id|config.yaml> | --all                 - 运行实验")
    print("  python acf_lab.py list                                          - 列出实验")
    print("  python acf_lab.py report [--dir 目录]                          - 渲染报告")
    print("  python acf_lab.py status                                        - 显示状态")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        print_help()
        return 0
    command = argv[0].lower()
    handler = COMMANDS.get(command)
    if handler is None:
        print(f"未知命令: {command}")
        print_help()
        return 2
    try:
        return handler(argv[1:]) or 0
    except AcfLabError as e:
        logger.error(f"❌ {command} 失败: {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
