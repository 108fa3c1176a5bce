"""
命令行实验驱动

子命令：simulate、verify、sweep、reorder-stats
退出码：0 成功；1 自检失败；2 用法/配置错误或输入文件不存在
"""

import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from .database import DatabaseManager, RunRecordCreate, RunRecordRepository
from .models import ExperimentConfig
from .services import report_writer
from .services.experiment_service import SWEEP_AXES, reorder_stats, run_simulation, run_sweep
from .services.verification import run_verification

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(level: str = "INFO", log_file: Optional[str] = None):
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT, handlers=handlers, force=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sysmt", description="SySMT（NB-SMT输出驻留脉动阵列）模拟器")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="日志级别")
    parser.add_argument("--log-file", default=None, help="额外写入的日志文件")
    parser.add_argument("--registry", default=None, help="运行记录数据库路径（SQLite）")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="模拟一个网络并输出报告")
    _add_common(sim)
    sim.add_argument("--x", type=Path, default=None, help="激活矩阵文件（.qtile/.csv）")
    sim.add_argument("--w", type=Path, default=None, help="权重矩阵文件（.qtile/.csv）")
    sim.add_argument("--threads", type=int, choices=[1, 2, 4], default=None, help="线程数")
    sim.add_argument("--strategy", default=None, help="冲突处理策略，如 S+A、Aw、none")
    sim.add_argument("--reorder", action=argparse.BooleanOptionalAction, default=None, help="启用列重排序")
    sim.add_argument("--engine", choices=["vectorized", "cycle"], default=None, help="模拟引擎")

    verify = sub.add_parser("verify", help="运行穷举与随机自检")
    verify.add_argument("--output", type=Path, default=None, help="输出目录")
    verify.add_argument("--seed", type=int, default=0, help="随机自检的种子")

    sweep = sub.add_parser("sweep", help="参数扫描，输出CSV点集")
    _add_common(sweep)
    sweep.add_argument("--axis", choices=SWEEP_AXES, required=True, help="扫描轴")
    sweep.add_argument("--workers", type=int, default=None, help="并行扫描点数")

    stats = sub.add_parser("reorder-stats", help="统计列宽度分布并计算置换")
    _add_common(stats)
    stats.add_argument("--threads", type=int, choices=[2, 4], default=None, help="线程数")
    return parser


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, default=None, help="JSON实验配置")
    parser.add_argument("--seed", type=int, default=None, help="覆盖配置中的随机种子")
    parser.add_argument("--output", type=Path, default=None, help="覆盖输出目录")


def load_config(path: Optional[Path]) -> ExperimentConfig:
    """读取并校验JSON配置；未给出时使用默认配置"""
    if path is None:
        return ExperimentConfig()
    if not path.exists():
        raise FileNotFoundError(f"配置文件不存在: {path}")
    return ExperimentConfig.model_validate_json(path.read_bytes())


def apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    data = config.model_dump(mode="json")
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    if getattr(args, "output", None) is not None:
        data["output_dir"] = str(args.output)
    if getattr(args, "workers", None) is not None:
        data["max_workers"] = args.workers
    for key in ("threads", "strategy", "reorder", "engine"):
        value = getattr(args, key, None)
        if value is not None:
            data["sim"][key] = value
    x_path, w_path = getattr(args, "x", None), getattr(args, "w", None)
    if (x_path is None) != (w_path is None):
        raise ValueError("--x 与 --w 必须同时给出")
    if x_path is not None:
        data["workload"] = {"files": [{"name": x_path.stem, "x_path": str(x_path), "w_path": str(w_path)}]}
    return ExperimentConfig.model_validate(data)


async def _record_run(registry: str, command: str, name: str, config: Dict[str, Any],
                      summary: Dict[str, Any], output_dir: str):
    manager = DatabaseManager(registry)
    try:
        await manager.initialize_database()
        repository = RunRecordRepository(manager)
        await repository.create(RunRecordCreate(
            command=command, name=name, config=config, summary=summary, output_dir=output_dir
        ))
    finally:
        await manager.close()


def record_run(args, command: str, name: str, config: Dict[str, Any], summary: Dict[str, Any], output_dir: Path):
    if args.registry:
        asyncio.run(_record_run(args.registry, command, name, config, summary, str(output_dir)))


def cmd_simulate(args) -> int:
    config = apply_overrides(load_config(args.config), args)
    report = run_simulation(config)
    report_writer.write_run_report(config.output_dir, config, report)
    summary = {
        "speedup_total": report.speedup_total,
        "speedup_steady": report.speedup_steady,
        "total_mse": report.total_mse,
        "energy_mj": report.energy.total_mj,
    }
    record_run(args, "simulate", config.name, config.model_dump(mode="json"), summary, config.output_dir)
    print(f"加速比 {report.speedup_total:.4f}（稳态 {report.speedup_steady:.4f}），总MSE {report.total_mse:.6g}")
    return EXIT_OK


def cmd_verify(args) -> int:
    report = run_verification(seed=args.seed)
    if args.output is not None:
        report_writer.write_verification(args.output, report)
    for check in report.checks:
        status = "通过" if check.passed else "失败"
        print(f"{check.name}: {status}（{check.cases} 个用例，{check.seconds:.2f} 秒）")
        if check.counterexample:
            print(f"  反例: {check.counterexample}")
    record_run(args, "verify", "verify", {"seed": args.seed}, {"passed": report.passed}, args.output or Path("."))
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


def cmd_sweep(args) -> int:
    config = apply_overrides(load_config(args.config), args)
    points = run_sweep(config, args.axis)
    report_writer.write_sweep(config.output_dir, config, args.axis, points)
    record_run(args, "sweep", config.name, config.model_dump(mode="json"),
               {"axis": args.axis, "points": len(points)}, config.output_dir)
    print(f"扫描 {args.axis} 完成，共 {len(points)} 个点")
    return EXIT_OK


def cmd_reorder_stats(args) -> int:
    config = apply_overrides(load_config(args.config), args)
    results = reorder_stats(config, threads=args.threads)
    report_writer.write_reorder_stats(config.output_dir, config, results)
    record_run(args, "reorder-stats", config.name, config.model_dump(mode="json"),
               {"layers": len(results)}, config.output_dir)
    print(f"已为 {len(results)} 层计算置换")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "reorder-stats": cmd_reorder_stats,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    setup_logging(args.log_level, args.log_file)

    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as e:
        logger.error(f"输入文件不存在: {e}")
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as e:
        logger.error(f"配置校验失败: {e}")
        print(f"配置错误: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        logger.error(f"参数错误: {e}")
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
