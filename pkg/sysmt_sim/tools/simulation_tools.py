"""模拟工具模块

通过MCP提供模拟、自检、参数扫描和重排序统计
计算在工作线程中执行，完成后写入报告文件并登记运行记录
"""

import asyncio
import logging
from typing import Any, Dict, Optional

from fastmcp import Context, FastMCP
from pydantic import Field
from typing_extensions import Annotated

from ..database import RunRecordCreate, get_run_repository, init_database
from ..models import ExperimentConfig
from ..services import report_writer
from ..services.experiment_service import SWEEP_AXES, reorder_stats, run_simulation, run_sweep
from ..services.verification import run_verification

logger = logging.getLogger(__name__)

# 创建模拟工具服务器
simulation_server = FastMCP(name="SySMT模拟")


def _parse_config(config: Optional[Dict[str, Any]], **sim_overrides) -> ExperimentConfig:
    data = ExperimentConfig.model_validate(config or {}).model_dump(mode="json")
    for key, value in sim_overrides.items():
        if value is not None:
            data["sim"][key] = value
    return ExperimentConfig.model_validate(data)


async def _record(command: str, name: str, config: Dict[str, Any], summary: Dict[str, Any], output_dir: str) -> Optional[str]:
    """登记运行记录；登记失败不影响结果"""
    try:
        await init_database()
        repository = await get_run_repository()
        record = await repository.create(RunRecordCreate(
            command=command, name=name, config=config, summary=summary, output_dir=output_dir
        ))
        return record.run_id
    except Exception as e:
        logger.warning(f"登记运行记录失败: {e}")
        return None


@simulation_server.tool
async def simulate(
    config: Annotated[Optional[Dict[str, Any]], Field(description="实验配置（JSON对象，缺省字段取默认值）")] = None,
    threads: Annotated[Optional[int], Field(description="线程数：1、2或4")] = None,
    strategy: Annotated[Optional[str], Field(description="冲突处理策略，如 S+A、Aw、none")] = None,
    reorder: Annotated[Optional[bool], Field(description="是否启用列重排序")] = None,
    ctx: Context = None
) -> Dict[str, Any]:
    """模拟SySMT脉动阵列上的一次网络推理

    同时运行单线程基线，返回加速比、MSE、利用率增益与能耗摘要，并写出report.json与layers.csv。

    关键词：模拟、加速比、利用率、精度损失、能耗

    Returns:
        运行摘要字典
    """
    try:
        cfg = _parse_config(config, threads=threads, strategy=strategy, reorder=reorder)
        if ctx:
            await ctx.info(f"开始模拟实验 {cfg.name}")
        report = await asyncio.to_thread(run_simulation, cfg)
        report_writer.write_run_report(cfg.output_dir, cfg, report)
        summary = {
            "speedup_total": report.speedup_total,
            "speedup_steady": report.speedup_steady,
            "total_mse": report.total_mse,
            "energy_mj": report.energy.total_mj,
            "baseline_energy_mj": report.baseline_energy.total_mj,
        }
        run_id = await _record("simulate", cfg.name, cfg.model_dump(mode="json"), summary, str(cfg.output_dir))
        return {
            "success": True,
            "run_id": run_id,
            **summary,
            "layers": [
                {
                    "name": layer.name,
                    "threads": layer.threads,
                    "mse": layer.mse,
                    "util_gain": layer.util_gain,
                    "util_gain_model": layer.util_gain_model,
                    "counts": layer.counts.model_dump(),
                }
                for layer in report.layers
            ],
            "output_dir": str(cfg.output_dir),
        }
    except Exception as e:
        error_msg = f"模拟失败: {e}"
        logger.error(error_msg)
        if ctx:
            await ctx.error(error_msg)
        return {"success": False, "error": error_msg}


@simulation_server.tool
async def verify(
    seed: Annotated[int, Field(description="随机自检的种子", ge=0)] = 0,
    ctx: Context = None
) -> Dict[str, Any]:
    """运行乘法器、舍入、网格内核和卷积降维的自检

    关键词：自检、验证、穷举、位精确

    Returns:
        每项自检的结果与反例
    """
    try:
        report = await asyncio.to_thread(run_verification, seed=seed)
        run_id = await _record("verify", "verify", {"seed": seed}, {"passed": report.passed}, "")
        return {"success": True, "run_id": run_id, **report.model_dump(mode="json")}
    except Exception as e:
        error_msg = f"自检执行失败: {e}"
        logger.error(error_msg)
        if ctx:
            await ctx.error(error_msg)
        return {"success": False, "error": error_msg}


@simulation_server.tool
async def sweep(
    axis: Annotated[str, Field(description=f"扫描轴：{', '.join(SWEEP_AXES)}")],
    config: Annotated[Optional[Dict[str, Any]], Field(description="实验配置（JSON对象）")] = None,
    workers: Annotated[Optional[int], Field(description="并行扫描点数", ge=1)] = None,
    ctx: Context = None
) -> Dict[str, Any]:
    """沿稀疏度、策略、线程数或降线程层数扫描

    关键词：扫描、稀疏度、策略对比、精度与加速比权衡

    Returns:
        扫描点列表
    """
    try:
        cfg = _parse_config(config)
        if workers is not None:
            cfg = cfg.model_copy(update={"max_workers": workers})
        if ctx:
            await ctx.info(f"开始扫描 {axis}")
        points = await asyncio.to_thread(run_sweep, cfg, axis)
        report_writer.write_sweep(cfg.output_dir, cfg, axis, points)
        run_id = await _record("sweep", cfg.name, cfg.model_dump(mode="json"),
                               {"axis": axis, "points": len(points)}, str(cfg.output_dir))
        return {
            "success": True,
            "run_id": run_id,
            "axis": axis,
            "points": [p.model_dump(mode="json") for p in points],
        }
    except Exception as e:
        error_msg = f"扫描失败: {e}"
        logger.error(error_msg)
        if ctx:
            await ctx.error(error_msg)
        return {"success": False, "error": error_msg}


@simulation_server.tool(name="reorder_stats")
async def compute_reorder_stats(
    config: Annotated[Optional[Dict[str, Any]], Field(description="实验配置（JSON对象）")] = None,
    threads: Annotated[Optional[int], Field(description="线程数：2或4")] = None,
    ctx: Context = None
) -> Dict[str, Any]:
    """统计逐层列宽度分布并计算列置换

    关键词：重排序、列统计、置换、冲突

    Returns:
        每层的统计、置换和期望冲突数
    """
    try:
        cfg = _parse_config(config)
        results = await asyncio.to_thread(reorder_stats, cfg, threads)
        report_writer.write_reorder_stats(cfg.output_dir, cfg, results)
        run_id = await _record("reorder-stats", cfg.name, cfg.model_dump(mode="json"),
                               {"layers": len(results)}, str(cfg.output_dir))
        return {"success": True, "run_id": run_id, "layers": results}
    except Exception as e:
        error_msg = f"重排序统计失败: {e}"
        logger.error(error_msg)
        if ctx:
            await ctx.error(error_msg)
        return {"success": False, "error": error_msg}
