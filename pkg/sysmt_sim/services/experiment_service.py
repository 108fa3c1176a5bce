"""
实验服务模块

负载准备、逐层模拟（含T=1基线）、参数扫描与重排序统计
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from ..models import (
    ExperimentConfig,
    GeneratorParams,
    LayerReport,
    RunReport,
    SimConfig,
    Strategy,
    SweepPoint,
)
from .lowering import QTile, TileKind, gen_synthetic, load_tile
from .metrics import (
    LayerUsage,
    energy,
    max_abs_error,
    measured_util_gain,
    mse,
    select_throttled_layers,
    util_breakdown,
    util_gain_model,
    util_histogram,
    utilization,
)
from .reorder import (
    ColumnStats,
    Permutation,
    apply_permutation,
    compute_permutation,
    expected_collisions,
    gather_stats,
)
from .systolic import SimulationResult, reference_matmul, simulate

logger = logging.getLogger(__name__)

SWEEP_AXES = ("sparsity", "strategy", "threads", "throttle_count")


@dataclass
class Layer:
    """一层负载：量化后的X、W以及重排序用的校准激活"""
    name: str
    X: QTile
    W: QTile
    calibration: List[QTile] = field(default_factory=list)


@dataclass
class LayerOutcome:
    report: LayerReport
    result: SimulationResult
    baseline: SimulationResult
    permutation: Optional[Permutation] = None


def build_workload(config: ExperimentConfig) -> List[Layer]:
    """按配置读取或生成负载

    所有随机性都来自config.seed：每层派生出列分布、评估数据和校准数据三个子种子。

    Raises:
        FileNotFoundError: 张量文件不存在
    """
    source = config.workload
    if source.files is not None:
        layers = []
        for spec in source.files:
            X = load_tile(spec.x_path, TileKind.ACTIVATION)
            W = load_tile(spec.w_path, TileKind.WEIGHT)
            calibration = [load_tile(p, TileKind.ACTIVATION) for p in spec.calibration_paths] or [X]
            layers.append(Layer(spec.name, X, W, calibration))
        logger.info(f"已加载 {len(layers)} 层外部负载")
        return layers

    params = source.generator
    layers = []
    for index, layer_seed in enumerate(np.random.SeedSequence(config.seed).spawn(params.layers)):
        profile_seed, data_seed, calibration_seed = layer_seed.spawn(3)
        p_zero = params.layer_p_zero[index] if params.layer_p_zero else params.p_zero
        common = dict(p_zero=p_zero, p_fits4=params.p_fits4, correlation=params.correlation, profile_seed=profile_seed)
        X, W = gen_synthetic(params.K, params.M, params.N, seed=data_seed, w_sparsity=params.w_sparsity, **common)
        calibration, _ = gen_synthetic(params.K, params.calibration_rows, 1, seed=calibration_seed, **common)
        layers.append(Layer(f"layer{index}", X, W, [calibration]))
    logger.info(f"已生成 {len(layers)} 层合成负载 (M={params.M} K={params.K} N={params.N})")
    return layers


def layer_permutation(layer: Layer, threads: int, sim: SimConfig) -> Permutation:
    stats = gather_stats(layer.calibration)
    return compute_permutation(stats, threads, sim.score_weights)


def simulate_layer(
    layer: Layer,
    sim: SimConfig,
    threads: int,
    strategy: Optional[Strategy] = None,
    reorder: Optional[bool] = None,
    baseline: Optional[SimulationResult] = None,
) -> LayerOutcome:
    """模拟一层并与T=1基线和参考乘积比较"""
    strategy = strategy or sim.strategy
    reorder = sim.reorder if reorder is None else reorder
    reference = reference_matmul(layer.X, layer.W)
    if baseline is None:
        baseline = simulate(layer.X, layer.W, sim.grid_for(1, strategy), engine=sim.engine)

    X, W, permutation = layer.X, layer.W, None
    if threads == 1:
        result = baseline
    else:
        if reorder:
            permutation = layer_permutation(layer, threads, sim)
            X, W = apply_permutation(layer.X, layer.W, permutation)
        result = simulate(X, W, sim.grid_for(threads, strategy), engine=sim.engine)

    spec = result.spec
    base_util = utilization(baseline.trace)
    sparsity = 1.0 - base_util
    report = LayerReport(
        name=layer.name,
        M=spec.M,
        K=spec.K,
        N=spec.N,
        threads=threads,
        strategy=strategy.label,
        reordered=permutation is not None,
        macs=spec.macs(),
        total_cycles=result.total_cycles,
        steady_cycles=result.steady_cycles,
        baseline_total_cycles=baseline.total_cycles,
        baseline_steady_cycles=baseline.steady_cycles,
        counts=result.trace.counts(),
        rounded_terms=result.trace.rounded_terms(),
        utilization=utilization(result.trace),
        baseline_utilization=base_util,
        util_gain=measured_util_gain(baseline.trace, result.trace),
        util_gain_model=util_gain_model(sparsity, threads),
        sparsity=sparsity,
        util_histogram=util_histogram(result.trace.pe_utilization(spec.M, spec.N)),
        breakdown=util_breakdown(layer.X, layer.W),
        mse=mse(result.output, reference, layer.X, layer.W),
        max_abs_error=max_abs_error(result.output, reference),
    )
    logger.info(
        f"层 {layer.name} 完成: T={threads} 策略={strategy.label} "
        f"周期={result.total_cycles}/{baseline.total_cycles} MSE={report.mse:.3e}"
    )
    return LayerOutcome(report, result, baseline, permutation)


def _network_utilization(reports: List[LayerReport], baseline: bool) -> float:
    weighted = total = 0.0
    for r in reports:
        steps = r.K if baseline else -(-r.K // r.threads)
        pe_cycles = steps * r.M * r.N
        weighted += (r.baseline_utilization if baseline else r.utilization) * pe_cycles
        total += pe_cycles
    return weighted / total if total else 0.0


def run_simulation(
    config: ExperimentConfig,
    layers: Optional[List[Layer]] = None,
    sim: Optional[SimConfig] = None,
) -> RunReport:
    """逐层模拟整个网络，汇总加速比、MSE和能耗"""
    sim = sim or config.sim
    layers = layers if layers is not None else build_workload(config)
    logger.info(f"开始运行实验 {config.name}: {len(layers)} 层，默认 T={sim.threads}，策略 {sim.strategy.label}")

    reports = [simulate_layer(layer, sim, sim.threads_for(layer.name)).report for layer in layers]
    total = sum(r.total_cycles for r in reports)
    steady = sum(r.steady_cycles for r in reports)
    base_total = sum(r.baseline_total_cycles for r in reports)
    base_steady = sum(r.baseline_steady_cycles for r in reports)

    smt_energy = energy(
        (LayerUsage(r.name, r.macs, r.threads, r.utilization) for r in reports), sim.power_table
    )
    base_energy = energy(
        (LayerUsage(r.name, r.macs, 1, r.baseline_utilization) for r in reports), sim.power_table
    )
    report = RunReport(
        name=config.name,
        seed=config.seed,
        layers=reports,
        total_cycles=total,
        steady_cycles=steady,
        baseline_total_cycles=base_total,
        baseline_steady_cycles=base_steady,
        speedup_total=base_total / total,
        speedup_steady=base_steady / steady,
        total_mse=float(sum(r.mse for r in reports)),
        energy=smt_energy,
        baseline_energy=base_energy,
    )
    logger.info(f"实验 {config.name} 完成: 加速比 {report.speedup_total:.3f}，总MSE {report.total_mse:.3e}")
    return report


def _sweep_point(axis: str, label: str, value: float, report: RunReport, reorder: bool,
                 threads: int, throttled: Optional[List[str]] = None) -> SweepPoint:
    base_util = _network_utilization(report.layers, baseline=True)
    smt_util = _network_utilization(report.layers, baseline=False)
    sparsity = 1.0 - base_util
    return SweepPoint(
        axis=axis,
        label=label,
        value=value,
        reorder=reorder,
        threads=threads,
        speedup=report.speedup_total,
        util_gain=smt_util / base_util if base_util else 1.0,
        util_gain_model=util_gain_model(sparsity, threads),
        sparsity=sparsity,
        mse=report.total_mse,
        throttled_layers=throttled or [],
    )


def generator_at_sparsity(params: GeneratorParams, s: float) -> GeneratorParams:
    """把合成负载的激活稀疏度改为s

    非零元素中4位与8位的比例保持不变，p_fits4随之按(1-s)缩放。
    """
    nonzero = 1.0 - params.p_zero
    fits4_share = min(params.p_fits4 / nonzero, 1.0) if nonzero > 0 else 0.0
    data = params.model_dump()
    data.update(p_zero=s, p_fits4=fits4_share * (1.0 - s), layer_p_zero=None)
    return GeneratorParams.model_validate(data)


def _run_jobs(jobs: List[Callable[[], Any]], max_workers: int) -> List[Any]:
    """执行扫描点；结果保持提交顺序"""
    if max_workers <= 1 or len(jobs) <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = [executor.submit(job) for job in jobs]
        return [f.result() for f in futures]


def run_sweep(config: ExperimentConfig, axis: str) -> List[SweepPoint]:
    """沿指定轴扫描，每个点一行

    sparsity：合成负载的激活稀疏度（分别不重排和重排）
    strategy：冲突处理策略
    threads：线程数
    throttle_count：在基准线程数下按MSE选出的层降为较低线程数的个数
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"未知的扫描轴: {axis}，可选 {', '.join(SWEEP_AXES)}")
    sweep = config.sweep
    sim = config.sim
    logger.info(f"开始扫描 {axis}: 实验 {config.name}")

    if axis == "sparsity":
        if config.workload.generator is None:
            raise ValueError("稀疏度扫描需要合成负载")
        jobs = []
        for s in sweep.sparsity_values:
            generator = generator_at_sparsity(config.workload.generator, s)
            point_config = config.model_copy(update={"workload": config.workload.model_copy(update={"generator": generator})})
            for reorder in (False, True):
                point_sim = sim.model_copy(update={"reorder": reorder})
                jobs.append(lambda c=point_config, p=point_sim, s=s, r=reorder: _sweep_point(
                    "sparsity", f"s={s:g}", s, run_simulation(c, sim=p), r, p.threads))
        return _run_jobs(jobs, config.max_workers)

    layers = build_workload(config)

    if axis == "strategy":
        jobs = []
        for i, label in enumerate(sweep.strategies):
            point_sim = sim.model_copy(update={"strategy": Strategy.parse(label)})
            jobs.append(lambda p=point_sim, i=i, label=label: _sweep_point(
                "strategy", label, float(i), run_simulation(config, layers, p), p.reorder, p.threads))
        return _run_jobs(jobs, config.max_workers)

    if axis == "threads":
        jobs = []
        for threads in sweep.thread_values:
            point_sim = sim.model_copy(update={"threads": threads, "layer_threads": {}})
            jobs.append(lambda p=point_sim, t=threads: _sweep_point(
                "threads", f"T={t}", float(t), run_simulation(config, layers, p), p.reorder, t))
        return _run_jobs(jobs, config.max_workers)

    # throttle_count
    base = sweep.throttle_base_threads
    profile_sim = sim.model_copy(update={"threads": base, "layer_threads": {}})
    profile = run_simulation(config, layers, profile_sim)
    per_layer_mse = [r.mse for r in profile.layers]
    jobs = []
    for count in range(len(layers) + 1):
        chosen = select_throttled_layers(per_layer_mse, count, sweep.tie_tolerance)
        names = [layers[i].name for i in chosen]
        point_sim = profile_sim.model_copy(update={"layer_threads": {n: sweep.throttle_to_threads for n in names}})
        jobs.append(lambda p=point_sim, c=count, names=names: _sweep_point(
            "throttle_count", f"throttle={c}", float(c), run_simulation(config, layers, p), p.reorder, base, names))
    return _run_jobs(jobs, config.max_workers)


def reorder_stats(config: ExperimentConfig, threads: Optional[int] = None) -> Dict[str, Dict[str, Any]]:
    """逐层统计列宽度分布并计算置换

    Returns:
        层名 -> {stats, permutation, expected_collisions_identity, expected_collisions_reordered}
    """
    threads = threads or config.sim.threads
    results = {}
    for layer in build_workload(config):
        stats: ColumnStats = gather_stats(layer.calibration)
        perm = compute_permutation(stats, threads, config.sim.score_weights)
        results[layer.name] = {
            "stats": stats.to_dict(),
            "permutation": list(perm.indices),
            "expected_collisions_identity": expected_collisions(stats, Permutation.identity(stats.K), threads),
            "expected_collisions_reordered": expected_collisions(stats, perm, threads),
        }
        logger.info(f"层 {layer.name} 置换计算完成（恒等置换: {perm.is_identity}）")
    return results
