"""
评估指标模块

MAC利用率分类、利用率增益模型、MSE、能耗模型以及逐层降线程（throttling）选择
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Sequence

import numpy as np

from ..models import EnergyReport, LayerEnergy, PowerTable, UtilBreakdown
from .lowering.quantize import dequantize_output
from .qnum import fits4
from .systolic import CycleTrace

logger = logging.getLogger(__name__)

UTIL_BUCKET = 0.1
HISTOGRAM_BINS = 10


class MacClass(str, Enum):
    IDLE = "Idle"
    PARTIAL = "Partial"
    FULL = "Full"


def classify_mac(x: int, w: int) -> MacClass:
    """任一输入为零即空闲；两者非零且至少一个4位足够为部分利用；否则完全利用"""
    if x == 0 or w == 0:
        return MacClass.IDLE
    if fits4(x) or fits4(w, signed=True):
        return MacClass.PARTIAL
    return MacClass.FULL


def _width_counts(values: np.ndarray, axis: int, signed: bool):
    zero = (values == 0).sum(axis=axis)
    if signed:
        small = ((values >= -8) & (values <= 7) & (values != 0)).sum(axis=axis)
    else:
        small = ((values >= 1) & (values <= 15)).sum(axis=axis)
    wide = values.shape[axis] - zero - small
    return zero.astype(np.int64), small.astype(np.int64), wide.astype(np.int64)


def util_breakdown(X, W) -> UtilBreakdown:
    """统计一层全部 M·K·N 次MAC的利用率分解"""
    X = np.asarray(getattr(X, "data", X), dtype=np.int64)
    W = np.asarray(getattr(W, "data", W), dtype=np.int64)
    M, K = X.shape
    N = W.shape[1]
    x_zero, _, x_wide = _width_counts(X, axis=0, signed=False)
    w_zero, _, w_wide = _width_counts(W, axis=1, signed=True)
    idle = (x_zero * N + (M - x_zero) * w_zero).sum()
    full = (x_wide * w_wide).sum()
    total = M * K * N
    return UtilBreakdown(
        full_8x8=float(full / total),
        partial=float((total - idle - full) / total),
        idle=float(idle / total),
    )


def util_gain_model(s: float, threads: int) -> float:
    """独立性假设下的利用率增益 (1 − s^T)/(1 − s)，s=1时取极限T"""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"稀疏度必须在[0,1]内: {s}")
    if s == 1.0:
        return float(threads)
    return (1.0 - s ** threads) / (1.0 - s)


def utilization(trace: CycleTrace) -> float:
    """至少一个线程活跃的PE周期占全部PE周期的比例"""
    cycles = trace.pe_cycles()
    return trace.utilized_cycles() / cycles if cycles else 0.0


def measured_util_gain(trace_1t: CycleTrace, trace_smt: CycleTrace) -> float:
    base = utilization(trace_1t)
    if base == 0.0:
        return 1.0
    return utilization(trace_smt) / base


def measured_sparsity(trace_1t: CycleTrace) -> float:
    """单线程基线中空闲MAC的比例"""
    return 1.0 - utilization(trace_1t)


def util_histogram(pe_util: np.ndarray) -> List[int]:
    counts, _ = np.histogram(np.asarray(pe_util).ravel(), bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    return [int(c) for c in counts]


def mse(output, reference, x=None, w=None) -> float:
    """输出误差的均方值；给出X、W的QTile时在反量化后的实数域计算"""
    output = np.asarray(output, dtype=np.int64)
    reference = np.asarray(reference, dtype=np.int64)
    if output.shape != reference.shape:
        raise ValueError(f"输出形状不一致: {output.shape} 与 {reference.shape}")
    if output.size == 0:
        return 0.0
    if x is not None and w is not None:
        diff = dequantize_output(output - reference, x, w)
    else:
        diff = (output - reference).astype(np.float64)
    return float(np.mean(diff ** 2))


def max_abs_error(output, reference) -> int:
    diff = np.asarray(output, dtype=np.int64) - np.asarray(reference, dtype=np.int64)
    return int(np.abs(diff).max()) if diff.size else 0


def lookup_power(table: PowerTable, threads: int, util: float) -> float:
    """查询平均功耗（mW）

    利用率先取整到10%分桶，再在同线程数的测量点之间线性插值；
    超出测量范围时取最近的测量点。每张表每个线程数只记录一次WARNING，
    只有一个测量点的线程数按常数处理，只记DEBUG。
    """
    points = sorted((p for p in table.points if p.threads == threads), key=lambda p: p.utilization)
    if not points:
        raise ValueError(f"功耗表缺少 {threads} 线程的测量点")
    bucket = round(round(util / UTIL_BUCKET) * UTIL_BUCKET, 10)
    lo, hi = points[0].utilization, points[-1].utilization
    if bucket < lo - 1e-12 or bucket > hi + 1e-12:
        message = f"利用率 {bucket:.1f} 超出 {threads} 线程功耗表范围 [{lo:.1f},{hi:.1f}]，取最近测量点"
        if len(points) > 1 and table.first_clamp(threads):
            logger.warning(message)
        else:
            logger.debug(message)
    xs = [p.utilization for p in points]
    ys = [p.power_mw for p in points]
    return float(np.interp(bucket, xs, ys))


@dataclass(frozen=True)
class LayerUsage:
    """能耗计算的单层输入"""
    name: str
    macs: int
    threads: int
    utilization: float


def energy(layers: Iterable[LayerUsage], table: Optional[PowerTable] = None) -> EnergyReport:
    """E_l = MAC_l / Throughput · P_l（mW·s 即 mJ）"""
    table = table or PowerTable()
    entries = []
    for layer in layers:
        throughput = table.base_throughput_macs * layer.threads
        power = lookup_power(table, layer.threads, layer.utilization)
        entries.append(LayerEnergy(
            name=layer.name,
            macs=layer.macs,
            threads=layer.threads,
            utilization=layer.utilization,
            throughput_macs=throughput,
            power_mw=power,
            energy_mj=layer.macs / throughput * power,
        ))
    return EnergyReport(layers=entries, total_mj=float(sum(e.energy_mj for e in entries)))


def select_throttled_layers(per_layer_mse: Sequence[float], count: int, tie_tolerance: float = 0.0) -> List[int]:
    """选择MSE最高的count层降线程

    MSE相差在相对容差tie_tolerance以内视为相等，优先选择靠前的层。

    Returns:
        升序排列的层下标
    """
    if count < 0 or count > len(per_layer_mse):
        raise ValueError(f"降线程层数 {count} 超出层数 {len(per_layer_mse)}")
    remaining = list(range(len(per_layer_mse)))
    chosen = []
    for _ in range(count):
        peak = max(per_layer_mse[i] for i in remaining)
        threshold = peak - abs(peak) * tie_tolerance
        pick = min(i for i in remaining if per_layer_mse[i] >= threshold)
        chosen.append(pick)
        remaining.remove(pick)
    return sorted(chosen)


def network_speedup(baseline_cycles: Sequence[int], smt_cycles: Sequence[int]) -> float:
    """整网加速比：单线程周期之和 / 各层实际线程数下的周期之和"""
    if len(baseline_cycles) != len(smt_cycles):
        raise ValueError("层数不一致")
    total = sum(smt_cycles)
    if total <= 0:
        raise ValueError("周期数必须为正")
    return sum(baseline_cycles) / total
