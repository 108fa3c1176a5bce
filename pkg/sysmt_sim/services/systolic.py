"""
输出驻留脉动阵列模拟模块

负责斜向（skewed）送数、线程拆分、分块输出平铺、周期计数和结果收集。
支持两种引擎：
- cycle：逐周期移动寄存器，每个PE调用标量控制逻辑
- vectorized：按块一次性计算所有步，调用网格内核
两种引擎的输出和按步索引的跟踪完全一致。
"""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from ..models import CategoryCounts, GridConfig
from .pe_core import (
    PIPELINE_DRAIN,
    AccumulatorOverflowError,
    CycleCategory,
    PEState,
    ThreadInput,
    pe_drain,
    pe_step,
    squeeze_grid,
)
from .qnum import ACC_MAX, ACC_MIN, ACT_MAX, ACT_MIN, WGT_MAX, WGT_MIN

logger = logging.getLogger(__name__)

ENGINES = ("vectorized", "cycle")

# 向量化引擎每次处理的最大步数，限制中间数组大小
_STEP_CHUNK = 512


@dataclass(frozen=True)
class TileSpec:
    """矩阵乘法规模：X为M×K，W为K×N"""
    M: int
    K: int
    N: int

    def __post_init__(self):
        if min(self.M, self.K, self.N) < 1:
            raise ValueError(f"矩阵维度必须为正: {self}")

    @classmethod
    def from_arrays(cls, X: np.ndarray, W: np.ndarray) -> "TileSpec":
        if X.ndim != 2 or W.ndim != 2:
            raise ValueError(f"输入必须是二维矩阵: X{X.shape} W{W.shape}")
        if X.shape[1] != W.shape[0]:
            raise ValueError(f"维度不匹配: X{X.shape} 与 W{W.shape}")
        return cls(M=X.shape[0], K=X.shape[1], N=W.shape[1])

    def steps(self, threads: int) -> int:
        return -(-self.K // threads)

    def macs(self) -> int:
        return self.M * self.K * self.N


@dataclass
class BlockTrace:
    """一个输出块的按步跟踪，数组形状为 (步数, 块行数, 块列数)"""
    row0: int
    col0: int
    category: np.ndarray
    reduced_mask: np.ndarray
    n_active: np.ndarray
    cycles: int

    @property
    def shape(self) -> Tuple[int, int]:
        return self.category.shape[1], self.category.shape[2]


@dataclass
class CycleTrace:
    """整次模拟的跟踪"""
    threads: int
    grid_rows: int
    grid_cols: int
    steps: int
    blocks: List[BlockTrace] = field(default_factory=list)

    @property
    def total_cycles(self) -> int:
        return sum(b.cycles for b in self.blocks)

    @property
    def steady_cycles(self) -> int:
        return self.steps * len(self.blocks)

    def counts(self) -> CategoryCounts:
        totals = np.zeros(len(CycleCategory), dtype=np.int64)
        for block in self.blocks:
            totals += np.bincount(block.category.ravel(), minlength=len(CycleCategory))
        return CategoryCounts(
            noop=int(totals[CycleCategory.NOOP]),
            single=int(totals[CycleCategory.SINGLE]),
            squeeze_exact=int(totals[CycleCategory.SQUEEZE_EXACT]),
            squeeze_lossy=int(totals[CycleCategory.SQUEEZE_LOSSY]),
        )

    def rounded_terms(self) -> int:
        """经过高半字节舍入路径的活跃乘法数"""
        total = 0
        for block in self.blocks:
            mask = block.reduced_mask.astype(np.int64)
            total += sum(int(((mask >> t) & 1).sum()) for t in range(self.threads))
        return total

    def pe_cycles(self) -> int:
        return sum(b.category.size for b in self.blocks)

    def utilized_cycles(self) -> int:
        """至少有一个活跃线程的PE周期数"""
        return sum(int((b.n_active > 0).sum()) for b in self.blocks)

    def pe_utilization(self, M: int, N: int) -> np.ndarray:
        """逐PE（逐输出元素）的利用率矩阵"""
        util = np.zeros((M, N), dtype=np.float64)
        for b in self.blocks:
            mb, nb = b.shape
            util[b.row0:b.row0 + mb, b.col0:b.col0 + nb] = (b.n_active > 0).mean(axis=0)
        return util

    def equals(self, other: "CycleTrace") -> bool:
        if (self.threads, self.steps, len(self.blocks)) != (other.threads, other.steps, len(other.blocks)):
            return False
        for a, b in zip(self.blocks, other.blocks):
            if (a.row0, a.col0, a.cycles) != (b.row0, b.col0, b.cycles):
                return False
            for name in ("category", "reduced_mask", "n_active"):
                if not np.array_equal(getattr(a, name), getattr(b, name)):
                    return False
        return True


@dataclass
class SimulationResult:
    output: np.ndarray
    trace: CycleTrace
    spec: TileSpec

    @property
    def total_cycles(self) -> int:
        return self.trace.total_cycles

    @property
    def steady_cycles(self) -> int:
        return self.trace.steady_cycles


def _levels(tile) -> np.ndarray:
    return np.asarray(getattr(tile, "data", tile), dtype=np.int64)


def _check_ranges(X: np.ndarray, W: np.ndarray, unsigned_weights: bool):
    if X.size and (X.min() < ACT_MIN or X.max() > ACT_MAX):
        raise ValueError("激活矩阵超出无符号8位范围")
    lo, hi = (ACT_MIN, ACT_MAX) if unsigned_weights else (WGT_MIN, WGT_MAX)
    if W.size and (W.min() < lo or W.max() > hi):
        raise ValueError("权重矩阵超出8位范围")


def split_threads(x_row, w_col, threads: int) -> List[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """按连续块把一对长度为K的向量拆成T个子流

    K不能被T整除时末尾补无效槽。
    Returns:
        每个线程的 (x子流, w子流, valid掩码)
    """
    x_row = np.asarray(x_row, dtype=np.int64)
    w_col = np.asarray(w_col, dtype=np.int64)
    if x_row.shape != w_col.shape or x_row.ndim != 1:
        raise ValueError(f"向量长度不一致: {x_row.shape} 与 {w_col.shape}")
    xs, ws, valid = thread_streams(x_row[None, :], w_col[:, None], threads)
    return [(xs[t, 0], ws[t, :, 0], valid[t]) for t in range(threads)]


def thread_streams(X: np.ndarray, W: np.ndarray, threads: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """整矩阵的线程拆分

    Returns:
        xs (T, M, Kt), ws (T, Kt, N), valid (T, Kt)
    """
    if threads not in (1, 2, 4):
        raise ValueError(f"线程数必须是1、2或4: {threads}")
    M, K = X.shape
    N = W.shape[1]
    steps = -(-K // threads)
    pad = steps * threads - K
    Xp = np.pad(X, ((0, 0), (0, pad)))
    Wp = np.pad(W, ((0, pad), (0, 0)))
    valid = (np.arange(steps * threads) < K).reshape(threads, steps)
    xs = Xp.reshape(M, threads, steps).transpose(1, 0, 2)
    ws = Wp.reshape(threads, steps, N)
    return xs, ws, valid


def block_cycles(steps: int, mb: int, nb: int) -> int:
    """单个输出块的周期数：送数 + 斜向填充/排空 + 流水线排空"""
    return steps + (mb - 1) + (nb - 1) + PIPELINE_DRAIN


def cycle_formula(M: int, K: int, N: int, threads: int, rows: int = 16, cols: int = 16) -> Tuple[int, int]:
    """周期数闭式解

    Returns:
        (总周期, 稳态周期)；总周期 = Σ_块 ceil(K/T) + (mb−1) + (nb−1) + 1
    """
    steps = -(-K // threads)
    total = steady = 0
    for r0 in range(0, M, rows):
        mb = min(rows, M - r0)
        for c0 in range(0, N, cols):
            nb = min(cols, N - c0)
            total += block_cycles(steps, mb, nb)
            steady += steps
    return total, steady


def reference_matmul(X, W) -> np.ndarray:
    """加宽整数参考乘法，结果为32位

    Raises:
        ValueError: 维度不匹配
        AccumulatorOverflowError: 结果超出32位
    """
    X = _levels(X)
    W = _levels(W)
    TileSpec.from_arrays(X, W)
    out = X @ W
    if out.size and (out.min() < ACC_MIN or out.max() > ACC_MAX):
        raise AccumulatorOverflowError("参考乘法结果超出32位")
    return out.astype(np.int32)


def speedup(cycles_baseline: int, cycles_smt: int) -> float:
    if cycles_smt <= 0:
        raise ValueError(f"周期数必须为正: {cycles_smt}")
    return cycles_baseline / cycles_smt


def _run_block_vectorized(xb, wb, valid, grid: GridConfig, unsigned_weights: bool):
    threads, mb, steps = xb.shape
    nb = wb.shape[2]
    psum = np.zeros((mb, nb), dtype=np.int64)
    category = np.empty((steps, mb, nb), dtype=np.uint8)
    reduced_mask = np.empty((steps, mb, nb), dtype=np.uint8)
    n_active = np.empty((steps, mb, nb), dtype=np.uint8)

    for j0 in range(0, steps, _STEP_CHUNK):
        j1 = min(steps, j0 + _STEP_CHUNK)
        shape = (threads, j1 - j0, mb, nb)
        x = np.broadcast_to(xb[:, :, j0:j1].transpose(0, 2, 1)[:, :, :, None], shape)
        w = np.broadcast_to(wb[:, j0:j1, None, :], shape)
        v = np.broadcast_to(valid[:, j0:j1, None, None], shape)
        result = squeeze_grid(x, w, v, grid.strategy, unsigned_weights)

        running = psum + np.cumsum(result.products, axis=0)
        if running.min() < ACC_MIN or running.max() > ACC_MAX:
            raise AccumulatorOverflowError(f"psum溢出32位（步 {j0}–{j1}）")
        psum = running[-1]
        category[j0:j1] = result.category
        reduced_mask[j0:j1] = result.reduced_mask
        n_active[j0:j1] = result.n_active

    return psum, category, reduced_mask, n_active, block_cycles(steps, mb, nb)


def _run_block_cycle(xb, wb, valid, grid: GridConfig, unsigned_weights: bool):
    threads, mb, steps = xb.shape
    nb = wb.shape[2]
    states = [[PEState() for _ in range(nb)] for _ in range(mb)]
    x_reg = np.zeros((threads, mb, nb), dtype=np.int64)
    w_reg = np.zeros((threads, mb, nb), dtype=np.int64)
    x_step = np.full((mb, nb), -1, dtype=np.int64)
    w_step = np.full((mb, nb), -1, dtype=np.int64)
    category = np.zeros((steps, mb, nb), dtype=np.uint8)
    reduced_mask = np.zeros((steps, mb, nb), dtype=np.uint8)
    n_active = np.zeros((steps, mb, nb), dtype=np.uint8)

    cycles = 0
    for c in range(steps + mb + nb - 2):
        # 激活向右、权重向下移动一格
        x_reg[:, :, 1:] = x_reg[:, :, :-1].copy()
        x_step[:, 1:] = x_step[:, :-1].copy()
        w_reg[:, 1:, :] = w_reg[:, :-1, :].copy()
        w_step[1:, :] = w_step[:-1, :].copy()

        # 斜向注入：第m行延迟m周期，第n列延迟n周期
        for m in range(mb):
            j = c - m
            inject = 0 <= j < steps
            x_reg[:, m, 0] = xb[:, m, j] if inject else 0
            x_step[m, 0] = j if inject else -1
        for n in range(nb):
            j = c - n
            inject = 0 <= j < steps
            w_reg[:, 0, n] = wb[:, j, n] if inject else 0
            w_step[0, n] = j if inject else -1

        for m in range(mb):
            for n in range(nb):
                j = int(x_step[m, n])
                if j < 0:
                    continue
                if w_step[m, n] != j:
                    raise RuntimeError(f"PE({m},{n}) 在周期 {c} 收到错位的操作数")
                inputs = [
                    ThreadInput(int(x_reg[t, m, n]), int(w_reg[t, m, n]), bool(valid[t, j]))
                    for t in range(threads)
                ]
                state = pe_step(states[m][n], inputs, grid.strategy, unsigned_weights)
                states[m][n] = state
                request = state.pipeline.request
                category[j, m, n] = int(request.category)
                reduced_mask[j, m, n] = sum(1 << t for t in request.reduced)
                n_active[j, m, n] = request.n_active
        cycles += 1

    psum = np.zeros((mb, nb), dtype=np.int64)
    for m in range(mb):
        for n in range(nb):
            psum[m, n] = pe_drain(states[m][n]).psum
    cycles += PIPELINE_DRAIN
    return psum, category, reduced_mask, n_active, cycles


_ENGINE_RUNNERS = {
    "vectorized": _run_block_vectorized,
    "cycle": _run_block_cycle,
}


def simulate(
    X,
    W,
    grid: GridConfig,
    engine: str = "vectorized",
    unsigned_weights: bool = False,
) -> SimulationResult:
    """在PE网格上模拟 O = X·W

    输出超过网格大小时按网格大小分块，逐块顺序处理。
    T=1时等价于常规OS-SA。

    Args:
        X: 激活矩阵（QTile或整数数组），M×K
        W: 权重矩阵（QTile或整数数组），K×N
        grid: 网格配置
        engine: 'vectorized' 或 'cycle'
        unsigned_weights: 权重按无符号8位解释（测试模式）

    Returns:
        SimulationResult，包含32位输出与周期跟踪

    Raises:
        ValueError: 维度不匹配或数值越界
    """
    if engine not in _ENGINE_RUNNERS:
        raise ValueError(f"未知的模拟引擎: {engine}")
    X = _levels(X)
    W = _levels(W)
    spec = TileSpec.from_arrays(X, W)
    _check_ranges(X, W, unsigned_weights)

    threads = grid.threads
    xs, ws, valid = thread_streams(X, W, threads)
    steps = xs.shape[2]
    logger.info(
        f"开始模拟: M={spec.M} K={spec.K} N={spec.N} T={threads} "
        f"策略={grid.strategy.label} 引擎={engine}"
    )

    run_block = _ENGINE_RUNNERS[engine]
    output = np.zeros((spec.M, spec.N), dtype=np.int64)
    trace = CycleTrace(threads=threads, grid_rows=grid.rows, grid_cols=grid.cols, steps=steps)
    for r0 in range(0, spec.M, grid.rows):
        r1 = min(spec.M, r0 + grid.rows)
        for c0 in range(0, spec.N, grid.cols):
            c1 = min(spec.N, c0 + grid.cols)
            psum, category, reduced_mask, n_active, cycles = run_block(
                xs[:, r0:r1, :], ws[:, :, c0:c1], valid, grid, unsigned_weights
            )
            output[r0:r1, c0:c1] = psum
            trace.blocks.append(BlockTrace(r0, c0, category, reduced_mask, n_active, cycles))
            logger.debug(f"输出块 ({r0},{c0}) 完成，{cycles} 周期")

    logger.info(f"模拟完成: {len(trace.blocks)} 个输出块，共 {trace.total_cycles} 周期")
    return SimulationResult(output=output.astype(np.int32), trace=trace, spec=spec)
