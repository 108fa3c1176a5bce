"""
PE控制模块

每个PE每周期的本地控制：检测线程冲突、按策略选择fMUL模式与操作数、
累加到共享的psum。提供两条路径：
- 标量路径（classify_cycle / control_2t / control_4t / pe_step），逐周期位精确
- 网格内核（squeeze_grid），对整个PE网格的一批周期做同样的决策
两条路径必须逐位一致。
"""

import logging
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import FrozenSet, Iterable, Optional, Sequence, Tuple

import numpy as np

from ..models import Operand, Strategy, WidthSource
from .qnum import (
    ACC_MAX,
    ACC_MIN,
    FMulMode,
    NarrowLane,
    Nibble,
    WideLane,
    fits4,
    fits4_array,
    fmul_2t,
    fmul_4t,
    lsb_nibble,
    reduce_to_msb_array,
    reduce_to_msb_nibble,
    split_8x8_2t,
    split_8x8_4t,
    split_wide_lane_4t,
    to_port_nibble,
)

logger = logging.getLogger(__name__)

# 两级流水（乘法+控制、累加）带来的额外排空周期
PIPELINE_DRAIN = 1


class ControlContractError(ValueError):
    """PE控制逻辑的调用约定被违反"""


class AccumulatorOverflowError(ArithmeticError):
    """32位psum溢出"""


class CycleKind(str, Enum):
    ALL_IDLE = "AllIdle"
    ONE_ACTIVE = "OneActive"
    MULTI_ACTIVE = "MultiActive"


class CycleCategory(IntEnum):
    """周期分类，计数之和等于总周期数"""
    NOOP = 0
    SINGLE = 1
    SQUEEZE_EXACT = 2
    SQUEEZE_LOSSY = 3


@dataclass(frozen=True)
class ThreadInput:
    """一个线程在当前周期的输入对；valid=False为K补齐的空槽"""
    x: int
    w: int
    valid: bool = True

    @property
    def active(self) -> bool:
        return self.valid and self.x != 0 and self.w != 0


@dataclass(frozen=True)
class CycleClass:
    kind: CycleKind
    count: int
    index: Optional[int] = None


@dataclass(frozen=True)
class FMulRequest:
    """一个周期送往fMUL的配置"""
    mode: FMulMode
    lanes: Tuple
    lane_threads: Tuple[int, ...]
    reduced: FrozenSet[int] = frozenset()
    lossy: bool = False
    category: CycleCategory = CycleCategory.NOOP
    n_active: int = 0


@dataclass(frozen=True)
class FMulResult:
    request: FMulRequest
    products: Tuple[int, ...]


@dataclass(frozen=True)
class PEState:
    """PE状态：共享psum、周期分类计数、流水线中的一次乘法"""
    psum: int = 0
    counts: Tuple[int, int, int, int] = (0, 0, 0, 0)
    reduced_terms: int = 0
    pipeline: Optional[FMulResult] = None
    cycles: int = 0

    def count(self, category: CycleCategory) -> int:
        return self.counts[int(category)]


def _as_threads(threads: Iterable) -> Tuple[ThreadInput, ...]:
    return tuple(t if isinstance(t, ThreadInput) else ThreadInput(*t) for t in threads)


def classify_cycle(threads: Sequence) -> CycleClass:
    """判断本周期的活跃线程：valid且x≠0且w≠0"""
    threads = _as_threads(threads)
    active = [i for i, t in enumerate(threads) if t.active]
    if not active:
        return CycleClass(CycleKind.ALL_IDLE, 0)
    if len(active) == 1:
        return CycleClass(CycleKind.ONE_ACTIVE, 1, active[0])
    return CycleClass(CycleKind.MULTI_ACTIVE, len(active))


def get_active_thread(threads: Sequence) -> Tuple[int, bool]:
    """返回唯一活跃线程的索引

    没有活跃线程时返回 (0, True)，True表示零贡献。

    Raises:
        ControlContractError: 存在两个及以上活跃线程时
    """
    cls = classify_cycle(threads)
    if cls.kind is CycleKind.MULTI_ACTIVE:
        raise ControlContractError(f"GetActiveThread要求至多一个活跃线程，实际 {cls.count} 个")
    if cls.kind is CycleKind.ALL_IDLE:
        return 0, True
    return cls.index, False


def _category(n_active: int, lossy: bool) -> CycleCategory:
    if lossy:
        return CycleCategory.SQUEEZE_LOSSY
    if n_active >= 2:
        return CycleCategory.SQUEEZE_EXACT
    if n_active == 1:
        return CycleCategory.SINGLE
    return CycleCategory.NOOP


def _single_operands(threads: Sequence[ThreadInput]) -> Tuple[int, int, int, bool]:
    idx, zero = get_active_thread(threads)
    if zero:
        return idx, 0, 0, True
    return idx, threads[idx].x, threads[idx].w, False


def _squeeze_thread_2t(th: ThreadInput, strategy: Strategy, w_signed: bool) -> Tuple[WideLane, bool, bool]:
    """为一个线程准备4b-8b通道，返回 (通道, 是否走了舍入路径, 是否有损)"""
    if not th.valid:
        return WideLane(Nibble(0), 0), False, False

    if strategy.reduce_operand is Operand.ACT:
        nominal, nominal_signed, other, other_signed = th.x, False, th.w, w_signed
    else:
        nominal, nominal_signed, other, other_signed = th.w, w_signed, th.x, False

    source = strategy.width_source
    if source is WidthSource.NONE:
        use_reduce = True
    elif source in (WidthSource.ACT, WidthSource.WGT):
        use_reduce = not fits4(nominal, nominal_signed)
    elif fits4(nominal, nominal_signed):
        use_reduce = False
    elif fits4(other, other_signed):
        # 交换：另一操作数进入4位端口
        return WideLane(lsb_nibble(other, other_signed), nominal, nominal_signed), False, False
    else:
        use_reduce = True

    if use_reduce:
        port4 = reduce_to_msb_nibble(nominal, nominal_signed)
    else:
        port4 = lsb_nibble(nominal, nominal_signed)
    reduced = use_reduce and th.active
    lossy = reduced and port4.reconstruct() != nominal
    return WideLane(port4, other, other_signed), reduced, lossy


def control_1t(threads: Sequence) -> FMulRequest:
    """常规OS-SA的PE：总是精确的8b-8b乘法"""
    threads = _as_threads(threads)
    if len(threads) != 1:
        raise ControlContractError(f"control_1t需要1个线程槽，收到 {len(threads)} 个")
    th = threads[0]
    x, w = (th.x, th.w) if th.valid else (0, 0)
    n_active = int(th.active)
    return FMulRequest(
        mode=FMulMode.ONE_8X8,
        lanes=split_8x8_2t(x, w),
        lane_threads=(0, 0),
        category=_category(n_active, False),
        n_active=n_active,
    )


def control_2t(threads: Sequence, strategy: Strategy, unsigned_weights: bool = False) -> FMulRequest:
    """2T SySMT PE逻辑

    利用稀疏性(S)且至多一个线程活跃时，活跃线程独占8b-8b乘法（精确）；
    否则两个线程各占一个4b-8b通道，按策略选择低半字节、交换或舍入后的高半字节。
    """
    threads = _as_threads(threads)
    if len(threads) != 2:
        raise ControlContractError(f"control_2t需要2个线程槽，收到 {len(threads)} 个")
    w_signed = not unsigned_weights
    cls = classify_cycle(threads)

    if strategy.exploit_sparsity and cls.count <= 1:
        idx, x, w, zero = _single_operands(threads)
        return FMulRequest(
            mode=FMulMode.ONE_8X8,
            lanes=split_8x8_2t(x, w, w_signed),
            lane_threads=(idx, idx),
            category=CycleCategory.NOOP if zero else CycleCategory.SINGLE,
            n_active=cls.count,
        )

    lanes, reduced, lossy = zip(*(_squeeze_thread_2t(th, strategy, w_signed) for th in threads))
    any_lossy = any(lossy)
    return FMulRequest(
        mode=FMulMode.TWO_4X8,
        lanes=tuple(lanes),
        lane_threads=(0, 1),
        reduced=frozenset(i for i, r in enumerate(reduced) if r),
        lossy=any_lossy,
        category=_category(cls.count, any_lossy),
        n_active=cls.count,
    )


def control_4t(threads: Sequence, strategy: Strategy, unsigned_weights: bool = False) -> FMulRequest:
    """4T SySMT PE逻辑

    3–4个线程冲突（或不利用稀疏性）时，所有线程的激活和权重都按有效位宽
    降为半字节，执行四个4b-4b乘法；恰好2个活跃时沿用2T逻辑；至多1个活跃时精确执行。
    """
    threads = _as_threads(threads)
    if len(threads) != 4:
        raise ControlContractError(f"control_4t需要4个线程槽，收到 {len(threads)} 个")
    w_signed = not unsigned_weights
    cls = classify_cycle(threads)

    if strategy.exploit_sparsity and cls.count <= 1:
        idx, x, w, zero = _single_operands(threads)
        return FMulRequest(
            mode=FMulMode.ONE_8X8,
            lanes=split_8x8_4t(x, w, w_signed),
            lane_threads=(idx,) * 4,
            category=CycleCategory.NOOP if zero else CycleCategory.SINGLE,
            n_active=cls.count,
        )

    if strategy.exploit_sparsity and cls.count == 2:
        a, b = (i for i, t in enumerate(threads) if t.active)
        pair = control_2t((threads[a], threads[b]), strategy, unsigned_weights)
        return FMulRequest(
            mode=FMulMode.TWO_4X8,
            lanes=split_wide_lane_4t(pair.lanes[0]) + split_wide_lane_4t(pair.lanes[1]),
            lane_threads=(a, a, b, b),
            reduced=frozenset((a, b)[i] for i in pair.reduced),
            lossy=pair.lossy,
            category=pair.category,
            n_active=cls.count,
        )

    exploit = strategy.exploits_width
    lanes, reduced, lossy = [], set(), False
    for i, th in enumerate(threads):
        if not th.valid:
            lanes.append(NarrowLane(Nibble(0), Nibble(0, signed=w_signed)))
            continue
        x_nib = to_port_nibble(th.x, False, exploit)
        w_nib = to_port_nibble(th.w, w_signed, exploit)
        lanes.append(NarrowLane(x_nib, w_nib))
        if th.active:
            if x_nib.shifted or w_nib.shifted:
                reduced.add(i)
            if x_nib.reconstruct() != th.x or w_nib.reconstruct() != th.w:
                lossy = True
    return FMulRequest(
        mode=FMulMode.FOUR_4X4,
        lanes=tuple(lanes),
        lane_threads=(0, 1, 2, 3),
        reduced=frozenset(reduced),
        lossy=lossy,
        category=_category(cls.count, lossy),
        n_active=cls.count,
    )


def control(threads: Sequence, strategy: Strategy, unsigned_weights: bool = False) -> FMulRequest:
    """按线程槽数量分派到1T/2T/4T控制逻辑"""
    threads = _as_threads(threads)
    if len(threads) == 1:
        return control_1t(threads)
    if len(threads) == 2:
        return control_2t(threads, strategy, unsigned_weights)
    if len(threads) == 4:
        return control_4t(threads, strategy, unsigned_weights)
    raise ControlContractError(f"不支持的线程槽数量: {len(threads)}")


def execute_request(request: FMulRequest) -> Tuple[int, ...]:
    """在对应的fMUL上执行请求"""
    if isinstance(request.lanes[0], WideLane):
        return fmul_2t(request.lanes[0], request.lanes[1], request.mode)
    return fmul_4t(request.lanes, request.mode)


def _retire(state: PEState) -> int:
    if state.pipeline is None:
        return state.psum
    psum = state.psum + sum(state.pipeline.products)
    if not ACC_MIN <= psum <= ACC_MAX:
        raise AccumulatorOverflowError(f"psum溢出32位: {psum}（周期 {state.cycles}）")
    return psum


def pe_step(state: PEState, threads: Sequence, strategy: Strategy, unsigned_weights: bool = False) -> PEState:
    """推进PE一个周期

    先把上一周期乘法级的结果累加进psum（累加级），再为本周期输入生成并执行fMUL请求。
    每个输入周期都被消费，不存在停顿。
    """
    psum = _retire(state)
    request = control(threads, strategy, unsigned_weights)
    products = execute_request(request)
    counts = list(state.counts)
    counts[int(request.category)] += 1
    return PEState(
        psum=psum,
        counts=tuple(counts),
        reduced_terms=state.reduced_terms + len(request.reduced),
        pipeline=FMulResult(request, products),
        cycles=state.cycles + 1,
    )


def pe_drain(state: PEState) -> PEState:
    """排空流水线"""
    return PEState(
        psum=_retire(state),
        counts=state.counts,
        reduced_terms=state.reduced_terms,
        pipeline=None,
        cycles=state.cycles,
    )


def pe_run(stream: Iterable[Sequence], strategy: Strategy, unsigned_weights: bool = False) -> PEState:
    """逐周期执行整个输入流并排空"""
    state = PEState()
    for threads in stream:
        state = pe_step(state, threads, strategy, unsigned_weights)
    return pe_drain(state)


# ---------------------------------------------------------------------------
# 网格内核
# ---------------------------------------------------------------------------

@dataclass
class GridStepResult:
    """一批PE周期的执行结果（形状与去掉线程维后的输入相同）"""
    products: np.ndarray
    category: np.ndarray
    reduced_mask: np.ndarray
    n_active: np.ndarray
    reduced_count: np.ndarray = field(repr=False, default=None)


def _squeeze_threads_2t(x, w, valid, active, strategy: Strategy, w_signed: bool):
    if strategy.reduce_operand is Operand.ACT:
        nominal, nominal_signed, other, other_signed = x, False, w, w_signed
    else:
        nominal, nominal_signed, other, other_signed = w, w_signed, x, False

    source = strategy.width_source
    nominal_fits = fits4_array(nominal, nominal_signed)
    if source is WidthSource.NONE:
        use_reduce = np.ones(nominal.shape, dtype=bool)
    elif source in (WidthSource.ACT, WidthSource.WGT):
        use_reduce = ~nominal_fits
    else:
        use_reduce = ~nominal_fits & ~fits4_array(other, other_signed)

    recon = reduce_to_msb_array(nominal, nominal_signed)
    port = np.where(use_reduce, recon, nominal)
    products = port * other * valid
    reduced = use_reduce & active
    lossy = reduced & (recon != nominal)
    return products, reduced, lossy


def _squeeze_threads_4t(x, w, valid, active, strategy: Strategy, w_signed: bool):
    if strategy.exploits_width:
        x_reduce = ~fits4_array(x, False)
        w_reduce = ~fits4_array(w, w_signed)
    else:
        x_reduce = np.ones(x.shape, dtype=bool)
        w_reduce = np.ones(w.shape, dtype=bool)
    x_val = np.where(x_reduce, reduce_to_msb_array(x, False), x)
    w_val = np.where(w_reduce, reduce_to_msb_array(w, w_signed), w)
    products = x_val * w_val * valid
    reduced = (x_reduce | w_reduce) & active
    lossy = ((x_val != x) | (w_val != w)) & active
    return products, reduced, lossy


def squeeze_grid(
    x: np.ndarray,
    w: np.ndarray,
    valid: np.ndarray,
    strategy: Strategy,
    unsigned_weights: bool = False,
) -> GridStepResult:
    """对形状为 (T, ...) 的线程输入批量执行PE控制与fMUL

    与逐周期的 control + execute_request 逐位一致。
    """
    x = np.asarray(x, dtype=np.int64)
    w = np.asarray(w, dtype=np.int64)
    valid = np.asarray(valid, dtype=bool)
    threads = x.shape[0]
    if threads not in (1, 2, 4) or w.shape != x.shape or valid.shape != x.shape:
        raise ControlContractError(f"网格输入形状不一致: x{x.shape} w{w.shape} valid{valid.shape}")
    w_signed = not unsigned_weights

    active = valid & (x != 0) & (w != 0)
    n_active = active.sum(axis=0)
    exact = (x * w * valid).sum(axis=0)

    if threads == 1:
        category = np.where(n_active > 0, CycleCategory.SINGLE, CycleCategory.NOOP).astype(np.uint8)
        zeros = np.zeros(n_active.shape, dtype=np.uint8)
        return GridStepResult(exact, category, zeros, n_active.astype(np.uint8), zeros.astype(np.int64))

    products, reduced, lossy = _squeeze_threads_2t(x, w, valid, active, strategy, w_signed)
    if threads == 4:
        p4, r4, l4 = _squeeze_threads_4t(x, w, valid, active, strategy, w_signed)
        if strategy.exploit_sparsity:
            four = n_active >= 3
            products = np.where(four, p4, products)
            reduced = np.where(four, r4, reduced)
            lossy = np.where(four, l4, lossy)
        else:
            products, reduced, lossy = p4, r4, l4

    if strategy.exploit_sparsity:
        squeeze = n_active >= 2
    else:
        squeeze = np.ones(n_active.shape, dtype=bool)

    reduced = reduced & squeeze
    lossy_any = (lossy & squeeze).any(axis=0)
    weights = (1 << np.arange(threads, dtype=np.int64)).reshape((threads,) + (1,) * (x.ndim - 1))
    reduced_mask = (reduced * weights).sum(axis=0).astype(np.uint8)

    category = np.where(
        lossy_any,
        CycleCategory.SQUEEZE_LOSSY,
        np.where(
            n_active >= 2,
            CycleCategory.SQUEEZE_EXACT,
            np.where(n_active == 1, CycleCategory.SINGLE, CycleCategory.NOOP),
        ),
    ).astype(np.uint8)

    return GridStepResult(
        products=np.where(squeeze, products.sum(axis=0), exact),
        category=category,
        reduced_mask=reduced_mask,
        n_active=n_active.astype(np.uint8),
        reduced_count=reduced.sum(axis=0).astype(np.int64),
    )
