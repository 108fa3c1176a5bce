"""
自检模块

对fMUL、舍入、PE网格内核和卷积降维做穷举或随机比对。
fMUL实现可注入，便于对故意改错的乘法器做变异测试。
"""

import logging
import time
from typing import Callable, Optional, Tuple

import numpy as np

from ..models import STRATEGY_LABELS, Strategy, VerificationCheck, VerificationReport
from .lowering.im2col import ConvSpec, direct_conv2d, im2col, output_to_feature_map, weights_to_matrix
from .pe_core import ThreadInput, control, execute_request, squeeze_grid
from .qnum import (
    FMulMode,
    NarrowLane,
    Nibble,
    WideLane,
    fmul_2t,
    fmul_4t,
    reduce_to_msb_nibble,
    split_8x8_2t,
    split_8x8_4t,
)

logger = logging.getLogger(__name__)

LOWERING_CASES = 50
GRID_SAMPLES = 200

CheckOutcome = Tuple[int, Optional[str]]


class VerificationFailure(Exception):
    """某项自检发现反例"""

    def __init__(self, check: str, counterexample: str):
        super().__init__(f"{check} 失败: {counterexample}")
        self.check = check
        self.counterexample = counterexample


def check_fmul_one8x8(fmul2: Callable = fmul_2t, fmul4: Callable = fmul_4t) -> CheckOutcome:
    """全部65,536个 (Act8, Wgt8) 对在One8x8模式下重组为精确乘积"""
    cases = 0
    for x in range(256):
        for w in range(-128, 128):
            exact = x * w
            lanes2 = split_8x8_2t(x, w)
            got2 = sum(fmul2(lanes2[0], lanes2[1], FMulMode.ONE_8X8))
            if got2 != exact:
                return cases, f"fmul_2t One8x8 x={x} w={w}: {got2} != {exact}"
            got4 = sum(fmul4(split_8x8_4t(x, w), FMulMode.ONE_8X8))
            if got4 != exact:
                return cases, f"fmul_4t One8x8 x={x} w={w}: {got4} != {exact}"
            cases += 1
    return cases, None


def check_fmul_narrow(fmul2: Callable = fmul_2t, fmul4: Callable = fmul_4t) -> CheckOutcome:
    """每个4位操作数（含移位）乘每个8位操作数，Two4x8与Four4x4的结果与整数乘法一致"""
    cases = 0
    for bits in range(16):
        for shifted in (False, True):
            nib = Nibble(bits, shifted=shifted)
            for w in range(-128, 128):
                exact = nib.reconstruct() * w
                lane = WideLane(nib, w)
                got2 = fmul2(lane, lane, FMulMode.TWO_4X8)[0]
                if got2 != exact:
                    return cases, f"fmul_2t Two4x8 nibble={bits} shifted={shifted} w={w}: {got2} != {exact}"
                lo, hi = w & 0xF, (w & 0xFF) >> 4
                pair = (NarrowLane(nib, Nibble(hi, True, True)), NarrowLane(nib, Nibble(lo)))
                got4 = sum(fmul4(pair + pair, FMulMode.TWO_4X8)[:2])
                if got4 != exact:
                    return cases, f"fmul_4t Two4x8 nibble={bits} shifted={shifted} w={w}: {got4} != {exact}"
                wnib = Nibble(w & 0xF, shifted=shifted, signed=True)
                got44 = fmul4((NarrowLane(nib, wnib),) * 4, FMulMode.FOUR_4X4)[0]
                if got44 != nib.reconstruct() * wnib.reconstruct():
                    return cases, f"fmul_4t Four4x4 a={bits} b={w & 0xF} shifted={shifted}: {got44}"
                cases += 1
    return cases, None


def check_rounding() -> CheckOutcome:
    """舍入到最近的16的整数倍（半数向上），超出半字节时饱和"""
    cases = 0
    for signed, values, ceiling in ((False, range(256), 240), (True, range(-128, 128), 112)):
        for x in values:
            expected = min(((x + 8) >> 4) << 4, ceiling)
            got = reduce_to_msb_nibble(x, signed).reconstruct()
            if got != expected:
                return cases, f"round signed={signed} x={x}: {got} != {expected}"
            cases += 1
    return cases, None


def check_grid_kernel(seed: int = 0, samples: int = GRID_SAMPLES) -> CheckOutcome:
    """网格内核与逐周期控制逻辑逐位一致"""
    rng = np.random.default_rng(seed)
    cases = 0
    for label in STRATEGY_LABELS:
        strategy = Strategy.parse(label)
        for threads in (1, 2, 4):
            pool = np.array([0, 0, 3, 7, 15, 16, 59, 120, 248, 255])
            x = rng.choice(pool, size=(threads, samples))
            w = rng.choice(np.array([0, 1, -8, 7, -59, -56, 56, 100, -128, 127]), size=(threads, samples))
            valid = rng.random((threads, samples)) < 0.9
            grid = squeeze_grid(x, w, valid, strategy)
            for i in range(samples):
                inputs = [ThreadInput(int(x[t, i]), int(w[t, i]), bool(valid[t, i])) for t in range(threads)]
                request = control(inputs, strategy)
                product = sum(execute_request(request))
                if product != grid.products[i] or int(request.category) != grid.category[i]:
                    return cases, f"{label} T={threads} 输入={inputs}: 标量 {product}/{request.category.name}"
                cases += 1
    return cases, None


def random_conv_spec(rng: np.random.Generator) -> ConvSpec:
    kh, kw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    return ConvSpec(
        C=int(rng.integers(1, 4)),
        H=int(rng.integers(kh, 9)),
        W=int(rng.integers(kw, 9)),
        F=int(rng.integers(1, 5)),
        kh=kh,
        kw=kw,
        stride=int(rng.integers(1, 3)),
        padding=int(rng.integers(0, 2)),
    )


def check_lowering(seed: int = 0, cases: int = LOWERING_CASES) -> CheckOutcome:
    """随机卷积规格下im2col矩阵乘法等于直接卷积"""
    rng = np.random.default_rng(seed)
    for i in range(cases):
        spec = random_conv_spec(rng)
        x = rng.integers(0, 256, size=(spec.C, spec.H, spec.W))
        w = rng.integers(-127, 128, size=(spec.F, spec.C, spec.kh, spec.kw))
        lowered = im2col(x, spec).astype(np.int64) @ weights_to_matrix(w, spec).astype(np.int64)
        if not np.array_equal(output_to_feature_map(lowered, spec), direct_conv2d(x, w, spec)):
            return i, f"卷积降维不一致: {spec}"
    return cases, None


def _timed(name: str, check: Callable[[], CheckOutcome]) -> VerificationCheck:
    start = time.perf_counter()
    cases, counterexample = check()
    seconds = time.perf_counter() - start
    if counterexample:
        logger.error(f"自检 {name} 失败: {counterexample}")
    else:
        logger.info(f"自检 {name} 通过: {cases} 个用例，耗时 {seconds:.2f} 秒")
    return VerificationCheck(
        name=name,
        passed=counterexample is None,
        cases=cases,
        counterexample=counterexample,
        seconds=seconds,
    )


def run_verification(fmul2: Callable = fmul_2t, fmul4: Callable = fmul_4t, seed: int = 0) -> VerificationReport:
    """运行全部自检"""
    checks = [
        _timed("fmul_one8x8", lambda: check_fmul_one8x8(fmul2, fmul4)),
        _timed("fmul_narrow", lambda: check_fmul_narrow(fmul2, fmul4)),
        _timed("rounding", check_rounding),
        _timed("grid_kernel", lambda: check_grid_kernel(seed)),
        _timed("lowering", lambda: check_lowering(seed)),
    ]
    return VerificationReport(passed=all(c.passed for c in checks), checks=checks)


def require(report: VerificationReport):
    """把失败的自检报告转为VerificationFailure"""
    for check in report.checks:
        if not check.passed:
            raise VerificationFailure(check.name, check.counterexample or "")
