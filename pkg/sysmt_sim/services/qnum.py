"""
定宽数值模块

提供位精确的定点数值运算：
- 有效数据位宽检测（4位是否足够）
- 舍入到16的整数倍的精度降低（x[7:4] + x[3]）
- 柔性乘法器（fMUL）的2T与4T分解
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

NIBBLE_SHIFT = 4

ACT_MIN, ACT_MAX = 0, 255
WGT_MIN, WGT_MAX = -128, 127

# psum位宽：32位有符号
ACC_MIN, ACC_MAX = -(2 ** 31), 2 ** 31 - 1


class FMulContractError(ValueError):
    """fMUL模式与操作数不匹配"""


class Width(str, Enum):
    """有效数据位宽"""
    FITS4 = "Fits4"
    NEEDS8 = "Needs8"


class FMulMode(str, Enum):
    """柔性乘法器工作模式"""
    ONE_8X8 = "One8x8"
    TWO_4X8 = "Two4x8"
    FOUR_4X4 = "Four4x4"


@dataclass(frozen=True)
class Nibble:
    """4位操作数

    bits按signed解释为无符号或二补码4位数；shifted为真表示该半字节
    是原操作数的高4位，乘积需左移4位。
    """
    bits: int
    shifted: bool = False
    signed: bool = False
    saturated: bool = False

    def __post_init__(self):
        if not 0 <= self.bits <= 0xF:
            raise FMulContractError(f"半字节超出范围: {self.bits}")

    @property
    def value(self) -> int:
        """半字节的数值（未移位）"""
        if self.signed and self.bits >= 8:
            return self.bits - 16
        return self.bits

    def reconstruct(self) -> int:
        """还原为8位量级的数值"""
        return self.value << NIBBLE_SHIFT if self.shifted else self.value


@dataclass(frozen=True)
class WideLane:
    """2T fMUL的一个4b-8b通道：4位端口 × 8位端口"""
    port4: Nibble
    port8: int
    port8_signed: bool = True

    def __post_init__(self):
        lo, hi = (WGT_MIN, WGT_MAX) if self.port8_signed else (ACT_MIN, ACT_MAX)
        if not lo <= self.port8 <= hi:
            raise FMulContractError(f"8位端口超出范围: {self.port8} (signed={self.port8_signed})")


@dataclass(frozen=True)
class NarrowLane:
    """4T fMUL的一个4b-4b通道"""
    a: Nibble
    b: Nibble


Lane = Union[WideLane, NarrowLane]


def check_act8(x: int) -> int:
    if not ACT_MIN <= x <= ACT_MAX:
        raise ValueError(f"激活值超出无符号8位范围: {x}")
    return x


def check_wgt8(w: int, unsigned: bool = False) -> int:
    lo, hi = (ACT_MIN, ACT_MAX) if unsigned else (WGT_MIN, WGT_MAX)
    if not lo <= w <= hi:
        raise ValueError(f"权重超出8位范围: {w}")
    return w


def effective_width(x: int, signed: bool = False) -> Width:
    """检测8位数值的有效位宽

    无符号：x ∈ [0,15] 时4位足够；有符号：x ∈ [−8,7]（高半字节为符号扩展）。
    """
    if signed:
        return Width.FITS4 if -8 <= x <= 7 else Width.NEEDS8
    return Width.FITS4 if 0 <= x <= 15 else Width.NEEDS8


def fits4(x: int, signed: bool = False) -> bool:
    return effective_width(x, signed) is Width.FITS4


def reduce_to_msb_nibble(x: int, signed: bool = False) -> Nibble:
    """将8位数值舍入到最近的16的整数倍并取高4位

    计算方式为 x[7:4] + x[3]；溢出半字节时饱和
    （无符号0xF8–0xFF饱和为0xF，有符号0x78–0x7F饱和为0x7），
    并在结果中置saturated标志。
    """
    pattern = x & 0xFF
    msb = pattern >> 4
    round_bit = (pattern >> 3) & 1
    saturated = False
    if signed:
        if msb == 0x7 and round_bit:
            bits = 0x7
            saturated = True
        else:
            # 0xF + 1 回绕到0x0，二补码下即 −16 + 16 = 0
            bits = (msb + round_bit) & 0xF
    else:
        bits = msb + round_bit
        if bits > 0xF:
            bits = 0xF
            saturated = True
    return Nibble(bits=bits, shifted=True, signed=signed, saturated=saturated)


def lsb_nibble(x: int, signed: bool = False) -> Nibble:
    """取低4位（仅在4位足够时无损）"""
    return Nibble(bits=x & 0xF, shifted=False, signed=signed)


def split_nibbles(x: int, signed: bool = False) -> Tuple[Nibble, Nibble]:
    """精确拆分为 (低4位无符号, 高4位按输入符号性解释且移位)"""
    pattern = x & 0xFF
    return (
        Nibble(bits=pattern & 0xF, shifted=False, signed=False),
        Nibble(bits=pattern >> 4, shifted=True, signed=signed),
    )


def to_port_nibble(x: int, signed: bool, exploit_width: bool) -> Nibble:
    """按有效位宽选择送入4位端口的半字节"""
    if exploit_width and fits4(x, signed):
        return lsb_nibble(x, signed)
    return reduce_to_msb_nibble(x, signed)


def wide_lane_product(lane: WideLane) -> int:
    product = lane.port4.value * lane.port8
    return product << NIBBLE_SHIFT if lane.port4.shifted else product


def narrow_lane_product(lane: NarrowLane) -> int:
    shift = NIBBLE_SHIFT * (int(lane.a.shifted) + int(lane.b.shifted))
    return (lane.a.value * lane.b.value) << shift


def split_8x8_2t(x: int, w: int, w_signed: bool = True) -> Tuple[WideLane, WideLane]:
    """8b-8b乘法拆成两个5b-8b通道（高半字节零扩展）"""
    lo, hi = split_nibbles(x, signed=False)
    return (WideLane(lo, w, w_signed), WideLane(hi, w, w_signed))


def split_wide_lane_4t(lane: WideLane) -> Tuple[NarrowLane, NarrowLane]:
    """把一个4b-8b通道拆成两个4b-4b通道（8位操作数的高/低半字节）"""
    lo, hi = split_nibbles(lane.port8, signed=lane.port8_signed)
    return (NarrowLane(lane.port4, hi), NarrowLane(lane.port4, lo))


def split_8x8_4t(x: int, w: int, w_signed: bool = True) -> Tuple[NarrowLane, ...]:
    """8b-8b乘法按 (xM·wM)<<8 + (xM·wL)<<4 + (xL·wM)<<4 + xL·wL 拆成四个通道"""
    x_lo, x_hi = split_nibbles(x, signed=False)
    w_lo, w_hi = split_nibbles(w, signed=w_signed)
    return (
        NarrowLane(x_hi, w_hi),
        NarrowLane(x_hi, w_lo),
        NarrowLane(x_lo, w_hi),
        NarrowLane(x_lo, w_lo),
    )


def _as_wide_lane(lane, mode: FMulMode) -> WideLane:
    if isinstance(lane, WideLane):
        return lane
    try:
        port4, port8 = lane
    except (TypeError, ValueError):
        raise FMulContractError(f"无法识别的通道: {lane!r}")
    if not isinstance(port4, Nibble):
        raise FMulContractError(f"{mode.value} 模式下4位端口必须是半字节: {port4!r}")
    return WideLane(port4, port8)


def fmul_2t(lane0, lane1, mode: FMulMode) -> Tuple[int, int]:
    """2T柔性乘法器

    One8x8：两个通道承载同一激活值的低/高半字节（移位标志0、1）和同一权重，
    两通道乘积之和等于精确的8b-8b乘积。lane0可直接给出 (Act8, Wgt8)，此时自动拆分。
    Two4x8：两个独立的4b-8b乘法，shifted时左移4位。

    Returns:
        两个通道的乘积（已移位）
    """
    mode = FMulMode(mode)
    if mode is FMulMode.FOUR_4X4:
        raise FMulContractError("2T fMUL不支持Four4x4模式")

    if mode is FMulMode.ONE_8X8:
        if not isinstance(lane0, WideLane) and isinstance(lane0, tuple) and isinstance(lane0[0], int):
            x, w = lane0
            lane0, lane1 = split_8x8_2t(check_act8(x), w)
        lane0 = _as_wide_lane(lane0, mode)
        lane1 = _as_wide_lane(lane1, mode)
        if lane0.port4.shifted or not lane1.port4.shifted:
            raise FMulContractError("One8x8模式要求移位标志为 (0, 1)")
        if lane0.port4.signed or lane1.port4.signed:
            raise FMulContractError("One8x8模式下激活半字节必须为无符号")
        if (lane0.port8, lane0.port8_signed) != (lane1.port8, lane1.port8_signed):
            raise FMulContractError("One8x8模式要求两个通道共享同一8位操作数")
    else:
        lane0 = _as_wide_lane(lane0, mode)
        lane1 = _as_wide_lane(lane1, mode)

    return wide_lane_product(lane0), wide_lane_product(lane1)


def fmul_4t(lanes: Sequence, mode: FMulMode) -> Tuple[int, ...]:
    """4T柔性乘法器

    One8x8：四个通道移位为 (8, 4, 4, 0)，乘积之和等于精确的8b-8b乘积。
    Two4x8：通道(0,1)与(2,3)各自承载一个4b-8b乘法（共享4位操作数，
    8位操作数拆为移位的高半字节与不移位的低半字节）。
    Four4x4：四个独立的4b-4b乘法，按各自的移位对施加移位。
    """
    mode = FMulMode(mode)
    lanes = tuple(lane if isinstance(lane, NarrowLane) else NarrowLane(*lane) for lane in lanes)
    if len(lanes) != 4:
        raise FMulContractError(f"4T fMUL需要4个通道，收到 {len(lanes)} 个")

    if mode is FMulMode.ONE_8X8:
        shifts = tuple(int(l.a.shifted) + int(l.b.shifted) for l in lanes)
        if shifts != (2, 1, 1, 0):
            raise FMulContractError(f"One8x8模式移位必须为 (8, 4, 4, 0)，实际 {tuple(4 * s for s in shifts)}")
        x_hi, x_lo = lanes[0].a, lanes[2].a
        w_hi, w_lo = lanes[0].b, lanes[1].b
        if (lanes[1].a, lanes[3].a, lanes[2].b, lanes[3].b) != (x_hi, x_lo, w_hi, w_lo):
            raise FMulContractError("One8x8模式下四个通道必须来自同一对操作数")
        if not x_hi.shifted or x_lo.shifted or not w_hi.shifted or w_lo.shifted:
            raise FMulContractError("One8x8模式下高低半字节位置不一致")
    elif mode is FMulMode.TWO_4X8:
        for first, second in (lanes[0:2], lanes[2:4]):
            if first.a != second.a or not first.b.shifted or second.b.shifted:
                raise FMulContractError("Two4x8模式要求每对通道共享4位操作数且8位操作数按 (高, 低) 拆分")

    return tuple(narrow_lane_product(lane) for lane in lanes)


# ---------------------------------------------------------------------------
# 向量化版本（网格内核使用）
# ---------------------------------------------------------------------------

def fits4_array(values: np.ndarray, signed: bool = False) -> np.ndarray:
    if signed:
        return (values >= -8) & (values <= 7)
    return (values >= 0) & (values <= 15)


def reduce_to_msb_array(values: np.ndarray, signed: bool = False) -> np.ndarray:
    """reduce_to_msb_nibble的向量化版本，返回还原后的数值（已乘16）"""
    values = np.asarray(values, dtype=np.int64)
    pattern = values & 0xFF
    msb = pattern >> 4
    round_bit = (pattern >> 3) & 1
    if signed:
        saturate = (msb == 0x7) & (round_bit == 1)
        bits = np.where(saturate, 0x7, (msb + round_bit) & 0xF)
        nibble = np.where(bits >= 8, bits - 16, bits)
    else:
        nibble = np.minimum(msb + round_bit, 0xF)
    return nibble << NIBBLE_SHIFT
