"""
量化模块

8位均匀min-max对称量化：激活按层（无符号），权重按卷积核/输出列（有符号）
"""

import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

ACT_LEVELS = 255
WGT_LEVELS = 127


class TileKind(IntEnum):
    ACTIVATION = 0
    WEIGHT = 1


@dataclass
class QTile:
    """量化后的二维矩阵

    激活：一个逐层scale，取值 [0,255]；
    权重：每个输出列一个scale，取值 [−127,127]（不使用−128）。
    """
    data: np.ndarray
    kind: TileKind
    scales: np.ndarray

    def __post_init__(self):
        self.kind = TileKind(self.kind)
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError(f"QTile必须是二维矩阵，实际维度 {data.ndim}")
        if self.kind is TileKind.ACTIVATION:
            lo, hi, dtype = 0, ACT_LEVELS, np.uint8
        else:
            lo, hi, dtype = -WGT_LEVELS, WGT_LEVELS, np.int8
        if data.size and (data.min() < lo or data.max() > hi):
            raise ValueError(f"{self.kind.name} 取值超出 [{lo},{hi}]")
        self.data = data.astype(dtype)

        scales = np.atleast_1d(np.asarray(self.scales, dtype=np.float64))
        expected = 1 if self.kind is TileKind.ACTIVATION else data.shape[1]
        if scales.shape != (expected,):
            raise ValueError(f"scale数量应为 {expected}，实际 {scales.shape}")
        if np.any(scales <= 0):
            raise ValueError("scale必须为正")
        self.scales = scales

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def levels(self) -> np.ndarray:
        return self.data.astype(np.int64)

    def with_data(self, data: np.ndarray, scales: Optional[np.ndarray] = None) -> "QTile":
        return QTile(data=data, kind=self.kind, scales=self.scales if scales is None else scales)


def quantize_acts(values, scale: Optional[float] = None) -> QTile:
    """激活量化：level = clamp(round(v/scale), 0, 255)

    未给出scale时取 max/255；全零张量的scale取1。
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[None, :]
    if values.size and values.min() < 0:
        raise ValueError("激活量化要求非负输入（ReLU之后）")
    if scale is None:
        peak = float(values.max()) if values.size else 0.0
        scale = peak / ACT_LEVELS if peak > 0 else 1.0
    levels = np.clip(np.rint(values / scale), 0, ACT_LEVELS)
    return QTile(levels, TileKind.ACTIVATION, np.array([scale]))


def quantize_wgts(values, scales: Optional[Union[np.ndarray, float]] = None) -> QTile:
    """权重逐核量化：每列 scale = max|w|/127，level = clamp(round(w/scale), −127, 127)

    values可以是降维后的K×N矩阵，也可以是 (F,C,kh,kw) 卷积核（先降维）。
    全零的核scale取1。
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 4:
        values = values.reshape(values.shape[0], -1).T
    if values.ndim != 2:
        raise ValueError(f"权重必须是二维矩阵或四维卷积核，实际维度 {values.ndim}")
    if scales is None:
        peak = np.abs(values).max(axis=0) if values.size else np.zeros(values.shape[1])
        scales = np.where(peak > 0, peak / WGT_LEVELS, 1.0)
    scales = np.broadcast_to(np.asarray(scales, dtype=np.float64), (values.shape[1],)).copy()
    levels = np.clip(np.rint(values / scales[None, :]), -WGT_LEVELS, WGT_LEVELS)
    return QTile(levels, TileKind.WEIGHT, scales)


def dequantize(tile: QTile) -> np.ndarray:
    if tile.kind is TileKind.ACTIVATION:
        return tile.levels() * tile.scales[0]
    return tile.levels() * tile.scales[None, :]


def dequantize_output(output: np.ndarray, x: QTile, w: QTile) -> np.ndarray:
    """整数输出还原为实数：每个元素只乘两个scale（激活scale与该列的核scale）"""
    return np.asarray(output, dtype=np.float64) * x.scales[0] * w.scales[None, :]
