"""
卷积降维模块

将卷积映射为矩阵乘法：激活矩阵的每一行是一个滑动窗口，权重矩阵的每一列是一个卷积核
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConvSpec:
    """卷积规格：输入 (C,H,W)，卷积核 (F,C,kh,kw)"""
    C: int
    H: int
    W: int
    F: int
    kh: int
    kw: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if min(self.C, self.H, self.W, self.F, self.kh, self.kw, self.stride) < 1 or self.padding < 0:
            raise ValueError(f"非法的卷积规格: {self}")
        if self.out_h < 1 or self.out_w < 1:
            raise ValueError(f"卷积输出尺寸必须为正: {self.out_h}×{self.out_w}")

    @property
    def out_h(self) -> int:
        return (self.H + 2 * self.padding - self.kh) // self.stride + 1

    @property
    def out_w(self) -> int:
        return (self.W + 2 * self.padding - self.kw) // self.stride + 1

    @property
    def K(self) -> int:
        return self.C * self.kh * self.kw

    @property
    def M(self) -> int:
        return self.out_h * self.out_w


def _pad(x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    p = spec.padding
    return np.pad(x, ((0, 0), (p, p), (p, p)))


def _check_input(x: np.ndarray, spec: ConvSpec):
    if x.shape != (spec.C, spec.H, spec.W):
        raise ValueError(f"输入形状 {x.shape} 与卷积规格 {(spec.C, spec.H, spec.W)} 不匹配")


def im2col(x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """展开为 (out_h·out_w) × (C·kh·kw) 的激活矩阵"""
    x = np.asarray(x)
    _check_input(x, spec)
    windows = sliding_window_view(_pad(x, spec), (spec.kh, spec.kw), axis=(1, 2))
    windows = windows[:, ::spec.stride, ::spec.stride][:, :spec.out_h, :spec.out_w]
    return windows.transpose(1, 2, 0, 3, 4).reshape(spec.M, spec.K)


def weights_to_matrix(w: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """卷积核展开为 (C·kh·kw) × F 的权重矩阵，列顺序与im2col一致"""
    w = np.asarray(w)
    if w.shape != (spec.F, spec.C, spec.kh, spec.kw):
        raise ValueError(f"卷积核形状 {w.shape} 与卷积规格不匹配")
    return w.reshape(spec.F, spec.K).T


def direct_conv2d(x: np.ndarray, w: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """整数直接卷积，返回 (F, out_h, out_w)"""
    x = np.asarray(x, dtype=np.int64)
    w = np.asarray(w, dtype=np.int64)
    _check_input(x, spec)
    xp = _pad(x, spec)
    s = spec.stride
    out = np.zeros((spec.F, spec.out_h, spec.out_w), dtype=np.int64)
    for i in range(spec.kh):
        for j in range(spec.kw):
            patch = xp[:, i:i + s * spec.out_h:s, j:j + s * spec.out_w:s]
            out += np.einsum("fc,chw->fhw", w[:, :, i, j], patch)
    return out


def output_to_feature_map(output: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """(out_h·out_w) × F 的乘法结果还原为 (F, out_h, out_w)"""
    output = np.asarray(output)
    if output.shape != (spec.M, spec.F):
        raise ValueError(f"输出形状 {output.shape} 与卷积规格不匹配")
    return output.T.reshape(spec.F, spec.out_h, spec.out_w)
