"""
合成负载生成模块

按列混合分布生成激活矩阵：每列先抽取一个宽度类别（零 / 4位 / 8位），
每个元素以correlation的概率沿用所在列的类别，否则从全局混合分布抽取。
权重为截断的高斯分布取整，可选剪枝比例。
"""

import logging
from typing import Optional, Tuple, Union

import numpy as np

from .quantize import ACT_LEVELS, WGT_LEVELS, QTile, TileKind

logger = logging.getLogger(__name__)

ZERO, FITS4, WIDE = 0, 1, 2

WEIGHT_SIGMA = 40.0

SeedLike = Union[int, np.random.SeedSequence]


def _seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def class_mixture(p_zero: float, p_fits4: float) -> np.ndarray:
    if p_zero < 0 or p_fits4 < 0 or p_zero + p_fits4 > 1.0 + 1e-12:
        raise ValueError(f"非法的概率组合: p_zero={p_zero} p_fits4={p_fits4}")
    p_wide = max(0.0, 1.0 - p_zero - p_fits4)
    mix = np.array([p_zero, p_fits4, p_wide], dtype=np.float64)
    return mix / mix.sum()


def column_profile(K: int, p_zero: float, p_fits4: float, seed: SeedLike) -> np.ndarray:
    """每列的宽度类别"""
    rng = np.random.default_rng(_seed_sequence(seed))
    return rng.choice(3, size=K, p=class_mixture(p_zero, p_fits4))


def gen_activations(
    M: int,
    K: int,
    p_zero: float,
    p_fits4: float,
    correlation: float,
    seed: SeedLike,
    profile: Optional[np.ndarray] = None,
) -> np.ndarray:
    """生成M×K的激活取值（0–255）"""
    if not 0.0 <= correlation <= 1.0:
        raise ValueError(f"correlation必须在[0,1]内: {correlation}")
    mix = class_mixture(p_zero, p_fits4)
    rng = np.random.default_rng(_seed_sequence(seed))
    if profile is None:
        profile = rng.choice(3, size=K, p=mix)
    follow = rng.random((M, K)) < correlation
    independent = rng.choice(3, size=(M, K), p=mix)
    classes = np.where(follow, profile[None, :], independent)
    small = rng.integers(1, 16, size=(M, K))
    wide = rng.integers(16, ACT_LEVELS + 1, size=(M, K))
    return np.where(classes == ZERO, 0, np.where(classes == FITS4, small, wide))


def gen_weights(K: int, N: int, seed: SeedLike, w_sparsity: float = 0.0) -> np.ndarray:
    """生成K×N的非零权重（−127–127），再按w_sparsity置零"""
    rng = np.random.default_rng(_seed_sequence(seed))
    magnitude = np.clip(np.rint(np.abs(rng.normal(0.0, WEIGHT_SIGMA, size=(K, N)))), 1, WGT_LEVELS)
    sign = np.where(rng.random((K, N)) < 0.5, -1, 1)
    weights = (magnitude * sign).astype(np.int64)
    if w_sparsity > 0:
        weights[rng.random((K, N)) < w_sparsity] = 0
    return weights


def gen_synthetic(
    K: int,
    M: int,
    N: int,
    p_zero: float,
    p_fits4: float,
    correlation: float,
    seed: SeedLike,
    w_sparsity: float = 0.0,
    profile_seed: Optional[SeedLike] = None,
) -> Tuple[QTile, QTile]:
    """生成可复现的 (X, W) 量化矩阵

    profile_seed单独决定列类别，使同一层的校准样本与评估样本共享列分布。
    激活scale取1/255，权重每列scale取1/127。
    """
    root = _seed_sequence(seed)
    profile_ss, x_ss, w_ss = root.spawn(3)
    if profile_seed is not None:
        profile_ss = _seed_sequence(profile_seed)
    profile = column_profile(K, p_zero, p_fits4, profile_ss)
    X = gen_activations(M, K, p_zero, p_fits4, correlation, x_ss, profile=profile)
    W = gen_weights(K, N, w_ss, w_sparsity)
    logger.debug(f"生成合成负载: M={M} K={K} N={N} p_zero={p_zero} p_fits4={p_fits4} correlation={correlation}")
    return (
        QTile(X, TileKind.ACTIVATION, np.array([1.0 / ACT_LEVELS])),
        QTile(W, TileKind.WEIGHT, np.full(N, 1.0 / WGT_LEVELS)),
    )
