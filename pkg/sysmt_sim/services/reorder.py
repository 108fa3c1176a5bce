"""
激活重排序模块

离线统计每一列（K维）的数据宽度分布，计算列置换使一个线程中可能为8位的数据
与另一个线程中可能为零的数据对齐，4位数据彼此对齐。
置换同时作用于X的列和W的行，乘积不变。
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import orjson

from ..models import ScoreWeights

logger = logging.getLogger(__name__)


@dataclass
class ColumnStats:
    """每列的经验频率：p_zero + p_fits4 + p_wide = 1"""
    p_zero: np.ndarray
    p_fits4: np.ndarray
    p_wide: np.ndarray
    sample_count: int

    @property
    def K(self) -> int:
        return self.p_zero.size

    @property
    def p_active(self) -> np.ndarray:
        return self.p_fits4 + self.p_wide

    def score(self, weights: Optional[ScoreWeights] = None) -> np.ndarray:
        weights = weights or ScoreWeights()
        return weights.wide * self.p_wide + weights.fits4 * self.p_fits4 + weights.zero * self.p_zero

    def to_dict(self) -> Dict[str, object]:
        return {
            "sample_count": self.sample_count,
            "p_zero": self.p_zero.tolist(),
            "p_fits4": self.p_fits4.tolist(),
            "p_wide": self.p_wide.tolist(),
        }


@dataclass(frozen=True)
class Permutation:
    """K个下标的双射：新位置p上放原来的第indices[p]列"""
    indices: Tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if sorted(idx) != list(range(len(idx))):
            raise ValueError("置换必须是0..K-1的双射")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def identity(cls, K: int) -> "Permutation":
        return cls(tuple(range(K)))

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def is_identity(self) -> bool:
        return self.indices == tuple(range(len(self.indices)))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64)

    def inverse(self) -> "Permutation":
        inv = np.empty(len(self), dtype=np.int64)
        inv[self.as_array()] = np.arange(len(self))
        return Permutation(tuple(inv))

    def to_json(self) -> bytes:
        return orjson.dumps(list(self.indices))

    @classmethod
    def from_json(cls, payload) -> "Permutation":
        data = orjson.loads(payload)
        if not isinstance(data, list):
            raise ValueError("置换JSON必须是下标数组")
        return cls(tuple(data))


def _levels(tile) -> np.ndarray:
    return np.asarray(getattr(tile, "data", tile), dtype=np.int64)


def gather_stats(samples: Sequence) -> ColumnStats:
    """在样本激活矩阵上统计每列的宽度频率

    Raises:
        ValueError: 样本为空或列数不一致
    """
    if not samples:
        raise ValueError("统计需要至少一个样本")
    arrays = [_levels(s) for s in samples]
    K = arrays[0].shape[1]
    if any(a.ndim != 2 or a.shape[1] != K for a in arrays):
        raise ValueError("样本矩阵的列数不一致")
    stacked = np.concatenate(arrays, axis=0)
    rows = stacked.shape[0]
    zero = (stacked == 0).sum(axis=0) / rows
    fits4 = ((stacked >= 1) & (stacked <= 15)).sum(axis=0) / rows
    wide = (stacked >= 16).sum(axis=0) / rows
    logger.info(f"列统计完成: {len(arrays)} 个样本，{rows} 行，K={K}")
    return ColumnStats(zero, fits4, wide, rows)


def block_lengths(K: int, threads: int) -> List[int]:
    """连续块拆分后每个线程的有效长度"""
    steps = -(-K // threads)
    return [max(0, min(steps, K - t * steps)) for t in range(threads)]


def compute_permutation(
    stats: ColumnStats,
    threads: int,
    weights: Optional[ScoreWeights] = None,
) -> Permutation:
    """按分数降序做蛇形条带分配

    排名r落在线程 t = r // Kt 的第 r % Kt 个位置，奇数线程反向排列；
    T=2时即最宽的列与最可能为零的列对齐。分数全部相同时返回恒等置换。
    """
    K = stats.K
    if K < threads:
        raise ValueError(f"K={K} 小于线程数 {threads}")
    score = stats.score(weights)
    if threads == 1 or np.ptp(score) <= 1e-12:
        return Permutation.identity(K)

    order = np.argsort(-score, kind="stable")
    steps = -(-K // threads)
    lengths = block_lengths(K, threads)
    indices = np.empty(K, dtype=np.int64)
    for rank, column in enumerate(order):
        t, within = divmod(rank, steps)
        j = within if t % 2 == 0 else lengths[t] - 1 - within
        indices[t * steps + j] = column
    return Permutation(tuple(indices))


def apply_permutation(X, W, perm: Permutation):
    """按置换重排X的列和W的行

    X、W为QTile时返回QTile（权重的逐列scale不受影响）。
    """
    x_levels = _levels(X)
    w_levels = _levels(W)
    if x_levels.shape[1] != len(perm) or w_levels.shape[0] != len(perm):
        raise ValueError(f"置换长度 {len(perm)} 与矩阵维度不匹配")
    idx = perm.as_array()
    x_new = x_levels[:, idx]
    w_new = w_levels[idx, :]
    if hasattr(X, "with_data"):
        x_new = X.with_data(x_new)
    if hasattr(W, "with_data"):
        w_new = W.with_data(w_new)
    return x_new, w_new


def expected_collisions(stats: ColumnStats, perm: Permutation, threads: int) -> float:
    """独立性假设下每行期望的冲突步数（≥2个线程同时活跃）"""
    if len(perm) != stats.K:
        raise ValueError("置换长度与统计不匹配")
    steps = -(-stats.K // threads)
    p = np.zeros(steps * threads)
    p[:stats.K] = stats.p_active[perm.as_array()]
    p = p.reshape(threads, steps)
    idle = np.prod(1.0 - p, axis=0)
    exactly_one = np.zeros(steps)
    for t in range(threads):
        others = np.prod(np.delete(1.0 - p, t, axis=0), axis=0)
        exactly_one += p[t] * others
    return float((1.0 - idle - exactly_one).sum())
