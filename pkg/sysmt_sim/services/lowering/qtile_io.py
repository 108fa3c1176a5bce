"""
张量文件读写模块

.qtile二进制格式（小端）：
    magic "QTIL" | version u16 | kind u8 (0=激活, 1=权重) | rows u32 | cols u32 |
    scale数量 u32 | scales f64[] | 行优先的uint8/int8数据
小矩阵可用CSV导入导出（整数取值，scale另行给出）。
"""

import logging
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from .quantize import QTile, TileKind

logger = logging.getLogger(__name__)

MAGIC = b"QTIL"
VERSION = 1
_HEADER = struct.Struct("<4sHBIII")

PathLike = Union[str, Path]


def encode_qtile(tile: QTile) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, int(tile.kind), tile.rows, tile.cols, tile.scales.size)
    dtype = "<u1" if tile.kind is TileKind.ACTIVATION else "<i1"
    return header + tile.scales.astype("<f8").tobytes() + tile.data.astype(dtype).tobytes(order="C")


def decode_qtile(payload: bytes) -> QTile:
    if len(payload) < _HEADER.size:
        raise ValueError("qtile数据过短，缺少文件头")
    magic, version, kind, rows, cols, n_scales = _HEADER.unpack_from(payload)
    if magic != MAGIC:
        raise ValueError(f"无效的qtile文件头: {magic!r}")
    if version != VERSION:
        raise ValueError(f"不支持的qtile版本: {version}")
    kind = TileKind(kind)
    offset = _HEADER.size
    scale_end = offset + 8 * n_scales
    data_end = scale_end + rows * cols
    if len(payload) != data_end:
        raise ValueError(f"qtile数据长度不符: 期望 {data_end} 字节，实际 {len(payload)} 字节")
    scales = np.frombuffer(payload[offset:scale_end], dtype="<f8")
    dtype = "<u1" if kind is TileKind.ACTIVATION else "<i1"
    data = np.frombuffer(payload[scale_end:data_end], dtype=dtype).reshape(rows, cols)
    return QTile(data.copy(), kind, scales.copy())


def write_qtile(path: PathLike, tile: QTile) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_qtile(tile))
    logger.info(f"已写入qtile文件: {path} ({tile.rows}×{tile.cols})")
    return path


def read_qtile(path: PathLike) -> QTile:
    """读取.qtile文件

    Raises:
        FileNotFoundError: 文件不存在
        ValueError: 格式错误
    """
    path = Path(path)
    tile = decode_qtile(path.read_bytes())
    logger.debug(f"已读取qtile文件: {path} ({tile.rows}×{tile.cols})")
    return tile


def write_csv(path: PathLike, tile: QTile) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(tile.levels()).to_csv(path, header=False, index=False)
    return path


def read_csv(path: PathLike, kind: TileKind, scales: Optional[np.ndarray] = None) -> QTile:
    """从CSV读取整数矩阵；未给出scale时全部取1"""
    data = pd.read_csv(Path(path), header=None, dtype=np.int64).to_numpy()
    kind = TileKind(kind)
    if scales is None:
        scales = np.ones(1 if kind is TileKind.ACTIVATION else data.shape[1])
    return QTile(data, kind, scales)


def load_tile(path: PathLike, kind: TileKind) -> QTile:
    """按扩展名读取 .qtile 或 .csv"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"张量文件不存在: {path}")
    if path.suffix.lower() == ".csv":
        return read_csv(path, kind)
    tile = read_qtile(path)
    if tile.kind is not TileKind(kind):
        raise ValueError(f"{path} 的类型为 {tile.kind.name}，期望 {TileKind(kind).name}")
    return tile
