"""
负载准备模块

提供量化、卷积降维、合成负载生成和张量文件读写
"""

from .im2col import ConvSpec, direct_conv2d, im2col, output_to_feature_map, weights_to_matrix
from .qtile_io import decode_qtile, encode_qtile, load_tile, read_csv, read_qtile, write_csv, write_qtile
from .quantize import QTile, TileKind, dequantize, dequantize_output, quantize_acts, quantize_wgts
from .synthetic import gen_synthetic

__all__ = [
    'ConvSpec',
    'direct_conv2d',
    'im2col',
    'output_to_feature_map',
    'weights_to_matrix',
    'decode_qtile',
    'encode_qtile',
    'load_tile',
    'read_csv',
    'read_qtile',
    'write_csv',
    'write_qtile',
    'QTile',
    'TileKind',
    'dequantize',
    'dequantize_output',
    'quantize_acts',
    'quantize_wgts',
    'gen_synthetic',
]
