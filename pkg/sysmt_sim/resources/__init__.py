"""资源模块

- run_registry: 运行记录列表与详情资源
"""

from .run_registry import run_registry_server

__all__ = [
    'run_registry_server',      # 运行记录资源
]
