"""工具模块

提供SySMT MCP服务的模拟与运行记录管理工具
"""

from .run_management_tools import run_management_server
from .simulation_tools import simulation_server

__all__ = [
    "run_management_server",
    "simulation_server",
]
