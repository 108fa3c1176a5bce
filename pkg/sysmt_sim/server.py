"""
SySMT MCP服务器

把模拟工具、运行记录管理、运行记录资源和实验提示词四个子服务器组合到一个FastMCP实例上
"""

import logging
from contextlib import asynccontextmanager

from fastmcp import FastMCP

from .database import close_database, init_database
from .prompts.experiment_prompts import experiment_prompts_server
from .resources.run_registry import run_registry_server
from .tools.run_management_tools import run_management_server
from .tools.simulation_tools import simulation_server

logger = logging.getLogger(__name__)

# (子服务器, 前缀)；资源使用自身的 sysmt:// URI，不加前缀
SUB_SERVERS = (
    (simulation_server, "sim"),
    (run_management_server, "runs"),
    (experiment_prompts_server, "workflow"),
    (run_registry_server, None),
)

# lifespan 可能被多次进入，子服务器只导入一次
_composed = False


async def compose(app: FastMCP):
    global _composed
    if _composed:
        logger.debug("子服务器已组合")
        return
    for server, prefix in SUB_SERVERS:
        try:
            await app.import_server(server, prefix=prefix)
        except Exception as e:
            logger.error(f"导入子服务器 {server.name} 失败: {e}")
            raise
        logger.info(f"已导入子服务器 {server.name}" + (f" ({prefix}_*)" if prefix else ""))
    _composed = True


@asynccontextmanager
async def lifespan(app):
    await compose(app)
    await init_database()
    logger.info("SySMT MCP服务器已就绪")
    try:
        yield
    finally:
        await close_database()
        logger.info("SySMT MCP服务器已关闭")


mcp = FastMCP(name="SySMT模拟器", lifespan=lifespan)
