"""运行记录管理工具模块

列出和删除已登记的实验运行记录
"""

import logging
from typing import Any, Dict, Optional

from fastmcp import Context, FastMCP
from pydantic import Field
from typing_extensions import Annotated

from ..database import RunRecordQuery, get_run_repository

logger = logging.getLogger(__name__)

# 创建运行记录管理服务器
run_management_server = FastMCP(name="运行记录管理")


@run_management_server.tool
async def list_runs(
    command: Annotated[Optional[str], Field(description="按子命令筛选：simulate、verify、sweep、reorder-stats")] = None,
    name: Annotated[Optional[str], Field(description="按实验名称模糊筛选")] = None,
    limit: Annotated[int, Field(description="返回数量上限", ge=1, le=10000)] = 100,
    ctx: Context = None
) -> Dict[str, Any]:
    """列出已登记的运行记录，按时间倒序

    关键词：历史、运行记录、实验列表
    """
    try:
        repository = await get_run_repository()
        query = RunRecordQuery(command=command, name=name, limit=limit)
        runs = await repository.list_runs(query)
        total = await repository.count(query)
        return {
            "success": True,
            "total": total,
            "runs": [
                {
                    "run_id": r.run_id,
                    "command": r.command,
                    "name": r.name,
                    "summary": r.summary,
                    "output_dir": r.output_dir,
                    "created_at": r.created_at.isoformat(),
                }
                for r in runs
            ],
        }
    except Exception as e:
        error_msg = f"获取运行记录失败: {e}"
        logger.error(error_msg)
        if ctx:
            await ctx.error(error_msg)
        return {"success": False, "error": error_msg}


@run_management_server.tool
async def delete_run(
    run_id: Annotated[str, Field(description="运行记录ID")],
    ctx: Context = None
) -> Dict[str, Any]:
    """删除一条运行记录（不删除报告文件）

    关键词：删除、清理、运行记录
    """
    try:
        repository = await get_run_repository()
        deleted = await repository.delete(run_id)
        if not deleted:
            return {"success": False, "error": f"运行记录不存在: {run_id}"}
        if ctx:
            await ctx.info(f"已删除运行记录 {run_id}")
        return {"success": True, "run_id": run_id}
    except Exception as e:
        error_msg = f"删除运行记录失败: {e}"
        logger.error(error_msg)
        if ctx:
            await ctx.error(error_msg)
        return {"success": False, "error": error_msg}
