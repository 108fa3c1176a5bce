"""
运行记录资源

提供两个数据端点：运行记录列表和单条运行记录详情
"""

import logging
from datetime import datetime
from typing import Any, Dict

import orjson
from fastmcp import Context, FastMCP

from ..database import RunRecordQuery, get_run_repository

logger = logging.getLogger(__name__)

# 创建运行记录资源服务器
run_registry_server = FastMCP("运行记录资源")


@run_registry_server.resource(
    uri="sysmt://runs",
    name="运行记录列表",
    description="获取所有已登记的实验运行记录及数量统计",
    mime_type="application/json",
    tags={"sysmt", "runs", "registry", "list"}
)
async def runs_list(ctx: Context = None) -> Dict[str, Any]:
    """运行记录列表资源"""
    try:
        repository = await get_run_repository()
        runs = await repository.list_runs(RunRecordQuery(limit=10000))
        records = [r.to_dict() for r in runs]
    except Exception as e:
        logger.error(f"获取运行记录列表失败: {e}")
        records = []
    return {
        "total": len(records),
        "runs": records,
        "timestamp": datetime.now().isoformat()
    }


@run_registry_server.resource(
    uri="sysmt://run/{run_id}",
    name="运行记录详情",
    description="获取指定运行记录的配置与结果摘要",
    mime_type="application/json",
    tags={"sysmt", "run", "details"}
)
async def run_detail(run_id: str) -> str:
    """单条运行记录详情

    Returns:
        运行记录的JSON字符串
    """
    try:
        repository = await get_run_repository()
        record = await repository.get_by_id(run_id)
        if record is None:
            return orjson.dumps({"error": f"运行记录 '{run_id}' 不存在", "run_id": run_id}).decode()
        return orjson.dumps(record.model_dump(mode="json"), option=orjson.OPT_INDENT_2).decode()
    except Exception as e:
        logger.error(f"获取运行记录详情失败: {e}")
        return orjson.dumps({"error": str(e), "run_id": run_id}).decode()
