"""
运行记录数据访问层

提供运行记录的增删查操作接口
"""

import logging
import uuid
from datetime import datetime
from typing import List, Optional, Tuple

from .connection import DatabaseManager, get_db_manager
from .models import RunRecord, RunRecordCreate, RunRecordQuery

logger = logging.getLogger(__name__)


class RunRecordRepository:
    """运行记录数据访问层"""

    def __init__(self, db_manager: DatabaseManager):
        self.db_manager = db_manager

    async def create(self, data: RunRecordCreate) -> RunRecord:
        """创建新的运行记录

        Args:
            data: 运行记录创建数据

        Returns:
            创建的运行记录对象
        """
        record = RunRecord(
            run_id=str(uuid.uuid4()),
            command=data.command,
            name=data.name,
            config=data.config,
            summary=data.summary,
            output_dir=data.output_dir,
            created_at=datetime.now(),
        )
        row = record.to_dict()
        insert_sql = """
        INSERT INTO run_records (
            run_id, command, name, config_json, summary_json, output_dir, created_at
        ) VALUES (?, ?, ?, ?, ?, ?, ?)
        """
        params = (
            row['run_id'],
            row['command'],
            row['name'],
            row['config_json'],
            row['summary_json'],
            row['output_dir'],
            row['created_at'],
        )
        try:
            await self.db_manager.execute_update(insert_sql, params)
            logger.info(f"运行记录创建成功: {record.run_id} ({record.command})")
            return record
        except Exception as e:
            logger.error(f"创建运行记录失败: {e}")
            raise

    async def get_by_id(self, run_id: str) -> Optional[RunRecord]:
        """根据ID获取运行记录，不存在时返回None"""
        result = await self.db_manager.fetch_one("SELECT * FROM run_records WHERE run_id = ?", (run_id,))
        if result:
            return RunRecord.from_dict(result)
        return None

    @staticmethod
    def _where(query: RunRecordQuery) -> Tuple[str, list]:
        conditions = []
        params = []
        if query.command:
            conditions.append("command = ?")
            params.append(query.command)
        if query.name:
            conditions.append("name LIKE ?")
            params.append(f"%{query.name}%")
        clause = " WHERE " + " AND ".join(conditions) if conditions else ""
        return clause, params

    async def list_runs(self, query: RunRecordQuery) -> List[RunRecord]:
        """查询运行记录列表，按创建时间倒序"""
        clause, params = self._where(query)
        sql = f"SELECT * FROM run_records{clause} ORDER BY created_at DESC LIMIT ? OFFSET ?"
        params.extend([query.limit, query.offset])
        results = await self.db_manager.fetch_all(sql, tuple(params))
        return [RunRecord.from_dict(result) for result in results]

    async def delete(self, run_id: str) -> bool:
        """删除运行记录

        Returns:
            删除成功返回True，记录不存在返回False
        """
        try:
            affected_rows = await self.db_manager.execute_update("DELETE FROM run_records WHERE run_id = ?", (run_id,))
            if affected_rows > 0:
                logger.info(f"运行记录删除成功: {run_id}")
                return True
            logger.warning(f"运行记录不存在: {run_id}")
            return False
        except Exception as e:
            logger.error(f"删除运行记录失败: {e}")
            raise

    async def count(self, query: RunRecordQuery) -> int:
        clause, params = self._where(query)
        result = await self.db_manager.fetch_one(f"SELECT COUNT(*) as count FROM run_records{clause}", tuple(params))
        return result['count'] if result else 0


async def get_run_repository() -> RunRecordRepository:
    """获取运行记录仓储实例，用于依赖注入"""
    db_manager = await get_db_manager()
    return RunRecordRepository(db_manager)
