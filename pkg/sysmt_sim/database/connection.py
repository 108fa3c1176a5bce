"""
运行记录数据库连接

单连接 + asyncio锁；表结构在启动时按需创建
"""

import asyncio
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import aiosqlite

logger = logging.getLogger(__name__)

DEFAULT_DB_PATH = "data/sysmt_runs.db"

RUN_RECORDS_SCHEMA = """
CREATE TABLE IF NOT EXISTS run_records (
    run_id       TEXT PRIMARY KEY,
    command      TEXT NOT NULL CHECK (command IN ('simulate', 'verify', 'sweep', 'reorder-stats')),
    name         TEXT NOT NULL,
    config_json  TEXT NOT NULL,
    summary_json TEXT NOT NULL,
    output_dir   TEXT,
    created_at   TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_run_command ON run_records(command);
CREATE INDEX IF NOT EXISTS idx_run_name ON run_records(name);
"""


class DatabaseManager:
    """运行记录库的连接持有者

    Args:
        db_path: SQLite文件路径，父目录在首次连接时创建
    """

    def __init__(self, db_path: str = DEFAULT_DB_PATH):
        self.db_path = Path(db_path)
        self._conn: Optional[aiosqlite.Connection] = None
        self._lock = asyncio.Lock()

    async def connect(self) -> aiosqlite.Connection:
        async with self._lock:
            if self._conn is None:
                self.db_path.parent.mkdir(parents=True, exist_ok=True)
                self._conn = await aiosqlite.connect(self.db_path, check_same_thread=False)
                self._conn.row_factory = aiosqlite.Row
                logger.info(f"已连接运行记录库: {self.db_path}")
            return self._conn

    async def close(self):
        async with self._lock:
            if self._conn is not None:
                await self._conn.close()
                self._conn = None
                logger.info(f"运行记录库已断开: {self.db_path}")

    async def initialize_database(self):
        """建表与索引（幂等）"""
        conn = await self.connect()
        try:
            await conn.executescript(RUN_RECORDS_SCHEMA)
            await conn.commit()
        except aiosqlite.Error as e:
            logger.error(f"运行记录表创建失败: {e}")
            await conn.rollback()
            raise
        logger.info("运行记录表就绪")

    async def fetch_one(self, sql: str, params: Sequence[Any] = ()) -> Optional[Dict[str, Any]]:
        conn = await self.connect()
        async with conn.execute(sql, params) as cursor:
            row = await cursor.fetchone()
        return dict(row) if row is not None else None

    async def fetch_all(self, sql: str, params: Sequence[Any] = ()) -> List[Dict[str, Any]]:
        conn = await self.connect()
        async with conn.execute(sql, params) as cursor:
            rows = await cursor.fetchall()
        return [dict(row) for row in rows]

    async def execute_update(self, sql: str, params: Sequence[Any] = ()) -> int:
        """执行写语句并提交，返回受影响行数"""
        conn = await self.connect()
        async with conn.execute(sql, params) as cursor:
            affected = cursor.rowcount
        await conn.commit()
        return affected


# MCP服务器共用的实例
db_manager = DatabaseManager()


async def get_db_manager() -> DatabaseManager:
    return db_manager


async def init_database():
    await db_manager.initialize_database()


async def close_database():
    await db_manager.close()
