"""
数据库模块

提供运行记录SQLite数据库的连接管理、数据模型和数据访问层
"""

from .connection import DatabaseManager, close_database, db_manager, get_db_manager, init_database
from .models import RunRecord, RunRecordCreate, RunRecordQuery
from .repository import RunRecordRepository, get_run_repository

__all__ = [
    # 数据模型
    'RunRecord',
    'RunRecordCreate',
    'RunRecordQuery',

    # 数据库连接
    'DatabaseManager',
    'db_manager',
    'get_db_manager',
    'init_database',
    'close_database',

    # 数据访问层
    'RunRecordRepository',
    'get_run_repository',
]
