"""
运行记录数据模型

定义实验运行记录的元数据结构和验证规则
报告文件本身不入库，只保存配置与摘要
"""

from datetime import datetime
from typing import Any, Dict, Optional

import orjson
from pydantic import BaseModel, Field, field_validator

RUN_COMMANDS = ['simulate', 'verify', 'sweep', 'reorder-stats']


def _validate_command(v):
    if v not in RUN_COMMANDS:
        raise ValueError(f'命令必须是 {RUN_COMMANDS} 之一')
    return v


class RunRecord(BaseModel):
    """运行记录模型"""
    run_id: str = Field(..., description="唯一标识符")
    command: str = Field(..., description="子命令(simulate/verify/sweep/reorder-stats)")
    name: str = Field(..., description="实验名称")
    config: Dict[str, Any] = Field(default_factory=dict, description="校验后的实验配置")
    summary: Dict[str, Any] = Field(default_factory=dict, description="结果摘要")
    output_dir: Optional[str] = Field(None, description="输出目录")
    created_at: datetime = Field(default_factory=datetime.now, description="创建时间")

    @field_validator('command')
    @classmethod
    def validate_command(cls, v):
        return _validate_command(v)

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式，用于数据库存储"""
        return {
            "run_id": self.run_id,
            "command": self.command,
            "name": self.name,
            "config_json": orjson.dumps(self.config, option=orjson.OPT_SORT_KEYS).decode(),
            "summary_json": orjson.dumps(self.summary, option=orjson.OPT_SORT_KEYS).decode(),
            "output_dir": self.output_dir,
            "created_at": self.created_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunRecord":
        """从数据库行创建运行记录对象"""
        data = dict(data)
        data['config'] = orjson.loads(data.pop('config_json') or '{}')
        data['summary'] = orjson.loads(data.pop('summary_json') or '{}')
        if isinstance(data.get('created_at'), str):
            data['created_at'] = datetime.fromisoformat(data['created_at'])
        return cls(**data)


class RunRecordCreate(BaseModel):
    """创建运行记录的数据模型"""
    command: str = Field(..., description="子命令")
    name: str = Field(..., description="实验名称")
    config: Dict[str, Any] = Field(default_factory=dict, description="校验后的实验配置")
    summary: Dict[str, Any] = Field(default_factory=dict, description="结果摘要")
    output_dir: Optional[str] = Field(None, description="输出目录")

    @field_validator('command')
    @classmethod
    def validate_command(cls, v):
        return _validate_command(v)


class RunRecordQuery(BaseModel):
    """查询运行记录的参数模型"""
    command: Optional[str] = Field(None, description="按子命令筛选")
    name: Optional[str] = Field(None, description="按实验名称筛选（模糊匹配）")
    limit: int = Field(default=100, ge=1, le=10000, description="返回结果数量限制")
    offset: int = Field(default=0, ge=0, description="结果偏移量")
