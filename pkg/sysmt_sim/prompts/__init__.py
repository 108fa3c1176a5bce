"""提示词模块

提供FastMCP提示词模板，引导AI按顺序使用模拟工具
"""

from .experiment_prompts import experiment_prompts_server

__all__ = ["experiment_prompts_server"]
