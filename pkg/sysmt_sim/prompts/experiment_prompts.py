"""实验工作流提示词模块"""

import logging

from fastmcp import FastMCP
from fastmcp.prompts.prompt import PromptMessage, TextContent
from pydantic import Field
from typing_extensions import Annotated

logger = logging.getLogger(__name__)

# 创建实验工作流提示词子服务器
experiment_prompts_server = FastMCP(name="SySMT实验工作流")


@experiment_prompts_server.prompt(
    name="experiment",
    description="SySMT模拟实验工作流",
    tags={"workflow", "experiment"}
)
def experiment_workflow(
    goal: Annotated[str, Field(description="实验目标描述")]
) -> PromptMessage:
    """标准化的模拟实验执行流程"""

    instruction_text = f"""{goal}

工具执行流程：
1. sim_verify() - 先确认乘法器与舍入逻辑通过自检
2. sim_simulate() - 以T=2、策略S+A运行一次，记录加速比与MSE
3. sim_sweep(axis="sparsity") - 需要比较稀疏度时执行，对比重排与不重排
4. sim_sweep(axis="throttle_count") - 需要权衡精度与加速比时执行
5. runs_list_runs() - 汇总本次登记的运行记录

每个工具只调用一次，结果以工具返回为准。"""

    return PromptMessage(
        role="user",
        content=TextContent(type="text", text=instruction_text)
    )
