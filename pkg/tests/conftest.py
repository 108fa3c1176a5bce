import numpy as np
import pytest
import pytest_asyncio
from hypothesis import settings

from sysmt_sim.database import DatabaseManager, RunRecordRepository
from sysmt_sim.models import ExperimentConfig, Strategy

settings.register_profile("sysmt", derandomize=True, deadline=None, max_examples=200)
settings.load_profile("sysmt")

S_STRATEGIES = ["S", "S+A", "S+Aw", "S+W", "S+aW"]
WIDTH_STRATEGIES = ["A", "Aw", "S+A", "S+Aw", "W", "aW", "S+W", "S+aW"]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def strategy():
    return Strategy.parse


@pytest.fixture
def small_config(tmp_path):
    """两层小规模合成网络，输出写入临时目录"""
    return ExperimentConfig.model_validate({
        "name": "small",
        "seed": 7,
        "output_dir": str(tmp_path / "out"),
        "workload": {"generator": {"layers": 2, "M": 8, "K": 32, "N": 8, "p_zero": 0.5,
                                   "p_fits4": 0.2, "correlation": 0.6, "calibration_rows": 32}},
        "sim": {"grid_rows": 8, "grid_cols": 8, "threads": 2, "strategy": "S+A"},
        "sweep": {"sparsity_values": [0.3, 0.6], "strategies": ["S+A", "A", "none"], "thread_values": [1, 2]},
    })


@pytest_asyncio.fixture
async def repository(tmp_path, monkeypatch):
    """指向临时数据库的运行记录仓储，同时替换工具与资源中的依赖"""
    manager = DatabaseManager(str(tmp_path / "runs.db"))
    await manager.initialize_database()
    repo = RunRecordRepository(manager)

    async def _get_repo():
        return repo

    async def _init():
        return None

    from sysmt_sim.resources import run_registry
    from sysmt_sim.tools import run_management_tools, simulation_tools

    monkeypatch.setattr(simulation_tools, "get_run_repository", _get_repo)
    monkeypatch.setattr(simulation_tools, "init_database", _init)
    monkeypatch.setattr(run_management_tools, "get_run_repository", _get_repo)
    monkeypatch.setattr(run_registry, "get_run_repository", _get_repo)
    yield repo
    await manager.close()
