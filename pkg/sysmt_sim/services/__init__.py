"""
服务模块

提供SySMT模拟相关的业务逻辑：定宽数值、PE控制、脉动阵列、重排序、负载准备、指标与实验编排
"""

from .experiment_service import build_workload, reorder_stats, run_simulation, run_sweep, simulate_layer
from .systolic import SimulationResult, cycle_formula, reference_matmul, simulate, speedup
from .verification import VerificationFailure, run_verification

__all__ = [
    'build_workload',
    'reorder_stats',
    'run_simulation',
    'run_sweep',
    'simulate_layer',
    'SimulationResult',
    'cycle_formula',
    'reference_matmul',
    'simulate',
    'speedup',
    'VerificationFailure',
    'run_verification',
]
