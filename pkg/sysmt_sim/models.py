"""
SySMT模拟器配置与报告模型

定义实验配置、网格配置、执行策略、功耗表以及运行报告的数据结构和验证规则
"""

from enum import Enum
from pathlib import Path
from typing import Dict, List, Literal, Optional, Set

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator


class WidthSource(str, Enum):
    """利用哪一方的数据位宽"""
    NONE = "none"
    ACT = "A"
    WGT = "W"
    ACT_AND_WGT_REDUCE_ACT = "Aw"
    ACT_AND_WGT_REDUCE_WGT = "aW"


class Operand(str, Enum):
    """线程冲突时被降精度的操作数"""
    ACT = "act"
    WGT = "wgt"


class Strategy(BaseModel):
    """线程冲突处理策略

    exploit_sparsity对应S（利用8位稀疏性）；width_source对应A/W/Aw/aW。
    """
    model_config = ConfigDict(frozen=True)

    exploit_sparsity: bool = Field(True, description="是否利用8位稀疏性(S)")
    width_source: WidthSource = Field(WidthSource.ACT, description="利用的数据位宽来源")
    reduce_operand: Operand = Field(Operand.ACT, description="降精度的操作数（仅width_source=none时可选）")

    @model_validator(mode="before")
    @classmethod
    def derive_reduce_operand(cls, data):
        """A/Aw降低激活精度，W/aW降低权重精度"""
        if isinstance(data, dict) and "width_source" in data:
            implied = {
                WidthSource.ACT: Operand.ACT,
                WidthSource.ACT_AND_WGT_REDUCE_ACT: Operand.ACT,
                WidthSource.WGT: Operand.WGT,
                WidthSource.ACT_AND_WGT_REDUCE_WGT: Operand.WGT,
            }.get(WidthSource(data["width_source"]))
            if implied is not None:
                data = {**data, "reduce_operand": implied}
        return data

    @classmethod
    def parse(cls, label: str) -> "Strategy":
        """从标签解析策略，如 'S+A'、'Aw'、'S'、'none'"""
        text = label.strip()
        if text.lower() in ("none", "always-reduce", "a4w8"):
            return cls(exploit_sparsity=False, width_source=WidthSource.NONE)
        parts = [p.strip() for p in text.split("+") if p.strip()]
        exploit = "S" in parts
        rest = [p for p in parts if p != "S"]
        if len(rest) > 1 or (not exploit and not rest):
            raise ValueError(f"无法识别的策略标签: {label}")
        if rest:
            try:
                source = WidthSource(rest[0])
            except ValueError:
                raise ValueError(f"无法识别的策略标签: {label}")
        else:
            source = WidthSource.NONE
        return cls(exploit_sparsity=exploit, width_source=source)

    @property
    def label(self) -> str:
        if self.width_source is WidthSource.NONE:
            return "S" if self.exploit_sparsity else "none"
        return f"S+{self.width_source.value}" if self.exploit_sparsity else self.width_source.value

    @property
    def exploits_width(self) -> bool:
        return self.width_source is not WidthSource.NONE


STRATEGY_LABELS = ["S", "A", "Aw", "S+A", "S+Aw", "W", "aW", "S+W", "S+aW", "none"]


def _coerce_strategy(v):
    if isinstance(v, str):
        return Strategy.parse(v)
    return v


class GridConfig(BaseModel):
    """PE网格配置（默认16×16）"""
    rows: int = Field(16, ge=1, description="PE行数")
    cols: int = Field(16, ge=1, description="PE列数")
    threads: Literal[1, 2, 4] = Field(1, description="线程数T")
    strategy: Strategy = Field(default_factory=lambda: Strategy.parse("S+A"), description="冲突处理策略")

    @field_validator("strategy", mode="before")
    @classmethod
    def validate_strategy(cls, v):
        return _coerce_strategy(v)


class PowerPoint(BaseModel):
    """功耗表中的一个测量点"""
    threads: Literal[1, 2, 4]
    utilization: float = Field(..., ge=0.0, le=1.0)
    power_mw: float = Field(..., gt=0.0)


def _default_power_points() -> List[PowerPoint]:
    return [
        PowerPoint(threads=1, utilization=0.4, power_mw=277.0),
        PowerPoint(threads=1, utilization=0.8, power_mw=320.0),
        PowerPoint(threads=2, utilization=0.8, power_mw=429.0),
        PowerPoint(threads=4, utilization=0.8, power_mw=723.0),
    ]


class PowerTable(BaseModel):
    """平均功耗表 (线程数, 利用率) -> mW"""
    points: List[PowerPoint] = Field(default_factory=_default_power_points)
    base_throughput_macs: float = Field(256e9, gt=0.0, description="单线程阵列吞吐 (MAC/s)")
    _clamped_threads: Set[int] = PrivateAttr(default_factory=set)

    @model_validator(mode="after")
    def validate_monotone(self):
        """同一线程数下功耗随利用率单调不减"""
        for threads in (1, 2, 4):
            pts = sorted((p for p in self.points if p.threads == threads), key=lambda p: p.utilization)
            for a, b in zip(pts, pts[1:]):
                if b.power_mw < a.power_mw:
                    raise ValueError(f"功耗表在 {threads} 线程下不是单调的")
        return self

    def first_clamp(self, threads: int) -> bool:
        """该线程数第一次超出测量范围时返回True"""
        if threads in self._clamped_threads:
            return False
        self._clamped_threads.add(threads)
        return True


class ScoreWeights(BaseModel):
    """重排序打分权重：score = wide·p_wide + fits4·p_fits4 + zero·p_zero"""
    wide: float = 1.0
    fits4: float = 0.0
    zero: float = -1.0


class SimConfig(BaseModel):
    """模拟配置"""
    grid_rows: int = Field(16, ge=1)
    grid_cols: int = Field(16, ge=1)
    threads: Literal[1, 2, 4] = Field(2, description="默认线程数")
    strategy: Strategy = Field(default_factory=lambda: Strategy.parse("S+A"))
    reorder: bool = Field(False, description="是否启用基于统计的列重排序")
    layer_threads: Dict[str, Literal[1, 2, 4]] = Field(default_factory=dict, description="逐层线程数覆盖")
    power_table: PowerTable = Field(default_factory=PowerTable)
    score_weights: ScoreWeights = Field(default_factory=ScoreWeights)
    engine: Literal["vectorized", "cycle"] = Field("vectorized", description="模拟引擎")

    @field_validator("strategy", mode="before")
    @classmethod
    def validate_strategy(cls, v):
        return _coerce_strategy(v)

    def grid_for(self, threads: Optional[int] = None, strategy: Optional[Strategy] = None) -> GridConfig:
        return GridConfig(
            rows=self.grid_rows,
            cols=self.grid_cols,
            threads=threads if threads is not None else self.threads,
            strategy=strategy if strategy is not None else self.strategy,
        )

    def threads_for(self, layer_name: str) -> int:
        return self.layer_threads.get(layer_name, self.threads)


class GeneratorParams(BaseModel):
    """合成负载生成参数"""
    layers: int = Field(1, ge=1)
    M: int = Field(16, ge=1)
    K: int = Field(64, ge=1)
    N: int = Field(16, ge=1)
    p_zero: float = Field(0.5, ge=0.0, le=1.0)
    p_fits4: float = Field(0.2, ge=0.0, le=1.0)
    correlation: float = Field(0.0, ge=0.0, le=1.0)
    w_sparsity: float = Field(0.0, ge=0.0, le=1.0, description="权重剪枝比例（作为输入给定）")
    layer_p_zero: Optional[List[float]] = Field(None, description="逐层激活稀疏度（覆盖p_zero）")
    calibration_rows: int = Field(64, ge=1, description="重排序统计使用的校准行数")

    @model_validator(mode="after")
    def validate_probabilities(self):
        zeros = self.layer_p_zero or [self.p_zero]
        for p in zeros:
            if not 0.0 <= p <= 1.0 or p + self.p_fits4 > 1.0 + 1e-12:
                raise ValueError("p_zero + p_fits4 不能超过1")
        if self.layer_p_zero is not None and len(self.layer_p_zero) != self.layers:
            raise ValueError("layer_p_zero长度必须等于layers")
        return self


class LayerFiles(BaseModel):
    """外部导出的单层张量文件"""
    name: str
    x_path: Path
    w_path: Path
    calibration_paths: List[Path] = Field(default_factory=list)


class WorkloadSource(BaseModel):
    """负载来源：文件或生成器二选一"""
    files: Optional[List[LayerFiles]] = None
    generator: Optional[GeneratorParams] = None

    @model_validator(mode="after")
    def validate_exclusive(self):
        if (self.files is None) == (self.generator is None):
            raise ValueError("workload必须且只能指定files或generator之一")
        return self


class SweepSpec(BaseModel):
    """扫描参数"""
    sparsity_values: List[float] = Field(default_factory=lambda: [round(0.1 * i, 1) for i in range(1, 10)])
    strategies: List[str] = Field(default_factory=lambda: list(STRATEGY_LABELS))
    thread_values: List[Literal[1, 2, 4]] = Field(default_factory=lambda: [1, 2, 4])
    throttle_base_threads: Literal[2, 4] = 4
    throttle_to_threads: Literal[1, 2] = 2
    tie_tolerance: float = Field(0.0, ge=0.0, description="MSE近似相等的相对容差")

    @field_validator("strategies")
    @classmethod
    def validate_strategies(cls, v):
        for label in v:
            Strategy.parse(label)
        return v


class ExperimentConfig(BaseModel):
    """实验配置，随结果一起序列化以便复现"""
    name: str = Field("experiment", description="实验名称")
    workload: WorkloadSource = Field(default_factory=lambda: WorkloadSource(generator=GeneratorParams()))
    sim: SimConfig = Field(default_factory=SimConfig)
    sweep: SweepSpec = Field(default_factory=SweepSpec)
    seed: int = Field(0, ge=0, description="唯一随机种子")
    output_dir: Path = Field(Path("results"), description="输出目录")
    max_workers: int = Field(1, ge=1, description="扫描点并行度")


# ---------------------------------------------------------------------------
# 报告模型
# ---------------------------------------------------------------------------

class UtilBreakdown(BaseModel):
    """MAC利用率分解：完全8b-8b、部分（至少一个操作数4位足够）、空闲"""
    full_8x8: float
    partial: float
    idle: float


class CategoryCounts(BaseModel):
    """PE周期分类计数"""
    noop: int = 0
    single: int = 0
    squeeze_exact: int = 0
    squeeze_lossy: int = 0

    @property
    def total(self) -> int:
        return self.noop + self.single + self.squeeze_exact + self.squeeze_lossy


class LayerReport(BaseModel):
    """单层模拟结果"""
    name: str
    M: int
    K: int
    N: int
    threads: int
    strategy: str
    reordered: bool
    macs: int
    total_cycles: int
    steady_cycles: int
    baseline_total_cycles: int
    baseline_steady_cycles: int
    counts: CategoryCounts
    rounded_terms: int
    utilization: float
    baseline_utilization: float
    util_gain: float
    util_gain_model: float
    sparsity: float
    util_histogram: List[int] = Field(..., description="逐PE利用率的10%分桶直方图")
    breakdown: UtilBreakdown
    mse: float
    max_abs_error: int


class LayerEnergy(BaseModel):
    name: str
    macs: int
    threads: int
    utilization: float
    throughput_macs: float
    power_mw: float
    energy_mj: float


class EnergyReport(BaseModel):
    layers: List[LayerEnergy]
    total_mj: float


class RunReport(BaseModel):
    """一次simulate运行的完整报告"""
    name: str
    seed: int
    layers: List[LayerReport]
    total_cycles: int
    steady_cycles: int
    baseline_total_cycles: int
    baseline_steady_cycles: int
    speedup_total: float
    speedup_steady: float
    total_mse: float
    energy: EnergyReport
    baseline_energy: EnergyReport


class SweepPoint(BaseModel):
    """扫描结果中的一行"""
    axis: str
    label: str
    value: float
    reorder: bool = False
    threads: int
    speedup: float
    util_gain: float
    util_gain_model: float
    sparsity: float
    mse: float
    throttled_layers: List[str] = Field(default_factory=list)


class VerificationCheck(BaseModel):
    name: str
    passed: bool
    cases: int
    counterexample: Optional[str] = None
    seconds: float


class VerificationReport(BaseModel):
    passed: bool
    checks: List[VerificationCheck]
