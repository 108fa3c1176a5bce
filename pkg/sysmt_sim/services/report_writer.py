"""
报告输出模块

JSON（orjson，键排序、两空格缩进，相同输入得到相同字节）与CSV（pandas）
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Union

import orjson
import pandas as pd
from pydantic import BaseModel

from ..models import ExperimentConfig, RunReport, SweepPoint, VerificationReport

logger = logging.getLogger(__name__)

JSON_OPTIONS = orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY


def dumps(obj: Union[BaseModel, Dict[str, Any], List[Any]]) -> bytes:
    if isinstance(obj, BaseModel):
        obj = obj.model_dump(mode="json")
    return orjson.dumps(obj, option=JSON_OPTIONS) + b"\n"


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(obj))
    logger.info(f"已写入 {path}")
    return path


def write_csv(path: Path, rows: List[Dict[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(path, index=False, lineterminator="\n")
    logger.info(f"已写入 {path}")
    return path


def write_config(out_dir: Path, config: ExperimentConfig) -> Path:
    """保存校验后的配置，可直接用于复现"""
    return write_json(Path(out_dir) / "config.json", config)


def layer_rows(report: RunReport) -> List[Dict[str, Any]]:
    rows = []
    for layer in report.layers:
        rows.append({
            "name": layer.name,
            "M": layer.M,
            "K": layer.K,
            "N": layer.N,
            "threads": layer.threads,
            "strategy": layer.strategy,
            "reordered": layer.reordered,
            "total_cycles": layer.total_cycles,
            "baseline_total_cycles": layer.baseline_total_cycles,
            "steady_cycles": layer.steady_cycles,
            "baseline_steady_cycles": layer.baseline_steady_cycles,
            "noop": layer.counts.noop,
            "single": layer.counts.single,
            "squeeze_exact": layer.counts.squeeze_exact,
            "squeeze_lossy": layer.counts.squeeze_lossy,
            "rounded_terms": layer.rounded_terms,
            "utilization": layer.utilization,
            "util_gain": layer.util_gain,
            "util_gain_model": layer.util_gain_model,
            "sparsity": layer.sparsity,
            "mse": layer.mse,
        })
    return rows


def write_run_report(out_dir: Path, config: ExperimentConfig, report: RunReport) -> List[Path]:
    out_dir = Path(out_dir)
    return [
        write_config(out_dir, config),
        write_json(out_dir / "report.json", report),
        write_csv(out_dir / "layers.csv", layer_rows(report)),
    ]


def write_sweep(out_dir: Path, config: ExperimentConfig, axis: str, points: List[SweepPoint]) -> List[Path]:
    out_dir = Path(out_dir)
    rows = []
    for p in points:
        row = p.model_dump(mode="json")
        row["throttled_layers"] = ";".join(p.throttled_layers)
        rows.append(row)
    return [
        write_config(out_dir, config),
        write_json(out_dir / f"sweep_{axis}.json", [p.model_dump(mode="json") for p in points]),
        write_csv(out_dir / f"sweep_{axis}.csv", rows),
    ]


def write_verification(out_dir: Path, report: VerificationReport) -> Path:
    # 耗时每次不同，不写入文件
    payload = report.model_dump(mode="json")
    for check in payload["checks"]:
        check.pop("seconds", None)
    return write_json(Path(out_dir) / "verify.json", payload)


def write_reorder_stats(out_dir: Path, config: ExperimentConfig, results: Dict[str, Dict[str, Any]]) -> List[Path]:
    out_dir = Path(out_dir)
    stats = {name: {k: v for k, v in entry.items() if k != "permutation"} for name, entry in results.items()}
    permutations = {name: entry["permutation"] for name, entry in results.items()}
    return [
        write_config(out_dir, config),
        write_json(out_dir / "stats.json", stats),
        write_json(out_dir / "permutation.json", permutations),
    ]
