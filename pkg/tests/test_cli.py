import asyncio

import numpy as np
import orjson
import pandas as pd
import pytest

from sysmt_sim import cli
from sysmt_sim.database import DatabaseManager, RunRecordQuery, RunRecordRepository
from sysmt_sim.models import SweepSpec
from sysmt_sim.services.lowering import QTile, TileKind, write_qtile
from sysmt_sim.services.qnum import FMulMode, fmul_2t
from sysmt_sim.services.verification import run_verification


@pytest.fixture
def config_file(tmp_path, small_config):
    path = tmp_path / "config.json"
    path.write_text(small_config.model_dump_json())
    return path


def _report(out_dir):
    return orjson.loads((out_dir / "report.json").read_bytes())


def test_simulate_writes_reports(tmp_path, config_file):
    out = tmp_path / "run"
    assert cli.main(["simulate", "--config", str(config_file), "--output", str(out)]) == 0
    assert {p.name for p in out.iterdir()} >= {"config.json", "report.json", "layers.csv"}
    report = _report(out)
    assert len(report["layers"]) == 2
    assert report["speedup_total"] == pytest.approx(report["baseline_total_cycles"] / report["total_cycles"])
    layers = pd.read_csv(out / "layers.csv")
    assert list(layers["name"]) == ["layer0", "layer1"]


def test_speedup_field_equals_cycle_ratio(tmp_path, config_file):
    one, two = tmp_path / "t1", tmp_path / "t2"
    assert cli.main(["simulate", "--config", str(config_file), "--output", str(one), "--threads", "1"]) == 0
    assert cli.main(["simulate", "--config", str(config_file), "--output", str(two), "--threads", "2"]) == 0
    first, second = _report(one), _report(two)
    assert first["speedup_total"] == 1.0
    assert second["speedup_total"] == pytest.approx(first["total_cycles"] / second["total_cycles"])


def test_simulate_is_reproducible(tmp_path, config_file):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert cli.main(["simulate", "--config", str(config_file), "--output", str(a)]) == 0
    assert cli.main(["simulate", "--config", str(config_file), "--output", str(b)]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert (a / "layers.csv").read_bytes() == (b / "layers.csv").read_bytes()
    # 用输出的config.json重新运行
    assert cli.main(["simulate", "--config", str(a / "config.json"), "--output", str(c)]) == 0
    assert (a / "report.json").read_bytes() == (c / "report.json").read_bytes()


def test_seed_override_changes_workload(tmp_path, config_file):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["simulate", "--config", str(config_file), "--output", str(a)]) == 0
    assert cli.main(["simulate", "--config", str(config_file), "--output", str(b), "--seed", "8"]) == 0
    assert _report(a)["seed"] == 7
    assert _report(b)["seed"] == 8
    assert _report(a)["layers"] != _report(b)["layers"]
    assert (a / "report.json").read_bytes() != (b / "report.json").read_bytes()


def test_simulate_from_tensor_files(tmp_path):
    x = write_qtile(tmp_path / "conv.qtile", QTile(np.array([[46, 178]]), TileKind.ACTIVATION, np.array([1.0])))
    w = write_qtile(tmp_path / "conv_w.qtile", QTile(np.array([[23], [-14]]), TileKind.WEIGHT, np.array([1.0])))
    out = tmp_path / "files"
    args = ["simulate", "--x", str(x), "--w", str(w), "--threads", "2", "--strategy", "S+A", "--output", str(out)]
    assert cli.main(args) == 0
    layer = _report(out)["layers"][0]
    assert layer["name"] == "conv"
    assert layer["counts"]["squeeze_lossy"] == 1
    assert layer["rounded_terms"] == 2


def test_missing_input_file_exits_2(tmp_path):
    args = ["simulate", "--x", str(tmp_path / "nope.qtile"), "--w", str(tmp_path / "nope_w.qtile")]
    assert cli.main(args) == 2


def test_missing_config_exits_2(tmp_path):
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2


def test_invalid_config_exits_2(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"sim": {"threads": 3}}')
    assert cli.main(["simulate", "--config", str(path)]) == 2


def test_unpaired_tensor_flag_exits_2(tmp_path):
    assert cli.main(["simulate", "--x", str(tmp_path / "x.qtile")]) == 2


def test_usage_errors_exit_2():
    assert cli.main([]) == 2
    assert cli.main(["sweep", "--axis", "bogus"]) == 2


def test_verify_passes(tmp_path):
    assert cli.main(["verify", "--output", str(tmp_path)]) == 0
    report = orjson.loads((tmp_path / "verify.json").read_bytes())
    assert report["passed"]
    assert {c["name"] for c in report["checks"]} >= {"fmul_one8x8", "rounding", "lowering"}


def _shift_off_by_one(lane0, lane1, mode):
    low, high = fmul_2t(lane0, lane1, mode)
    if FMulMode(mode) is FMulMode.ONE_8X8:
        # 高半字节通道只左移3位
        high >>= 1
    return low, high


def test_verify_reports_counterexample(monkeypatch, capsys):
    monkeypatch.setattr(cli, "run_verification", lambda seed: run_verification(fmul2=_shift_off_by_one, seed=seed))
    assert cli.main(["verify"]) == 1
    assert "反例" in capsys.readouterr().out


def test_exhaustive_check_within_time_budget():
    report = run_verification()
    check = next(c for c in report.checks if c.name == "fmul_one8x8")
    assert check.passed and check.cases == 65536
    assert check.seconds < 10.0


def test_sweep_sparsity_writes_points(tmp_path, config_file):
    out = tmp_path / "sweep"
    assert cli.main(["sweep", "--config", str(config_file), "--axis", "sparsity", "--output", str(out)]) == 0
    points = pd.read_csv(out / "sweep_sparsity.csv")
    assert len(points) == 4
    assert set(points["reorder"]) == {False, True}


def test_sweep_sparsity_default_values(tmp_path, small_config):
    config = small_config.model_copy(update={"sweep": SweepSpec()})
    path = tmp_path / "default_sweep.json"
    path.write_text(config.model_dump_json())
    out = tmp_path / "sweep"
    assert cli.main(["sweep", "--config", str(path), "--axis", "sparsity", "--output", str(out)]) == 0
    points = pd.read_csv(out / "sweep_sparsity.csv")
    assert len(points) == 18
    assert sorted(set(points["value"])) == pytest.approx(SweepSpec().sparsity_values)
    assert set(points["reorder"]) == {False, True}


def test_sweep_threads_writes_points(tmp_path, config_file):
    out = tmp_path / "sweep"
    assert cli.main(["sweep", "--config", str(config_file), "--axis", "threads", "--output", str(out)]) == 0
    points = pd.read_csv(out / "sweep_threads.csv")
    assert list(points["threads"]) == [1, 2]
    assert points["speedup"].iloc[0] == 1.0
    assert points["speedup"].iloc[1] > 1.0


def test_sweep_strategy_in_parallel(tmp_path, config_file):
    out = tmp_path / "sweep"
    args = ["sweep", "--config", str(config_file), "--axis", "strategy", "--output", str(out), "--workers", "3"]
    assert cli.main(args) == 0
    points = orjson.loads((out / "sweep_strategy.json").read_bytes())
    assert [p["label"] for p in points] == ["S+A", "A", "none"]


def test_reorder_stats_writes_permutations(tmp_path, config_file):
    out = tmp_path / "stats"
    assert cli.main(["reorder-stats", "--config", str(config_file), "--output", str(out)]) == 0
    perms = orjson.loads((out / "permutation.json").read_bytes())
    assert set(perms) == {"layer0", "layer1"}
    assert sorted(perms["layer0"]) == list(range(32))


def test_registry_records_runs(tmp_path, config_file):
    registry = tmp_path / "runs.db"
    out = tmp_path / "run"
    args = ["--registry", str(registry), "simulate", "--config", str(config_file), "--output", str(out)]
    assert cli.main(args) == 0

    async def fetch():
        manager = DatabaseManager(str(registry))
        try:
            return await RunRecordRepository(manager).list_runs(RunRecordQuery(command="simulate"))
        finally:
            await manager.close()

    records = asyncio.run(fetch())
    assert len(records) == 1
    assert records[0].name == "small"
    assert records[0].summary["speedup_total"] == pytest.approx(_report(out)["speedup_total"])
