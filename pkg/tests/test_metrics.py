import logging

import numpy as np
import pytest

from sysmt_sim.models import ExperimentConfig, GeneratorParams, GridConfig, PowerTable, SimConfig, Strategy, SweepSpec
from sysmt_sim.services.experiment_service import (
    build_workload,
    generator_at_sparsity,
    run_simulation,
    run_sweep,
    simulate_layer,
)
from sysmt_sim.services.lowering import QTile, TileKind
from sysmt_sim.services.metrics import (
    LayerUsage,
    MacClass,
    classify_mac,
    energy,
    lookup_power,
    max_abs_error,
    measured_sparsity,
    measured_util_gain,
    mse,
    network_speedup,
    select_throttled_layers,
    util_breakdown,
    util_gain_model,
    util_histogram,
)
from sysmt_sim.services.systolic import cycle_formula, simulate


def test_classify_mac():
    assert classify_mac(0, 100) is MacClass.IDLE
    assert classify_mac(14, 242) is MacClass.PARTIAL
    assert classify_mac(178, -100) is MacClass.FULL
    assert classify_mac(178, -8) is MacClass.PARTIAL


def test_util_breakdown_matches_per_mac_classification(rng):
    X = rng.choice([0, 3, 15, 16, 200], size=(6, 9))
    W = rng.choice([0, -8, 7, 8, -100], size=(9, 4))
    classes = [classify_mac(int(X[m, k]), int(W[k, n])) for m in range(6) for k in range(9) for n in range(4)]
    total = len(classes)
    breakdown = util_breakdown(X, W)
    assert breakdown.idle == pytest.approx(classes.count(MacClass.IDLE) / total)
    assert breakdown.partial == pytest.approx(classes.count(MacClass.PARTIAL) / total)
    assert breakdown.full_8x8 == pytest.approx(classes.count(MacClass.FULL) / total)


def test_util_gain_model_values():
    assert util_gain_model(0.0, 2) == 1.0
    for s in (0.1, 0.35, 0.8):
        assert util_gain_model(s, 2) == pytest.approx(s + 1)
    assert util_gain_model(0.5, 4) == pytest.approx(1.875)
    assert util_gain_model(1.0, 4) == 4.0
    with pytest.raises(ValueError):
        util_gain_model(1.5, 2)


def test_measured_gain_of_identical_traces(rng):
    X = rng.integers(0, 256, size=(8, 16))
    W = rng.integers(1, 128, size=(16, 4))
    result = simulate(X, W, GridConfig(threads=1))
    assert measured_util_gain(result.trace, result.trace) == 1.0


@pytest.mark.parametrize("threads", [2, 4])
def test_measured_gain_tracks_independence_model(rng, threads):
    for s in np.round(np.arange(0.1, 1.0, 0.1), 1):
        K = 1000 * threads
        X = rng.integers(1, 256, size=(1024, K)) * (rng.random((1024, K)) >= s)
        W = rng.integers(1, 128, size=(K, 1))
        base = simulate(X, W, GridConfig(rows=1024, cols=1, threads=1))
        smt = simulate(X, W, GridConfig(rows=1024, cols=1, threads=threads))
        measured_s = measured_sparsity(base.trace)
        assert measured_s == pytest.approx(s, abs=0.01)
        gain = measured_util_gain(base.trace, smt.trace)
        assert gain == pytest.approx(util_gain_model(measured_s, threads), abs=0.02)


def test_util_histogram():
    assert util_histogram(np.array([0.0, 0.05, 0.55, 1.0, 1.0])) == [2, 0, 0, 0, 0, 1, 0, 0, 0, 2]


def test_mse_and_max_error():
    ref = np.array([[10, -4]])
    assert mse(ref, ref) == 0.0
    assert mse(np.array([[12, -4]]), ref) == pytest.approx(2.0)
    assert max_abs_error(np.array([[12, -7]]), ref) == 3
    x = QTile(np.array([[1]]), TileKind.ACTIVATION, np.array([0.5]))
    w = QTile(np.array([[1, 1]]), TileKind.WEIGHT, np.array([0.25, 1.0]))
    assert mse(np.array([[12, -4]]), ref, x, w) == pytest.approx((2 * 0.125) ** 2 / 2)
    with pytest.raises(ValueError):
        mse(np.zeros((1, 2)), np.zeros((2, 1)))


def test_energy_arithmetic():
    report = energy([LayerUsage("conv1", 10**9, 1, 0.8)])
    assert report.total_mj == pytest.approx(1.25, rel=1e-9)


def test_doubling_throughput_halves_energy():
    fast = PowerTable(base_throughput_macs=512e9)
    assert energy([LayerUsage("l", 10**9, 1, 0.8)], fast).total_mj == pytest.approx(0.625, rel=1e-9)


def test_two_threads_save_energy():
    smt = energy([LayerUsage("l", 10**9, 2, 0.8)]).total_mj
    base = energy([LayerUsage("l", 10**9, 1, 0.4)]).total_mj
    assert smt / base == pytest.approx(429 / (2 * 277), rel=1e-9)


def test_energy_is_additive_over_layers():
    layers = [LayerUsage("a", 5 * 10**8, 1, 0.8), LayerUsage("b", 5 * 10**8, 1, 0.8)]
    report = energy(layers)
    assert len(report.layers) == 2
    assert report.total_mj == pytest.approx(1.25, rel=1e-9)


def test_lookup_power_interpolates_buckets():
    table = PowerTable()
    assert lookup_power(table, 1, 0.6) == pytest.approx(298.5)
    assert lookup_power(table, 1, 0.64) == pytest.approx(298.5)
    assert lookup_power(table, 4, 0.8) == 723.0


def _warnings(caplog):
    return [r for r in caplog.records if r.levelno == logging.WARNING]


def test_lookup_power_clamps_with_warning(caplog):
    table = PowerTable()
    with caplog.at_level(logging.DEBUG, logger="sysmt_sim.services.metrics"):
        assert lookup_power(table, 1, 0.93) == 320.0
        assert lookup_power(table, 1, 0.1) == 277.0
    assert len(_warnings(caplog)) == 1
    assert len(caplog.records) == 2


def test_single_point_thread_count_does_not_warn(caplog):
    table = PowerTable()
    with caplog.at_level(logging.DEBUG, logger="sysmt_sim.services.metrics"):
        assert lookup_power(table, 2, 0.3) == 429.0
        assert lookup_power(table, 4, 0.5) == 723.0
    assert _warnings(caplog) == []
    # 新的功耗表重新记录一次
    with caplog.at_level(logging.WARNING, logger="sysmt_sim.services.metrics"):
        lookup_power(PowerTable(), 1, 0.0)
    assert len(_warnings(caplog)) == 1


def test_network_run_warns_at_most_once_per_thread_count(caplog):
    config = _network_config(p_zero=0.8)
    with caplog.at_level(logging.WARNING, logger="sysmt_sim.services.metrics"):
        run_simulation(config, sim=SimConfig(threads=2))
    assert len(_warnings(caplog)) <= 1


def test_power_table_must_be_monotone():
    with pytest.raises(ValueError):
        PowerTable(points=[
            {"threads": 1, "utilization": 0.4, "power_mw": 300.0},
            {"threads": 1, "utilization": 0.8, "power_mw": 250.0},
        ])


def test_select_throttled_layers():
    assert select_throttled_layers([1.0, 5.0, 3.0, 5.0], 1) == [1]
    assert select_throttled_layers([1.0, 5.0, 3.0, 5.0], 2) == [1, 3]
    assert select_throttled_layers([2.0, 2.0, 2.0], 2) == [0, 1]
    assert select_throttled_layers([1.0, 2.0], 0) == []
    with pytest.raises(ValueError):
        select_throttled_layers([1.0], 2)


def test_select_throttled_layers_tie_tolerance():
    assert select_throttled_layers([9.95, 10.0, 1.0], 1) == [1]
    assert select_throttled_layers([9.95, 10.0, 1.0], 1, tie_tolerance=0.01) == [0]


def test_network_speedup():
    assert network_speedup([10, 10], [5, 5]) == 2.0
    with pytest.raises(ValueError):
        network_speedup([1], [1, 2])


def _network_config(**generator):
    params = {"layers": 5, "M": 16, "K": 128, "N": 16, "p_zero": 0.4, "p_fits4": 0.2, "correlation": 0.3}
    params.update(generator)
    return ExperimentConfig.model_validate({"seed": 31, "workload": {"generator": params}})


def test_throttling_worst_layer_trades_speed_for_error():
    config = _network_config(layer_p_zero=[0.2, 0.4, 0.6, 0.3, 0.5])
    layers = build_workload(config)
    sim4 = SimConfig(threads=4, strategy="S+A")
    profile = run_simulation(config, layers, sim4)
    worst = select_throttled_layers([r.mse for r in profile.layers], 1)[0]
    name = layers[worst].name
    throttled = run_simulation(config, layers, sim4.model_copy(update={"layer_threads": {name: 2}}))

    assert throttled.total_mse < profile.total_mse
    cyc4 = cycle_formula(16, 128, 16, 4)[0]
    cyc2 = cycle_formula(16, 128, 16, 2)[0]
    expected = profile.baseline_total_cycles / (profile.total_cycles - cyc4 + cyc2)
    assert throttled.speedup_total == pytest.approx(expected)
    assert throttled.speedup_total < profile.speedup_total


def test_throttle_sweep_frontier():
    config = _network_config(layer_p_zero=[0.2, 0.4, 0.6, 0.3, 0.5])
    points = run_sweep(config, "throttle_count")
    assert [p.value for p in points] == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
    assert points[0].throttled_layers == []
    assert len(points[-1].throttled_layers) == 5
    speedups = [p.speedup for p in points]
    assert all(a > b for a, b in zip(speedups, speedups[1:]))
    assert points[1].mse < points[0].mse


def test_strategy_ordering_on_every_layer():
    config = _network_config(M=32, K=256, N=32, p_zero=0.5, p_fits4=0.25, correlation=0.0)
    sim = SimConfig(threads=2)
    for layer in build_workload(config):
        errors = [simulate_layer(layer, sim, 2, strategy=Strategy.parse(label)).report.mse
                  for label in ("S+A", "A", "none")]
        assert errors[0] <= errors[1] <= errors[2]


def test_generator_at_sparsity_keeps_probabilities_valid():
    params = GeneratorParams(p_zero=0.5, p_fits4=0.2, layers=2, layer_p_zero=[0.1, 0.7])
    dense = generator_at_sparsity(params, 0.5)
    assert dense.p_zero == 0.5 and dense.p_fits4 == pytest.approx(0.2)
    assert dense.layer_p_zero is None
    sparse = generator_at_sparsity(params, 0.9)
    assert sparse.p_fits4 == pytest.approx(0.04)
    assert sparse.p_zero + sparse.p_fits4 <= 1.0
    assert generator_at_sparsity(GeneratorParams(p_zero=1.0, p_fits4=0.0), 0.3).p_fits4 == 0.0


def _sweep_config(**sweep):
    return ExperimentConfig.model_validate({
        "seed": 11,
        "workload": {"generator": {"layers": 2, "M": 128, "K": 512, "N": 8,
                                   "p_zero": 0.5, "p_fits4": 0.2, "correlation": 0.0}},
        "sim": {"grid_rows": 8, "grid_cols": 8, "threads": 2},
        "sweep": sweep,
    })


def test_sparsity_sweep_covers_default_range():
    config = _sweep_config()
    points = run_sweep(config, "sparsity")
    values = SweepSpec().sparsity_values
    assert [p.value for p in points] == [s for s in values for _ in (False, True)]
    assert [p.reorder for p in points] == [False, True] * len(values)
    for p in points:
        assert p.sparsity == pytest.approx(p.value, abs=0.02)
        assert p.util_gain == pytest.approx(p.util_gain_model, abs=0.02)
        assert p.util_gain_model == pytest.approx(1 + p.sparsity)


def test_threads_sweep_follows_gain_model():
    points = run_sweep(_sweep_config(thread_values=[1, 2, 4]), "threads")
    assert [p.label for p in points] == ["T=1", "T=2", "T=4"]
    assert points[0].speedup == 1.0
    assert points[0].util_gain == pytest.approx(1.0)
    assert points[0].speedup < points[1].speedup < points[2].speedup
    for p in points:
        assert p.threads == int(p.value)
        assert p.util_gain == pytest.approx(p.util_gain_model, abs=0.02)
