import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sysmt_sim.models import ExperimentConfig, ScoreWeights, SimConfig
from sysmt_sim.services.experiment_service import build_workload, simulate_layer
from sysmt_sim.services.lowering import gen_synthetic
from sysmt_sim.services.reorder import (
    ColumnStats,
    Permutation,
    apply_permutation,
    block_lengths,
    compute_permutation,
    expected_collisions,
    gather_stats,
)
from sysmt_sim.services.systolic import reference_matmul


def _stats(p_zero, p_fits4):
    p_zero = np.asarray(p_zero, dtype=float)
    p_fits4 = np.asarray(p_fits4, dtype=float)
    return ColumnStats(p_zero, p_fits4, 1.0 - p_zero - p_fits4, sample_count=100)


def test_gather_stats_frequencies():
    stats = gather_stats([np.array([[0, 5, 200], [0, 16, 15]]), np.array([[3, 0, 255]])])
    assert stats.sample_count == 3
    assert stats.p_zero.tolist() == pytest.approx([2 / 3, 1 / 3, 0])
    assert stats.p_fits4.tolist() == pytest.approx([1 / 3, 1 / 3, 1 / 3])
    assert stats.p_wide.tolist() == pytest.approx([0, 1 / 3, 2 / 3])


def test_gather_stats_rejects_empty():
    with pytest.raises(ValueError):
        gather_stats([])


def test_gather_stats_close_to_generator_parameters():
    X, _ = gen_synthetic(K=32, M=4096, N=1, p_zero=0.5, p_fits4=0.2, correlation=0.0, seed=3)
    stats = gather_stats([X])
    sigma = np.sqrt(0.25 / 4096)
    assert np.all(np.abs(stats.p_zero - 0.5) < 3 * sigma + 0.01)


def test_uniform_stats_give_identity():
    stats = _stats([0.5] * 8, [0.2] * 8)
    assert compute_permutation(stats, 2).is_identity
    assert compute_permutation(stats, 4).is_identity


def test_wide_columns_paired_with_zero_columns():
    stats = _stats([0, 0, 1, 1], [0, 0, 0, 0])
    perm = compute_permutation(stats, 2)
    assert perm.indices == (0, 1, 3, 2)
    assert expected_collisions(stats, perm, 2) == 0.0
    assert expected_collisions(stats, Permutation.identity(4), 2) == 0.0


def test_snake_striping_pairs_extremes():
    stats = _stats([0.0, 0.9, 0.1, 0.8, 0.2, 0.7], [0.0] * 6)
    perm = compute_permutation(stats, 2)
    steps = 3
    pairs = {tuple(sorted((perm.indices[j], perm.indices[steps + j]))) for j in range(steps)}
    assert pairs == {(0, 1), (2, 3), (4, 5)}


def test_block_lengths():
    assert block_lengths(6, 4) == [2, 2, 2, 0]
    assert block_lengths(8, 2) == [4, 4]


@pytest.mark.parametrize("K", [4, 6, 8])
def test_minimizes_expected_collisions_exhaustively(rng, K):
    stats = _stats(rng.random(K) * 0.9, np.zeros(K))
    weights = ScoreWeights(wide=1.0, fits4=1.0, zero=0.0)
    ours = expected_collisions(stats, compute_permutation(stats, 2, weights), 2)
    best = min(
        expected_collisions(stats, Permutation(p), 2)
        for p in itertools.permutations(range(K))
    )
    assert ours == pytest.approx(best, abs=1e-12)


def test_correlated_layer_has_fewer_expected_collisions():
    X, _ = gen_synthetic(K=64, M=256, N=1, p_zero=0.5, p_fits4=0.2, correlation=0.9, seed=11)
    stats = gather_stats([X])
    perm = compute_permutation(stats, 2)
    assert expected_collisions(stats, perm, 2) < expected_collisions(stats, Permutation.identity(64), 2)


@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 24))
def test_permutation_preserves_product(seed, K):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 256, size=(5, K))
    W = rng.integers(-127, 128, size=(K, 3))
    perm = Permutation(tuple(rng.permutation(K)))
    Xp, Wp = apply_permutation(X, W, perm)
    assert np.array_equal(reference_matmul(Xp, Wp), reference_matmul(X, W))


def test_reversal_keeps_qtile_metadata():
    X, W = gen_synthetic(K=8, M=3, N=2, p_zero=0.3, p_fits4=0.3, correlation=0.5, seed=1)
    perm = Permutation(tuple(range(7, -1, -1)))
    Xp, Wp = apply_permutation(X, W, perm)
    assert np.array_equal(Xp.data, X.data[:, ::-1])
    assert np.array_equal(Wp.scales, W.scales)
    assert Wp.kind is W.kind


def test_identity_permutation_changes_nothing(rng):
    X = rng.integers(0, 256, size=(4, 6))
    W = rng.integers(-127, 128, size=(6, 2))
    Xp, Wp = apply_permutation(X, W, Permutation.identity(6))
    assert np.array_equal(Xp, X) and np.array_equal(Wp, W)


def test_apply_permutation_length_mismatch():
    with pytest.raises(ValueError):
        apply_permutation(np.zeros((2, 3)), np.zeros((3, 1)), Permutation.identity(4))


def test_permutation_validation_and_json():
    perm = Permutation((2, 0, 1))
    assert Permutation.from_json(perm.to_json()) == perm
    assert perm.inverse().indices == (1, 2, 0)
    with pytest.raises(ValueError):
        Permutation((0, 0, 1))
    with pytest.raises(ValueError):
        Permutation.from_json(b'{"a": 1}')


def test_reordering_lowers_error_and_raises_utilization():
    config = ExperimentConfig.model_validate({
        "seed": 2024,
        "workload": {"generator": {"layers": 100, "M": 16, "K": 64, "N": 16, "p_zero": 0.5,
                                   "p_fits4": 0.2, "correlation": 0.85, "calibration_rows": 64}},
    })
    sim = SimConfig(threads=2, strategy="S+A")
    plain_mse, reordered_mse, gains, models = [], [], [], []
    for layer in build_workload(config):
        plain = simulate_layer(layer, sim, 2, reorder=False)
        reordered = simulate_layer(layer, sim, 2, reorder=True, baseline=plain.baseline)
        plain_mse.append(plain.report.mse)
        reordered_mse.append(reordered.report.mse)
        gains.append(reordered.report.util_gain)
        models.append(reordered.report.util_gain_model)

    diff = np.array(plain_mse) - np.array(reordered_mse)
    t_stat = diff.mean() / (diff.std(ddof=1) / np.sqrt(diff.size))
    assert diff.mean() > 0
    assert t_stat > 1.645
    assert np.mean(gains) >= np.mean(models)
