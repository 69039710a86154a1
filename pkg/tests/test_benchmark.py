import numpy as np
import pytest

from banditalloc import benchmark as bm
from banditalloc import reward_model as rm
from banditalloc import rng, simgen


@pytest.fixture(scope="module")
def ground_truth():
    return simgen.sample_ground_truth(3)


def tiny_spec(**kwargs):
    defaults = dict(
        experiment="simulated", methods=(bm.STRUCTURED,), seeds=(0, 1), budgets=(3.0,),
        n_per_action=40, n_test=80, kappa_grid=(0.0,), epochs=2,
        hidden_widths=(12, 8), repr_dim=5, batch_size=32,
    )
    defaults.update(kwargs)
    return bm.BenchmarkSpec(**defaults)


def test_pehe_examples(gen):
    true = gen.random(100)
    assert bm.pehe(true, true) == 0.0
    assert abs(bm.pehe(true + 0.1, true) - 0.1) < 1e-12
    est = gen.random(100)
    loop = np.sqrt(sum((e - t) ** 2 for e, t in zip(est, true)) / 100)
    assert abs(bm.pehe(est, true) - loop) < 1e-12
    with pytest.raises(ValueError):
        bm.pehe(np.ones(3), np.ones(4))


def test_pehe_permutation_invariant(gen):
    est, true = gen.random(50), gen.random(50)
    perm = gen.permutation(50)
    assert abs(bm.pehe(est, true) - bm.pehe(est[perm], true[perm])) < 1e-15


def test_rmse_reward_oracle_model_is_zero(ground_truth, gen):
    test_X = gen.uniform(0, 10, size=(50, 50))
    oracle = lambda X: simgen.true_reward_matrix(ground_truth, X)
    assert bm.rmse_reward(oracle, ground_truth, test_X) == 0.0
    offset = lambda X: simgen.true_reward_matrix(ground_truth, X) + 0.05
    assert abs(bm.rmse_reward(offset, ground_truth, test_X) - 0.05) < 1e-12


def test_rmse_reward_accepts_trained_models(ground_truth, gen):
    cfg = rm.RewardModelConfig(hidden_widths=(8,), repr_dim=4, epochs=0, seed=0)
    model = rm.init_model(cfg, 50, 5)
    test_X = gen.uniform(0, 10, size=(30, 50))
    val = bm.rmse_reward(model, ground_truth, test_X)
    assert np.isfinite(val) and val > 0


def test_expected_true_reward_extremes(ground_truth, gen):
    test_X = gen.uniform(0, 10, size=(200, 50))
    F = simgen.true_reward_matrix(ground_truth, test_X)
    top = bm.expected_true_reward(np.full(200, 5), ground_truth, test_X)
    bottom = bm.expected_true_reward(np.full(200, 1), ground_truth, test_X)
    assert abs(top - F[:, 4].mean()) < 1e-12
    assert abs(bottom - F[:, 0].mean()) < 1e-12
    assert bottom < top
    with pytest.raises(ValueError):
        bm.expected_true_reward(np.ones(3, dtype=int), ground_truth, test_X)


def test_run_benchmark_shape_and_distinct_datasets():
    rows = bm.run_benchmark(tiny_spec())
    assert len(rows) == 2
    assert [(r.method, r.seed) for r in rows] == [("structured", 0), ("structured", 1)]
    assert rows[0].rmse != rows[1].rmse  # different seeds, different worlds
    for r in rows:
        assert r.error is None
        assert 3.0 in r.rewards and r.avg_costs[3.0] <= 3.0 + 1e-9


def test_run_benchmark_cell_reproducible():
    r1 = bm.run_benchmark(tiny_spec(seeds=(4,)))
    r2 = bm.run_benchmark(tiny_spec(seeds=(4,)))
    assert r1[0].rmse == r2[0].rmse
    assert r1[0].rewards == r2[0].rewards


def test_run_benchmark_parallel_matches_serial():
    spec = tiny_spec(seeds=(0, 1, 2))
    serial = bm.run_benchmark(spec, jobs=1)
    parallel = bm.run_benchmark(spec, jobs=3)
    assert [(r.method, r.seed, r.rmse, r.rewards) for r in serial] == \
           [(r.method, r.seed, r.rmse, r.rewards) for r in parallel]


def test_run_benchmark_contains_cell_failures():
    # budget below the cheapest action makes the allocation infeasible;
    # the sweep must mark the cell and continue.
    spec = tiny_spec(budgets=(0.5,), seeds=(0, 1))
    rows = bm.run_benchmark(spec)
    assert len(rows) == 2
    assert all(r.error is not None and "InfeasibleBudget" in r.error for r in rows)


def test_k0_ablation_rows(gen):
    spec = tiny_spec(kappa_grid=(0.0, 0.05), include_k0_ablation=True, seeds=(0,))
    rows = bm.run_benchmark(spec)
    assert [r.method for r in rows] == ["structured", "structured_k0"]
    assert rows[1].kappa == 0.0


def test_binary_experiment_rows():
    spec = tiny_spec(experiment="binary", methods=(bm.UNSTRUCTURED,), budgets=(), seeds=(0,),
                     noise_model="bernoulli")
    rows = bm.run_benchmark(spec)
    assert rows[0].pehe is not None and np.isfinite(rows[0].pehe)
    assert rows[0].rewards == {}


def test_nested_experiment_rows():
    spec = tiny_spec(experiment="nested", methods=(bm.STRUCTURED,), budgets=(1.0,), seeds=(0,),
                     nested=simgen.NestedSimConfig(n_samples=440), nested_hidden_widths=(8,))
    rows = bm.run_benchmark(spec)
    assert rows[0].rmse is not None
    assert 1.0 in rows[0].rewards
    assert rows[0].avg_costs[1.0] <= 1.0 + 1e-9


def test_spec_validation():
    with pytest.raises(ValueError):
        bm.BenchmarkSpec(experiment="imagenet")
    with pytest.raises(ValueError):
        bm.BenchmarkSpec(methods=("qlearning",))
    with pytest.raises(ValueError):
        bm.BenchmarkSpec(experiment="binary", methods=(bm.CRM_BASELINE,))


def test_summarize_means():
    rows = [
        bm.BenchmarkResult(method="m", seed=0, rmse=0.2, rewards={3.0: 0.5}),
        bm.BenchmarkResult(method="m", seed=1, rmse=0.4, rewards={3.0: 0.7}),
        bm.BenchmarkResult(method="m", seed=2, error="boom"),
    ]
    summary = bm.summarize(rows)
    assert summary["m"]["n_seeds"] == 2
    assert summary["m"]["n_errors"] == 1
    assert abs(summary["m"]["rmse"]["mean"] - 0.3) < 1e-15
    assert abs(summary["m"]["reward_m3"]["mean"] - 0.6) < 1e-15
