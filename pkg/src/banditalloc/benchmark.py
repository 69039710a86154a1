"""Metrics and the seeded benchmark runner.

Three experiments share one runner:

* ``simulated``: the five-action environment; reward-model methods are
  scored by counterfactual RMSE over a fresh test draw (all rows x all
  actions) and by the true expected reward of their budget-constrained
  assignment, solved exactly by dynamic programming.
* ``binary``: the two-action restriction with Bernoulli-logged responses;
  scored by the treatment-effect error (PEHE).
* ``nested``: the nested-classification environment (actions are remapped
  to cost-ascending order for modeling and solving).

Methods: ``structured`` / ``unstructured`` response models (with optional
companion ``*_k0`` rows reusing the penalty sweep's kappa=0 model) and the
``crm`` importance-sampling baseline. Every cell is a pure function of
``(spec, method, seed)``; cells run in parallel without affecting results.
"""

from __future__ import annotations

import multiprocessing
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import allocate, crm, rng, simgen
from . import reward_model as rm

STRUCTURED = "structured"
UNSTRUCTURED = "unstructured"
CRM_BASELINE = "crm"
_SIRE_METHODS = (STRUCTURED, UNSTRUCTURED)


def table1_spec(seeds=tuple(range(20))) -> "BenchmarkSpec":
    """The frozen five-action benchmark configuration (reward at m=3)."""
    return BenchmarkSpec(experiment="simulated", methods=(STRUCTURED, UNSTRUCTURED, CRM_BASELINE),
                         seeds=tuple(seeds), budgets=(3.0,), include_k0_ablation=True)


def binary_spec(seeds=tuple(range(20))) -> "BenchmarkSpec":
    """The frozen binary treatment-effect benchmark (Bernoulli responses)."""
    return BenchmarkSpec(experiment="binary", methods=(UNSTRUCTURED,), seeds=tuple(seeds),
                         noise_model="bernoulli", include_k0_ablation=True)


def nested_spec(seeds=tuple(range(20))) -> "BenchmarkSpec":
    """The frozen nested-classification benchmark (budgets 1 and 2)."""
    return BenchmarkSpec(experiment="nested", methods=(STRUCTURED, UNSTRUCTURED), seeds=tuple(seeds),
                         budgets=(1.0, 2.0), include_k0_ablation=True, epochs=60)


def pehe(est_ite, true_ite) -> float:
    """Root mean squared error between estimated and true treatment effects."""
    est_ite = np.asarray(est_ite, dtype=np.float64)
    true_ite = np.asarray(true_ite, dtype=np.float64)
    if est_ite.shape != true_ite.shape:
        raise ValueError(f"length mismatch: {est_ite.shape} vs {true_ite.shape}")
    return float(np.sqrt(((est_ite - true_ite) ** 2).mean()))


def rmse_reward(model, gt: simgen.GroundTruth, test_X) -> float:
    """RMSE of model predictions against the oracle response, over every
    test row and every action (factual and counterfactual).

    ``model`` is a RewardModel or any callable mapping an (n, d) feature
    matrix to an (n, K) prediction matrix.
    """
    test_X = np.asarray(test_X, dtype=np.float64)
    if test_X.shape[0] == 0:
        raise ValueError("test set must be nonempty")
    pred = model(test_X) if callable(model) else rm.predict_all(model, test_X)
    return float(np.sqrt(((pred - simgen.true_reward_matrix(gt, test_X)) ** 2).mean()))


def expected_true_reward(assignment, gt: simgen.GroundTruth, test_X) -> float:
    """Mean oracle response of each test row under its assigned action."""
    assignment = np.asarray(assignment, dtype=np.int64)
    test_X = np.asarray(test_X, dtype=np.float64)
    if assignment.shape[0] != test_X.shape[0]:
        raise ValueError("assignment length must equal the test-set size")
    F = simgen.true_reward_matrix(gt, test_X)
    return float(F[np.arange(test_X.shape[0]), assignment - 1].mean())


@dataclass(frozen=True)
class BenchmarkSpec:
    """Configuration of one benchmark sweep (methods x seeds x budgets)."""

    experiment: str = "simulated"  # simulated | binary | nested
    methods: tuple = (STRUCTURED,)
    seeds: tuple = (0,)
    budgets: tuple = ()
    include_k0_ablation: bool = False
    n_per_action: int = 500
    noise_model: str = "deterministic"
    n_test: int = 1000
    kappa_grid: tuple = (0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0)
    epochs: int = 30
    batch_size: int = 64
    hidden_widths: tuple = (512, 512, 512)
    repr_dim: int = 64
    learning_rate: float = 0.01
    feature_scale: float = 2.0
    costs: tuple = simgen.BENCHMARK_COSTS
    crm: crm.CrmConfig = field(default_factory=crm.CrmConfig)
    nested: simgen.NestedSimConfig = field(default_factory=simgen.NestedSimConfig)
    nested_hidden_widths: tuple = (128, 128, 128)
    nested_feature_scale: float = 1.0

    def __post_init__(self):
        if self.experiment not in ("simulated", "binary", "nested"):
            raise ValueError(f"unknown experiment {self.experiment!r}")
        bad = set(self.methods) - {STRUCTURED, UNSTRUCTURED, CRM_BASELINE}
        if bad:
            raise ValueError(f"unknown methods: {sorted(bad)}")
        if self.experiment == "binary" and CRM_BASELINE in self.methods:
            raise ValueError("the binary experiment scores reward models only")
        if self.experiment == "nested" and CRM_BASELINE in self.methods:
            raise ValueError("the nested experiment scores reward models only")


@dataclass
class BenchmarkResult:
    """One scored (method, seed) cell; ``error`` marks a failed cell."""

    method: str
    seed: int
    kappa: float | None = None
    pehe: float | None = None
    rmse: float | None = None
    rewards: dict = field(default_factory=dict)  # budget -> true expected reward
    avg_costs: dict = field(default_factory=dict)  # budget -> realized average cost
    wall_time: float = 0.0
    error: str | None = None


def _model_config(spec: BenchmarkSpec, structured: bool, seed: int) -> rm.RewardModelConfig:
    nested = spec.experiment == "nested"
    return rm.RewardModelConfig(
        hidden_widths=spec.nested_hidden_widths if nested else spec.hidden_widths,
        repr_dim=spec.repr_dim,
        learning_rate=spec.learning_rate,
        epochs=spec.epochs,
        batch_size=spec.batch_size,
        structured=structured,
        feature_scale=spec.nested_feature_scale if nested else spec.feature_scale,
        seed=seed,
    )


def _dp_rows(pred, costs, budget):
    n = pred.shape[0]
    assignment, _ = allocate.dp_allocate(pred, [int(c) for c in costs], int(round(budget * n)))
    return assignment


def _score_allocations(result, pred, true_F, costs, budgets):
    costs_arr = np.asarray(costs, dtype=np.float64)
    n = pred.shape[0]
    for budget in budgets:
        assignment = _dp_rows(pred, costs, budget)
        result.rewards[budget] = float(true_F[np.arange(n), assignment - 1].mean())
        result.avg_costs[budget] = float(costs_arr[assignment - 1].mean())


def _sire_rows(spec, method, seed, dataset, score):
    """Run the kappa sweep once; emit the selected row (+ kappa=0 companion)."""
    cfg = _model_config(spec, structured=(method == STRUCTURED), seed=seed)
    selection = rm.select_kappa(dataset, cfg, spec.kappa_grid)
    rows = [score(method, selection.models[selection.best_kappa], selection.best_kappa)]
    if spec.include_k0_ablation:
        if 0.0 not in selection.models:
            raise ValueError("kappa grid must contain 0 for the ablation rows")
        rows.append(score(method + "_k0", selection.models[0.0], 0.0))
    return rows


def _simulated_cell(spec: BenchmarkSpec, method: str, seed: int):
    gt = simgen.sample_ground_truth(seed)
    dataset = simgen.simulate_dataset(gt, spec.n_per_action, spec.noise_model, seed)
    test_X = rng.substream(seed, rng.TEST_DRAW).uniform(
        0.0, simgen.FEATURE_HIGH, size=(spec.n_test, simgen.N_FEATURES))
    true_F = simgen.true_reward_matrix(gt, test_X)

    if method == CRM_BASELINE:
        result = BenchmarkResult(method=method, seed=seed)
        for budget in spec.budgets:
            solution, _ = crm.run_crm_baseline(
                dataset, allocate.CostSchedule(spec.costs, budget), cfg=spec.crm, eval_X=test_X)
            result.rewards[budget] = expected_true_reward(solution.assignment, gt, test_X)
            result.avg_costs[budget] = solution.avg_cost
        return [result]

    def score(name, model, kappa):
        result = BenchmarkResult(method=name, seed=seed, kappa=kappa)
        result.rmse = rmse_reward(model, gt, test_X)
        _score_allocations(result, rm.predict_all(model, test_X), true_F, spec.costs, spec.budgets)
        return result

    return _sire_rows(spec, method, seed, dataset, score)


def _binary_cell(spec: BenchmarkSpec, method: str, seed: int):
    gt = simgen.sample_ground_truth(seed)
    dataset = simgen.simulate_binary_dataset(gt, spec.n_per_action, spec.noise_model, seed)
    test_X = rng.substream(seed, rng.TEST_DRAW).uniform(
        0.0, simgen.FEATURE_HIGH, size=(spec.n_test, simgen.N_FEATURES))
    true_F = simgen.true_reward_matrix(gt, test_X)[:, :2]
    true_ite = true_F[:, 1] - true_F[:, 0]

    def score(name, model, kappa):
        pred = rm.predict_all(model, test_X)
        return BenchmarkResult(
            method=name, seed=seed, kappa=kappa,
            pehe=pehe(pred[:, 1] - pred[:, 0], true_ite),
            rmse=float(np.sqrt(((pred - true_F) ** 2).mean())),
        )

    return _sire_rows(spec, method, seed, dataset, score)


def _nested_cell(spec: BenchmarkSpec, method: str, seed: int):
    ncfg = replace(spec.nested, seed=seed)
    dataset, y_star = simgen.simulate_nested_dataset(ncfg)
    K = ncfg.n_classes
    # Remap actions to cost-ascending order (the modeling/solving contract):
    # label K is the most specific (cheapest), label 1 the most general.
    flipped = simgen.BanditDataset(
        dataset.features, K + 1 - dataset.actions, dataset.rewards,
        dataset.propensities[:, ::-1], dataset.split_tag, K)
    costs = tuple(sorted(ncfg.costs))
    test_mask = flipped.split_tag == simgen.SPLIT_TEST
    test_X = flipped.features[test_mask]
    # In the flipped order, action a earns 1 iff a >= K + 1 - y_star.
    true_F = (np.arange(1, K + 1)[None, :] >= (K + 1 - y_star[test_mask])[:, None])
    true_F = (true_F & (y_star[test_mask] > 0)[:, None]).astype(np.float64)

    def score(name, model, kappa):
        result = BenchmarkResult(method=name, seed=seed, kappa=kappa)
        pred = rm.predict_all(model, test_X)
        result.rmse = float(np.sqrt(((pred - true_F) ** 2).mean()))
        _score_allocations(result, pred, true_F, costs, spec.budgets)
        return result

    return _sire_rows(spec, method, seed, flipped, score)


_CELLS = {"simulated": _simulated_cell, "binary": _binary_cell, "nested": _nested_cell}


def _run_cell(args):
    spec, method, seed = args
    start = time.perf_counter()
    try:
        rows = _CELLS[spec.experiment](spec, method, seed)
    except Exception as exc:  # contained: the sweep continues
        return [BenchmarkResult(method=method, seed=seed, error=f"{type(exc).__name__}: {exc}")]
    elapsed = time.perf_counter() - start
    for row in rows:
        row.wall_time = elapsed
    return rows


def run_benchmark(spec: BenchmarkSpec, jobs: int = 1):
    """Score every (method, seed) cell; failures become error rows.

    Output order is canonical (sorted by method name, then seed) and
    independent of ``jobs``.
    """
    cells = [(spec, method, seed) for method in spec.methods for seed in spec.seeds]
    if jobs > 1 and len(cells) > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(min(jobs, len(cells))) as pool:
            nested_rows = pool.map(_run_cell, cells)
    else:
        nested_rows = [_run_cell(cell) for cell in cells]
    rows = [row for cell_rows in nested_rows for row in cell_rows]
    rows.sort(key=lambda r: (r.method, r.seed))
    return rows


def summarize(results) -> dict:
    """Per-method mean/std of every populated metric, plus error counts."""
    by_method = {}
    for row in results:
        by_method.setdefault(row.method, []).append(row)
    summary = {}
    for method in sorted(by_method):
        rows = by_method[method]
        good = [r for r in rows if r.error is None]
        entry = {"n_seeds": len(good), "n_errors": len(rows) - len(good)}
        for metric in ("pehe", "rmse"):
            vals = [getattr(r, metric) for r in good if getattr(r, metric) is not None]
            if vals:
                entry[metric] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
        budgets = sorted({b for r in good for b in r.rewards})
        for budget in budgets:
            vals = [r.rewards[budget] for r in good if budget in r.rewards]
            entry[f"reward_m{budget:g}"] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
        summary[method] = entry
    return summary


def results_header(budgets):
    header = ["method", "seed", "kappa", "pehe", "rmse"]
    for budget in budgets:
        header += [f"reward_m{budget:g}", f"avg_cost_m{budget:g}"]
    return header + ["error"]


def results_rows(results, budgets):
    """Rows matching ``results_header`` (floats formatted by the writer)."""
    for r in results:
        row = [r.method, r.seed,
               None if r.kappa is None else float(r.kappa),
               None if r.pehe is None else float(r.pehe),
               None if r.rmse is None else float(r.rmse)]
        for budget in budgets:
            row.append(r.rewards.get(budget))
            row.append(r.avg_costs.get(budget))
        row.append(r.error if r.error else None)
        yield row
