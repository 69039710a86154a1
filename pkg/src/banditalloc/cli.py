"""Configuration-driven command line for reproducible experiments.

Subcommands (each reads its own TOML section): ``simulate`` writes a
dataset, ``train`` fits a reward model, ``policy`` solves an allocation
from an estimate-matrix CSV, ``crm`` runs the importance-sampling
baseline, ``bench`` runs a benchmark sweep, ``rates`` runs the
constant-vs-monotone least-squares experiment.

Every run writes its resolved configuration (including the seed) to
``run_config.json`` in the output directory; outputs are written
atomically; result files are byte-identical across reruns and across
``--jobs`` values (wall-clock timings go to a separate file).

Exit codes: 0 success, 1 runtime failure, 2 config parse error,
3 validation error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import allocate, benchmark, crm, dataio, isotonic, simgen
from . import reward_model as rm
from .kernels import KernelSpec


class ConfigError(Exception):
    """The config file cannot be read or parsed."""


class ValidationError(Exception):
    """The config parsed but a value or referenced path is invalid."""


def _load_section(path, command):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from exc
    if command not in doc:
        raise ValidationError(f"config is missing the [{command}] section")
    return doc[command]


class _Section:
    """Typed accessors over one TOML table, naming offending keys."""

    def __init__(self, command, table):
        self.command = command
        self.table = dict(table)

    def _key(self, name):
        return f"{self.command}.{name}"

    def get(self, name, default=None, required=False):
        if name not in self.table:
            if required:
                raise ValidationError(f"missing required key {self._key(name)}")
            return default
        return self.table[name]

    def input_path(self, out_dir, name, required=True):
        value = self.get(name, required=required)
        if value is None:
            return None
        path = value if os.path.isabs(value) else os.path.join(out_dir, value)
        if not os.path.exists(path):
            raise ValidationError(f"{self._key(name)}: input path does not exist: {path}")
        return path

    def output_path(self, out_dir, name, default=None, required=False):
        value = self.get(name, default=default, required=required)
        if value is None:
            return None
        return value if os.path.isabs(value) else os.path.join(out_dir, value)

    def seed(self, override):
        if override is not None:
            self.table["seed"] = override
        if "seed" not in self.table:
            raise ValidationError(f"missing required key {self._key('seed')} (seeds are always explicit)")
        return int(self.table["seed"])


def _write_run_config(out_dir, command, section):
    doc = {"command": command, "config": section.table}
    dataio.atomic_write_text(os.path.join(out_dir, "run_config.json"),
                             json.dumps(doc, sort_keys=True, default=str))


def _cmd_simulate(section, out_dir, seed_override):
    seed = section.seed(seed_override)
    kind = section.get("kind", "multi")
    dataset_path = section.output_path(out_dir, "dataset", default="dataset.csv")
    if kind in ("multi", "binary"):
        n_per_action = int(section.get("n_per_action", 500))
        noise = section.get("noise_model", "deterministic")
        gt = simgen.sample_ground_truth(seed)
        if kind == "multi":
            ds = simgen.simulate_dataset(gt, n_per_action, noise, seed)
        else:
            ds = simgen.simulate_binary_dataset(gt, n_per_action, noise, seed)
        dataio.save_dataset_csv(dataset_path, ds)
        gt_path = section.output_path(out_dir, "ground_truth", default="ground_truth.json")
        dataio.save_ground_truth_json(gt_path, gt)
        return f"simulate: wrote {ds.n} rows ({kind}) to {dataset_path}"
    if kind == "nested":
        cfg = simgen.NestedSimConfig(
            n_samples=int(section.get("n_samples", 4400)),
            feature_dim=int(section.get("feature_dim", 32)),
            seed=seed,
        )
        ds, y_star = simgen.simulate_nested_dataset(cfg)
        dataio.save_dataset_csv(dataset_path, ds)
        labels_path = section.output_path(out_dir, "labels", default="labels.csv")
        dataio.save_table_csv(labels_path, ["row", "y_star"],
                              [[i, int(v)] for i, v in enumerate(y_star)])
        return f"simulate: wrote {ds.n} rows (nested) to {dataset_path}"
    raise ValidationError(f"simulate.kind: unknown kind {kind!r}")


def _cmd_train(section, out_dir, seed_override):
    seed = section.seed(seed_override)
    ds = dataio.load_dataset_csv(section.input_path(out_dir, "dataset"))
    kernel = KernelSpec(section.get("kernel", "linear"), section.get("gamma"))
    cfg = rm.RewardModelConfig(
        hidden_widths=tuple(section.get("hidden_widths", (512, 512, 512))),
        repr_dim=int(section.get("repr_dim", 64)),
        learning_rate=float(section.get("learning_rate", 0.01)),
        epochs=int(section.get("epochs", 60)),
        batch_size=int(section.get("batch_size", 128)),
        kappa=float(section.get("kappa", 0.0)),
        kernel_z=kernel,
        structured=bool(section.get("structured", True)),
        feature_scale=float(section.get("feature_scale", 1.0)),
        seed=seed,
    )
    history = []
    model = rm.train(ds, cfg, history=history)
    model_path = section.output_path(out_dir, "model", default="model.json")
    rm.save_model(model_path, model)
    log_path = section.output_path(out_dir, "log")
    if log_path:
        dataio.save_table_csv(log_path, ["epoch", "train_mse", "penalty"],
                              [[e, float(m), float(h)] for e, m, h in history])
    final = history[-1][1] if history else float("nan")
    return f"train: model written to {model_path} (final train MSE {final:.6g})"


def _cmd_policy(section, out_dir, seed_override):
    F = dataio.load_matrix_csv(section.input_path(out_dir, "estimates"))
    costs = section.get("costs", required=True)
    budget = float(section.get("budget", required=True))
    solver = section.get("solver", "dp")
    sched = allocate.CostSchedule(tuple(costs), budget)
    if solver == "dp":
        for c in costs:
            if float(c) != int(c):
                raise ValidationError("policy.costs: the dp solver requires integral costs")
        assignment, total = allocate.dp_allocate(F, [int(c) for c in costs], int(round(budget * F.shape[0])))
        costs_arr = np.asarray(sched.costs)
        solution = allocate.PolicySolution(
            assignment=assignment, lambda_star=0.0,
            avg_cost=float(costs_arr[assignment - 1].mean()),
            est_reward=float(total / F.shape[0]))
    elif solver == "lagrangian":
        solution = allocate.lagrangian_search(F, sched)
    else:
        raise ValidationError(f"policy.solver: unknown solver {solver!r}")
    out_path = section.output_path(out_dir, "solution", default="solution.json")
    dataio.save_policy_solution_json(out_path, solution)
    return (f"policy: {solver} assignment over {F.shape[0]} rows, "
            f"avg cost {solution.avg_cost:.6g}, est reward {solution.est_reward:.6g}")


def _cmd_crm(section, out_dir, seed_override):
    ds = dataio.load_dataset_csv(section.input_path(out_dir, "dataset"))
    costs = tuple(section.get("costs", required=True))
    budget = float(section.get("budget", required=True))
    cfg = crm.CrmConfig(
        clip_epsilon=float(section.get("clip_epsilon", 0.01)),
        policy_lr=float(section.get("policy_lr", 0.05)),
        policy_iterations=int(section.get("policy_iterations", 300)),
    )
    solution, diagnostics = crm.run_crm_baseline(ds, allocate.CostSchedule(costs, budget), cfg=cfg)
    out_path = section.output_path(out_dir, "solution", default="crm_solution.json")
    dataio.save_policy_solution_json(out_path, solution)
    diag_path = section.output_path(out_dir, "diagnostics")
    if diag_path:
        dataio.save_table_csv(
            diag_path, ["lambda", "eta", "s_value", "snips", "avg_cost"],
            [[d.lam, d.eta, d.s_value, d.snips, d.avg_cost] for d in diagnostics])
    return f"crm: selected lambda {solution.lambda_star:.6g}, SNIPS {solution.est_reward:.6g}"


def _cmd_bench(section, out_dir, seed_override, jobs):
    seeds = section.get("seeds")
    if seed_override is not None:
        seeds = [seed_override]
    if not seeds:
        raise ValidationError("missing required key bench.seeds")
    kwargs = {}
    for name in ("experiment", "include_k0_ablation", "n_per_action", "noise_model", "n_test",
                 "epochs", "batch_size", "repr_dim", "learning_rate", "feature_scale",
                 "nested_feature_scale"):
        if section.get(name) is not None:
            kwargs[name] = section.get(name)
    for name in ("methods", "budgets", "kappa_grid", "hidden_widths", "costs",
                 "nested_hidden_widths"):
        if section.get(name) is not None:
            kwargs[name] = tuple(section.get(name))
    try:
        spec = benchmark.BenchmarkSpec(seeds=tuple(int(s) for s in seeds), **kwargs)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bench: {exc}") from exc
    results = benchmark.run_benchmark(spec, jobs=jobs)
    header = benchmark.results_header(spec.budgets)
    dataio.save_table_csv(section.output_path(out_dir, "results", default="results.csv"),
                          header, benchmark.results_rows(results, spec.budgets))
    summary = benchmark.summarize(results)
    dataio.atomic_write_text(section.output_path(out_dir, "summary", default="summary.json"),
                             json.dumps(summary, sort_keys=True, indent=1))
    dataio.save_table_csv(section.output_path(out_dir, "timings", default="timings.csv"),
                          ["method", "seed", "wall_time"],
                          [[r.method, r.seed, float(r.wall_time)] for r in results])
    n_err = sum(1 for r in results if r.error)
    if n_err:
        raise RuntimeError(f"bench: {n_err} of {len(results)} cells failed (see results.csv)")
    return f"bench: {len(results)} result rows over {len(seeds)} seeds written to {out_dir}"


def _cmd_rates(section, out_dir, seed_override):
    seed = section.seed(seed_override)
    cfg = isotonic.RateConfig(
        K_grid=tuple(section.get("K_grid", (2, 8, 32, 128))),
        n=int(section.get("n", 50)),
        sigma=float(section.get("sigma", 1.0)),
        trials=int(section.get("trials", 200)),
        seed=seed,
    )
    table = isotonic.rate_experiment(cfg)
    path = section.output_path(out_dir, "table", default="rates.csv")
    dataio.save_table_csv(
        path,
        ["K", "mean_error_constant", "std_error_constant", "mean_error_monotone", "std_error_monotone"],
        [[row["K"], row["mean_error_constant"], row["std_error_constant"],
          row["mean_error_monotone"], row["std_error_monotone"]] for row in table.rows()])
    return f"rates: {len(table.K)} rows written to {path}"


_COMMANDS = ("simulate", "train", "policy", "crm", "bench", "rates")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="banditalloc",
                                     description="Budget-constrained incentive-allocation experiments.")
    parser.add_argument("command", choices=_COMMANDS)
    parser.add_argument("--config", required=True, help="TOML config file")
    parser.add_argument("--seed", type=int, default=None, help="override the section seed")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers (bench)")
    args = parser.parse_args(argv)

    try:
        section = _Section(args.command, _load_section(args.config, args.command))
        os.makedirs(args.out, exist_ok=True)
        if args.command == "bench":
            message = _cmd_bench(section, args.out, args.seed, max(1, args.jobs))
        else:
            handler = {
                "simulate": _cmd_simulate,
                "train": _cmd_train,
                "policy": _cmd_policy,
                "crm": _cmd_crm,
                "rates": _cmd_rates,
            }[args.command]
            message = handler(section, args.out, args.seed)
        _write_run_config(args.out, args.command, section)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(message)
    return 0


if __name__ == "__main__":
    sys.exit(main())
