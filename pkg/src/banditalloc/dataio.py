"""CSV/JSON serialization with atomic writes.

Exchange files (datasets, estimate matrices, ground-truth parameters) are
written losslessly (17 significant digits round-trips float64 exactly) so
pipelines split across CLI subcommands stay bitwise deterministic. Result
tables are written at 9 significant digits.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile

import numpy as np

from .simgen import BanditDataset, GroundTruth

_EXACT = "%.17g"
_RESULT = "%.9g"


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the same directory plus rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt_result(x) -> str:
    return _RESULT % float(x)


def save_dataset_csv(path, ds: BanditDataset) -> None:
    """One row per sample: feature columns, action, reward, propensity
    columns (when present), split tag."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = [f"x{j}" for j in range(ds.d)] + ["action", "reward"]
    if ds.propensities is not None:
        header += [f"p{k}" for k in range(1, ds.n_actions + 1)]
    header.append("split")
    writer.writerow(header)
    for i in range(ds.n):
        row = [_EXACT % v for v in ds.features[i]]
        row.append(str(int(ds.actions[i])))
        row.append(_EXACT % ds.rewards[i])
        if ds.propensities is not None:
            row += [_EXACT % v for v in ds.propensities[i]]
        row.append(str(ds.split_tag[i]))
        writer.writerow(row)
    atomic_write_text(path, buf.getvalue())


def load_dataset_csv(path) -> BanditDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    d = sum(1 for name in header if name.startswith("x"))
    prop_cols = [i for i, name in enumerate(header) if name.startswith("p") and name[1:].isdigit()]
    n_actions = len(prop_cols)
    act_col = header.index("action")
    rew_col = header.index("reward")
    split_col = header.index("split")
    features = np.array([[float(v) for v in row[:d]] for row in rows])
    actions = np.array([int(row[act_col]) for row in rows])
    rewards = np.array([float(row[rew_col]) for row in rows])
    props = np.array([[float(row[c]) for c in prop_cols] for row in rows]) if prop_cols else None
    split = np.array([row[split_col] for row in rows])
    if n_actions == 0:
        n_actions = int(actions.max())
    return BanditDataset(features, actions, rewards, props, split, n_actions)


def save_ground_truth_json(path, gt: GroundTruth) -> None:
    doc = {
        "a": gt.a.tolist(),
        "b": gt.b.tolist(),
        "c": gt.c.tolist(),
        "mu": gt.mu,
        "sigma": gt.sigma,
        "n_actions": gt.n_actions,
    }
    atomic_write_text(path, json.dumps(doc))


def load_ground_truth_json(path) -> GroundTruth:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return GroundTruth(
        a=np.array(doc["a"]), b=np.array(doc["b"]), c=np.array(doc["c"]),
        mu=doc["mu"], sigma=doc["sigma"], n_actions=doc["n_actions"],
    )


def save_matrix_csv(path, M) -> None:
    """Headerless numeric matrix, lossless."""
    M = np.asarray(M, dtype=np.float64)
    lines = [",".join(_EXACT % v for v in row) for row in np.atleast_2d(M)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_matrix_csv(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        rows = [[float(v) for v in line.split(",")] for line in fh.read().splitlines() if line]
    return np.array(rows)


def save_policy_solution_json(path, solution) -> None:
    doc = {
        "assignment": [int(a) for a in solution.assignment],
        "lambda_star": solution.lambda_star,
        "avg_cost": solution.avg_cost,
        "est_reward": solution.est_reward,
    }
    atomic_write_text(path, json.dumps(doc))


def save_table_csv(path, header, rows) -> None:
    """Result-precision CSV from an iterable of per-row value lists."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else (fmt_result(v) if isinstance(v, float) else str(v)) for v in row])
    atomic_write_text(path, buf.getvalue())
