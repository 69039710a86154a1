"""Incentive-response estimation with a debiasing dependence penalty.

A multilayer ReLU representation network maps features to an embedding z;
per-action response heads sit on top of z. In structured mode the head is a
base score plus cumulative softplus increments, so predictions are
nondecreasing in the action index by construction. The training loss is the
mean squared error at the logged (x, y) pairs plus ``kappa`` times the
kernel dependence statistic between the embedding batch and the one-hot
encoded actions; penalizing that dependence discourages the representation
from encoding which action the logging policy favored.

All gradients are computed analytically (reverse-mode, including the
penalty path through z) and are checked against finite differences in the
test suite. Training is plain minibatch SGD and is bitwise reproducible
given ``(dataset, config, seed)``.
"""

from __future__ import annotations

import base64
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels, rng
from .numutil import sigmoid, softplus, softplus_inverse
from .simgen import BanditDataset

logger = logging.getLogger(__name__)

# Fallback head levels when no data is supplied to init_model: base output
# mid reward range, increments small and positive.
_INIT_BASE_LEVEL = 0.5
_INIT_INCREMENT = 0.1
_MIN_INIT_INCREMENT = 0.02


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class RewardModelConfig:
    """Architecture and optimization settings for response estimation."""

    hidden_widths: tuple = (512, 512, 512)
    repr_dim: int = 64
    learning_rate: float = 0.01
    epochs: int = 60
    batch_size: int = 128
    kappa: float = 0.0
    kernel_z: kernels.KernelSpec = field(default_factory=kernels.KernelSpec)
    structured: bool = True
    feature_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")


@dataclass
class RewardModel:
    """Representation network plus per-action heads.

    ``head_w``/``head_b`` hold K rows: in structured mode row 0 is the base
    head and row j (j >= 1) the raw increment head for action j+1; in
    unstructured mode row y-1 is the independent head of action y.
    """

    lam_w: list
    lam_b: list
    head_w: np.ndarray
    head_b: np.ndarray
    n_actions: int
    structured: bool
    feature_scale: float = 1.0

    def param_items(self):
        """(name, array) pairs in a fixed order; arrays are live references."""
        for i, (w, b) in enumerate(zip(self.lam_w, self.lam_b)):
            yield f"lam_w{i}", w
            yield f"lam_b{i}", b
        yield "head_w", self.head_w
        yield "head_b", self.head_b

    def copy(self) -> "RewardModel":
        return RewardModel(
            [w.copy() for w in self.lam_w], [b.copy() for b in self.lam_b],
            self.head_w.copy(), self.head_b.copy(),
            self.n_actions, self.structured, self.feature_scale,
        )


def init_model(cfg: RewardModelConfig, input_dim: int, n_actions: int,
               action_levels=None) -> RewardModel:
    """Fan-in-scaled uniform weight initialization with documented head levels.

    ``action_levels`` (length K, e.g. per-action mean logged rewards) seeds
    each head at the factual baseline predictor: unstructured heads start at
    their action's level, the structured base at level 1 with increments at
    the mean level spacing. Without levels, heads start mid reward range
    with small increments.
    """
    gen = rng.substream(cfg.seed, rng.MODEL, 0)
    dims = [input_dim, *cfg.hidden_widths, cfg.repr_dim]
    lam_w, lam_b = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        lam_w.append(gen.uniform(-bound, bound, size=(fan_in, fan_out)))
        lam_b.append(np.zeros(fan_out))
    bound = 1.0 / np.sqrt(cfg.repr_dim)
    # All heads share one weight draw so cross-action prediction differences
    # start at zero (bias-only) and are learned from data rather than
    # injected by initialization noise.
    head_w = np.tile(gen.uniform(-bound, bound, size=cfg.repr_dim), (n_actions, 1))
    if action_levels is None:
        head_b = np.full(n_actions, _INIT_BASE_LEVEL)
        increment = _INIT_INCREMENT
    else:
        levels = np.asarray(action_levels, dtype=np.float64)
        if levels.shape != (n_actions,):
            raise ValueError("need one level per action")
        head_b = levels.copy()
        spread = (levels.max() - levels.min()) / max(n_actions - 1, 1)
        increment = max(spread, _MIN_INIT_INCREMENT)
    if cfg.structured:
        head_b = np.full(n_actions, head_b[0])
        head_b[1:] = softplus_inverse(increment)
    return RewardModel(lam_w, lam_b, head_w, head_b, n_actions, cfg.structured, cfg.feature_scale)


def _forward_repr(model: RewardModel, X):
    A = np.asarray(X, dtype=np.float64) * model.feature_scale
    acts = [A]
    pres = []
    for w, b in zip(model.lam_w[:-1], model.lam_b[:-1]):
        pre = acts[-1] @ w + b
        pres.append(pre)
        acts.append(np.maximum(pre, 0.0))
    z = acts[-1] @ model.lam_w[-1] + model.lam_b[-1]
    return z, pres, acts


def _head_scores(model: RewardModel, z):
    """(n, K) predictions for every action from embeddings z."""
    if model.structured:
        base = z @ model.head_w[0] + model.head_b[0]
        raws = z @ model.head_w[1:].T + model.head_b[1:]
        inc = softplus(raws)
        out = np.empty((z.shape[0], model.n_actions))
        out[:, 0] = base
        out[:, 1:] = base[:, None] + np.cumsum(inc, axis=1)
        return out
    return z @ model.head_w.T + model.head_b


def predict_all(model: RewardModel, X) -> np.ndarray:
    """(n, K) matrix of predicted responses for all rows and actions."""
    z, _, _ = _forward_repr(model, X)
    return _head_scores(model, z)


def predict_reward(model: RewardModel, x, y: int) -> float:
    """Predicted response of a single feature vector to action ``y``."""
    if not 1 <= y <= model.n_actions:
        raise ValueError(f"action must lie in 1..{model.n_actions}, got {y}")
    x = np.asarray(x, dtype=np.float64)
    return float(predict_all(model, x[None, :])[0, y - 1])


def predict_logged(model: RewardModel, X, actions) -> np.ndarray:
    """Predicted responses at each row's own logged action."""
    scores = predict_all(model, X)
    return scores[np.arange(scores.shape[0]), np.asarray(actions) - 1]


def _loss_parts(model: RewardModel, batch, cfg: RewardModelConfig):
    """(mse, penalty_value, gradients). The penalty is skipped below
    kernels.MIN_PENALTY_BATCH rows (V-statistic degeneracy)."""
    X, y, r = batch
    y = np.asarray(y, dtype=np.int64)
    r = np.asarray(r, dtype=np.float64)
    m = y.shape[0]
    if m == 0:
        raise ValueError("batch must be nonempty")
    z, pres, acts = _forward_repr(model, X)
    K = model.n_actions
    grads = {}

    if model.structured:
        base = z @ model.head_w[0] + model.head_b[0]
        raws = z @ model.head_w[1:].T + model.head_b[1:]
        inc = softplus(raws)
        mask = (np.arange(2, K + 1)[None, :] <= y[:, None]).astype(np.float64)
        pred = base + (inc * mask).sum(axis=1)
    else:
        onehot = kernels.one_hot_encode(y, K)
        scores = z @ model.head_w.T + model.head_b
        pred = (scores * onehot).sum(axis=1)

    resid = pred - r
    mse = float(resid @ resid) / m
    dpred = 2.0 * resid / m

    if model.structured:
        draws = dpred[:, None] * mask * sigmoid(raws)
        gw = np.empty_like(model.head_w)
        gb = np.empty_like(model.head_b)
        gw[0] = z.T @ dpred
        gb[0] = dpred.sum()
        gw[1:] = draws.T @ z
        gb[1:] = draws.sum(axis=0)
        dz = np.outer(dpred, model.head_w[0]) + draws @ model.head_w[1:]
    else:
        dscores = onehot * dpred[:, None]
        gw = dscores.T @ z
        gb = dscores.sum(axis=0)
        dz = dscores @ model.head_w
    grads["head_w"] = gw
    grads["head_b"] = gb

    penalty = 0.0
    if cfg.kappa > 0 and m >= kernels.MIN_PENALTY_BATCH:
        onehot_pen = kernels.one_hot_encode(y, K)
        Ly = onehot_pen @ onehot_pen.T
        penalty = kernels.hsic_vstat(kernels.gram(cfg.kernel_z, z), Ly)
        dz = dz + cfg.kappa * kernels.hsic_gradient_z(z, Ly, cfg.kernel_z)

    d_act = dz @ model.lam_w[-1].T
    grads[f"lam_w{len(model.lam_w) - 1}"] = acts[-1].T @ dz
    grads[f"lam_b{len(model.lam_w) - 1}"] = dz.sum(axis=0)
    for i in range(len(model.lam_w) - 2, -1, -1):
        dpre = d_act * (pres[i] > 0)
        grads[f"lam_w{i}"] = acts[i].T @ dpre
        grads[f"lam_b{i}"] = dpre.sum(axis=0)
        d_act = dpre @ model.lam_w[i].T
    return mse, penalty, grads


def loss_and_grad(model: RewardModel, batch, cfg: RewardModelConfig):
    """Penalized training loss and its exact gradient w.r.t. every parameter.

    ``batch`` is a ``(X, actions, rewards)`` triple. Returns
    ``(loss, gradients)`` with one gradient array per ``param_items`` entry.
    """
    mse, penalty, grads = _loss_parts(model, batch, cfg)
    return mse + cfg.kappa * penalty, grads


def train(dataset: BanditDataset, cfg: RewardModelConfig, history: list | None = None) -> RewardModel:
    """Minibatch SGD on the train split; deterministic given ``cfg.seed``.

    When ``history`` is a list, one ``(epoch, train_mse, penalty_value)``
    triple is appended per epoch (computed on the full train split).
    """
    tr = dataset.split("train")
    if tr.n == 0:
        raise ValueError("dataset has no train split")
    levels = np.array([
        tr.rewards[tr.actions == a].mean() if np.any(tr.actions == a) else tr.rewards.mean()
        for a in range(1, dataset.n_actions + 1)
    ])
    model = init_model(cfg, tr.d, dataset.n_actions, action_levels=levels)
    if cfg.epochs == 0:
        return model
    if cfg.kappa > 0:
        tail = tr.n % cfg.batch_size
        if cfg.batch_size < kernels.MIN_PENALTY_BATCH:
            logger.warning("batch_size %d < %d: dependence penalty is skipped on every batch",
                           cfg.batch_size, kernels.MIN_PENALTY_BATCH)
        elif 0 < tail < kernels.MIN_PENALTY_BATCH:
            logger.warning("final partial batches of %d rows skip the dependence penalty", tail)
    shuffle = rng.substream(cfg.seed, rng.MODEL, 1)
    X, y, r = tr.features, tr.actions, tr.rewards
    for epoch in range(cfg.epochs):
        perm = shuffle.permutation(tr.n)
        for start in range(0, tr.n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss, grads = loss_and_grad(model, (X[idx], y[idx], r[idx]), cfg)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            for name, arr in model.param_items():
                arr -= cfg.learning_rate * grads[name]
        if history is not None:
            mse, penalty, _ = _loss_parts(model, (X, y, r), cfg)
            history.append((epoch, mse, penalty))
    return model


@dataclass
class KappaSelection:
    """Outcome of the penalty-strength sweep."""

    best_kappa: float
    val_mse: dict  # kappa -> factual validation MSE
    models: dict  # kappa -> trained RewardModel


def select_kappa(dataset: BanditDataset, cfg: RewardModelConfig, grid) -> KappaSelection:
    """Train one model per grid value; pick the best factual validation MSE.

    Factual means predictions at the logged actions only (counterfactuals
    are unavailable for model selection). Exact ties break toward the
    larger penalty.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("kappa grid must be nonempty")
    val = dataset.split("validation")
    if val.n == 0:
        raise ValueError("dataset has no validation split")
    val_mse, models = {}, {}
    best = None
    for kappa in grid:
        model = train(dataset, replace(cfg, kappa=kappa))
        resid = predict_logged(model, val.features, val.actions) - val.rewards
        mse = float(resid @ resid) / val.n
        val_mse[kappa] = mse
        models[kappa] = model
        if best is None or mse < val_mse[best] or (mse == val_mse[best] and kappa > best):
            best = kappa
    return KappaSelection(best_kappa=best, val_mse=val_mse, models=models)


_CHECKPOINT_FORMAT = "banditalloc-reward-model-v1"


def save_model(path, model: RewardModel) -> None:
    """Write a JSON checkpoint (shapes plus little-endian float64 blobs)."""
    arrays = {}
    for name, arr in model.param_items():
        arrays[name] = {
            "shape": list(arr.shape),
            "data": base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii"),
        }
    doc = {
        "format": _CHECKPOINT_FORMAT,
        "n_actions": model.n_actions,
        "structured": model.structured,
        "feature_scale": model.feature_scale,
        "n_repr_layers": len(model.lam_w),
        "arrays": arrays,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path) -> RewardModel:
    """Inverse of ``save_model``; round-trips parameters bitwise."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != _CHECKPOINT_FORMAT:
        raise ValueError(f"not a reward-model checkpoint: {path}")

    def arr(name):
        entry = doc["arrays"][name]
        flat = np.frombuffer(base64.b64decode(entry["data"]), dtype="<f8")
        return flat.reshape(entry["shape"]).astype(np.float64)

    n_layers = doc["n_repr_layers"]
    return RewardModel(
        lam_w=[arr(f"lam_w{i}") for i in range(n_layers)],
        lam_b=[arr(f"lam_b{i}") for i in range(n_layers)],
        head_w=arr("head_w"),
        head_b=arr("head_b"),
        n_actions=doc["n_actions"],
        structured=doc["structured"],
        feature_scale=doc["feature_scale"],
    )
