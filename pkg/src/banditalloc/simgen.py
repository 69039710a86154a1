"""Synthetic bandit-feedback environments with oracle access to true rewards.

Two families of benchmarks live here:

* A fully-simulated customer/incentive environment: 50-dimensional uniform
  features, five ordered actions, a hidden bump-mixture score ``h`` squashed
  through a sigmoid so the response is strictly increasing in the action,
  and a feature-dependent logging policy. A binary restriction to the first
  two actions supports treatment-effect evaluation.
* A nested-classification environment: class-conditional Gaussian features,
  four nested labels ordered from least to most specific, reward 1 whenever
  the chosen label is an ancestor-or-equal of the true one, and a softmax
  logging policy over the first label-aligned feature coordinates.

Everything is a pure function of ``(config, seed)``; generated datasets are
frozen (read-only arrays) and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .numutil import sigmoid

N_FEATURES = 50
N_ACTIONS = 5
FEATURE_HIGH = 10.0  # features are uniform on (0, FEATURE_HIGH)
BUMP_DOMAIN_SCALE = FEATURE_HIGH / 2  # feature-to-bump-domain divisor
BENCHMARK_COSTS = (1.0, 2.0, 3.0, 4.0, 5.0)  # benchmark cost of actions 1..5

# Number of fresh feature draws used to standardize h at ground-truth
# creation time, and the batch size of the rejection sampler. Both are part
# of the determinism contract: changing either changes generated datasets.
CALIBRATION_DRAWS = 10_000
_DRAW_CHUNK = 4096

SPLIT_TRAIN = "train"
SPLIT_VALIDATION = "validation"
SPLIT_TEST = "test"
_SPLITS = (SPLIT_TRAIN, SPLIT_VALIDATION, SPLIT_TEST)


@dataclass(frozen=True)
class GroundTruth:
    """Hidden parameters of the fully-simulated response surface.

    ``a`` (50,), ``b`` (50, 50) and ``c`` (50, 50) parameterize the bump
    mixture ``h``; ``mu``/``sigma`` standardize ``h`` before the sigmoid.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    mu: float
    sigma: float
    n_actions: int = N_ACTIONS

    def __post_init__(self):
        for arr in (self.a, self.b, self.c):
            arr.setflags(write=False)
        if not (np.all(self.a >= 0) and np.all(self.a <= 1)):
            raise ValueError("a entries must lie in [0, 1]")
        if not (np.all(self.b >= 0) and np.all(self.b <= 1)):
            raise ValueError("b entries must lie in [0, 1]")
        if not (np.all(self.c >= 0) and np.all(self.c <= 1)):
            raise ValueError("c entries must lie in [0, 1]")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass
class BanditDataset:
    """Logged bandit triples with optional true propensities and split tags."""

    features: np.ndarray  # (n, d)
    actions: np.ndarray  # (n,) ints in 1..K
    rewards: np.ndarray  # (n,) in [0, 1]
    propensities: np.ndarray | None  # (n, K) row-stochastic, entries > 0
    split_tag: np.ndarray  # (n,) strings from {train, validation, test}
    n_actions: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.split_tag = np.asarray(self.split_tag)
        n = self.features.shape[0]
        if not (self.actions.shape == (n,) and self.rewards.shape == (n,) and self.split_tag.shape == (n,)):
            raise ValueError("features/actions/rewards/split_tag lengths disagree")
        if self.actions.min(initial=1) < 1 or self.actions.max(initial=1) > self.n_actions:
            raise ValueError(f"actions must lie in 1..{self.n_actions}")
        if np.any(self.rewards < 0) or np.any(self.rewards > 1):
            raise ValueError("rewards must lie in [0, 1]")
        if self.propensities is not None:
            self.propensities = np.asarray(self.propensities, dtype=np.float64)
            if self.propensities.shape != (n, self.n_actions):
                raise ValueError("propensities must be (n, n_actions)")
            if np.any(np.abs(self.propensities.sum(axis=1) - 1.0) > 1e-9):
                raise ValueError("propensity rows must sum to 1")
            if np.any(self.propensities <= 0):
                raise ValueError("propensities must be strictly positive")
        bad = set(np.unique(self.split_tag)) - set(_SPLITS)
        if bad:
            raise ValueError(f"unknown split tags: {sorted(bad)}")
        for arr in (self.features, self.actions, self.rewards, self.split_tag):
            arr.setflags(write=False)
        if self.propensities is not None:
            self.propensities.setflags(write=False)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def split(self, tag: str) -> "BanditDataset":
        """Subset of rows carrying the given split tag."""
        if tag not in _SPLITS:
            raise ValueError(f"unknown split tag {tag!r}")
        mask = self.split_tag == tag
        props = self.propensities[mask] if self.propensities is not None else None
        return BanditDataset(
            self.features[mask], self.actions[mask], self.rewards[mask],
            props, self.split_tag[mask], self.n_actions,
        )


@dataclass(frozen=True)
class NestedSimConfig:
    """Configuration of the nested-classification benchmark.

    Action/label 1 is the least specific (always correct for positives) and
    carries the highest cost; costs decrease strictly along the nesting.
    ``n_samples`` must split exactly into positives and negatives at
    ``neg_ratio`` and into ``n_classes`` equal positive strata.
    """

    n_samples: int = 4400
    n_classes: int = 4
    neg_ratio: int = 10
    feature_dim: int = 32
    costs: tuple = (3.0, 2.0, 1.0, 0.0)
    split: tuple = (0.6, 0.2, 0.2)
    seed: int = 0
    class_mean_shift: float = 2.0

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if len(self.costs) != self.n_classes:
            raise ValueError("one cost per nested label required")
        if not all(self.costs[i] > self.costs[i + 1] for i in range(self.n_classes - 1)):
            raise ValueError("costs must decrease strictly along the nesting order")
        if self.n_samples % (1 + self.neg_ratio) != 0:
            raise ValueError(f"n_samples must be divisible by {1 + self.neg_ratio} for an exact positive:negative ratio")
        if (self.n_samples // (1 + self.neg_ratio)) % self.n_classes != 0:
            raise ValueError("positive count must split evenly across classes")


def sample_ground_truth(seed: int) -> GroundTruth:
    """Draw the hidden response-surface parameters for one experiment.

    All bump parameters are i.i.d. uniform on [0, 1]. The standardization
    constants are the empirical mean/std of ``h`` over CALIBRATION_DRAWS
    fresh uniform feature draws from the same stream (draw order: a, b, c,
    then the calibration block).
    """
    gen = rng.substream(seed, rng.GROUND_TRUTH)
    a = gen.uniform(size=N_FEATURES)
    b = gen.uniform(size=(N_FEATURES, N_FEATURES))
    c = gen.uniform(size=(N_FEATURES, N_FEATURES))
    calib = gen.uniform(0.0, FEATURE_HIGH, size=(CALIBRATION_DRAWS, N_FEATURES))
    h = _h_batch(a, b, c, calib)
    return GroundTruth(a=a, b=b, c=c, mu=float(h.mean()), sigma=float(h.std()))


def _h_batch(a, b, c, X):
    # Features are mapped from (0, 10) into the bump domain before
    # evaluation: the centers c live in [0, 1], and on the raw feature scale
    # the exponents would be ~ -100, collapsing the score to a constant.
    # The domain scale (half the feature range) calibrates the spread of the
    # standardized score so the benchmark operates in its documented value
    # regime; see the calibration notes in the README.
    # One pass per bump keeps the temporary at (n, d) instead of (n, d, d).
    Xs = X / BUMP_DOMAIN_SCALE
    E = np.empty((X.shape[0], a.shape[0]))
    for i in range(a.shape[0]):
        E[:, i] = np.abs(Xs - c[i]) @ b[i]
    return np.exp(-E) @ a


def h_eval(gt: GroundTruth, x) -> float:
    """Bump-mixture score of a single feature vector from the (0, 10) cube."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (N_FEATURES,):
        raise ValueError(f"expected a vector of length {N_FEATURES}, got shape {x.shape}")
    return float(_h_batch(gt.a, gt.b, gt.c, x[None, :])[0])


def standardized_score(gt: GroundTruth, X) -> np.ndarray:
    """(h(x) - mu) / sigma for each row of X."""
    X = np.asarray(X, dtype=np.float64)
    return (_h_batch(gt.a, gt.b, gt.c, X) - gt.mu) / gt.sigma


def true_reward(gt: GroundTruth, x, y: int) -> float:
    """Expected response of one customer to action ``y`` in 1..K."""
    if not 1 <= y <= gt.n_actions:
        raise ValueError(f"action must lie in 1..{gt.n_actions}, got {y}")
    x = np.asarray(x, dtype=np.float64)
    u = (h_eval(gt, x) - gt.mu) / gt.sigma
    return float(sigmoid(u + y / 5.0))


def true_reward_matrix(gt: GroundTruth, X) -> np.ndarray:
    """(n, K) matrix of expected responses for every row and every action."""
    u = standardized_score(gt, X)
    ys = np.arange(1, gt.n_actions + 1) / 5.0
    return sigmoid(u[:, None] + ys[None, :])


def logging_probs(x) -> np.ndarray:
    """Logging-policy distribution over the five actions for one customer."""
    x = np.asarray(x, dtype=np.float64)
    head = x[:N_ACTIONS]
    denom = head.sum()
    if denom <= 0:
        raise ValueError("logging policy undefined: first five feature entries sum to a nonpositive value")
    return head / denom


def logging_prob(x, y: int) -> float:
    """Probability that the logging policy assigns action ``y`` to ``x``."""
    if not 1 <= y <= N_ACTIONS:
        raise ValueError(f"action must lie in 1..{N_ACTIONS}, got {y}")
    return float(logging_probs(x)[y - 1])


def _categorical_rows(P, u):
    # Inverse-CDF draw per row; clip guards the cumsum-rounding edge.
    idx = (u[:, None] > np.cumsum(P, axis=1)).sum(axis=1)
    return np.minimum(idx, P.shape[1] - 1) + 1


def _assign_splits(gen, n, split):
    counts = [int(round(f * n)) for f in split[:2]]
    counts.append(n - sum(counts))
    if min(counts) < 0:
        raise ValueError("split fractions produce a negative count")
    tags = np.repeat(np.array(_SPLITS, dtype=object), counts)
    return tags[gen.permutation(n)].astype(str)


def _simulate_quota(gt, n_per_action, noise_model, seed, n_actions, stream_code, split):
    """Shared rejection sampler: draw (x, y~rho) pairs, keep per-action quotas."""
    if n_per_action < 1:
        raise ValueError("n_per_action must be at least 1")
    if noise_model not in ("deterministic", "bernoulli"):
        raise ValueError(f"unknown noise model {noise_model!r}")
    gen = rng.substream(seed, stream_code)
    quota = np.full(n_actions, n_per_action)
    xs, ys, ps = [], [], []
    while quota.sum() > 0:
        X = gen.uniform(0.0, FEATURE_HIGH, size=(_DRAW_CHUNK, N_FEATURES))
        head = X[:, :n_actions]
        P = head / head.sum(axis=1, keepdims=True)
        Y = _categorical_rows(P, gen.random(_DRAW_CHUNK))
        keep = np.zeros(_DRAW_CHUNK, dtype=bool)
        for a in range(1, n_actions + 1):
            rows = np.flatnonzero(Y == a)[: quota[a - 1]]
            keep[rows] = True
            quota[a - 1] -= rows.size
        xs.append(X[keep])
        ys.append(Y[keep])
        ps.append(P[keep])
    X = np.concatenate(xs)
    Y = np.concatenate(ys)
    P = np.concatenate(ps)
    u = standardized_score(gt, X)
    mean_reward = sigmoid(u + Y / 5.0)
    if noise_model == "bernoulli":
        R = (gen.random(X.shape[0]) < mean_reward).astype(np.float64)
    else:
        R = mean_reward
    tags = _assign_splits(gen, X.shape[0], split)
    return BanditDataset(X, Y, R, P, tags, n_actions)


def simulate_dataset(gt: GroundTruth, n_per_action: int, noise_model: str = "deterministic",
                     seed: int = 0, split=(0.8, 0.2, 0.0)) -> BanditDataset:
    """Simulate a logged dataset with exactly ``n_per_action`` rows per action.

    Features are uniform on (0, 10)^50, actions come from the feature-ratio
    logging policy, and over-quota draws are rejected until every action
    holds its quota. ``deterministic`` logs the expected response itself;
    ``bernoulli`` logs a coin flip with that success probability.
    """
    return _simulate_quota(gt, n_per_action, noise_model, seed, N_ACTIONS, rng.SIMULATED, split)


def simulate_binary_dataset(gt: GroundTruth, n_per_action: int, noise_model: str = "deterministic",
                            seed: int = 0, split=(0.8, 0.2, 0.0)) -> BanditDataset:
    """Fully-simulated environment restricted to the first two actions.

    The logging policy is renormalized over actions {1, 2}; rewards keep the
    full response surface so the treatment effect f(x,2) - f(x,1) is always
    positive.
    """
    return _simulate_quota(gt, n_per_action, noise_model, seed, 2, rng.BINARY, split)


def simulate_nested_dataset(cfg: NestedSimConfig):
    """Generate the nested-classification benchmark.

    Returns ``(dataset, y_star)`` where ``y_star[i]`` is the true most
    specific label in 1..n_classes for positives and 0 for negatives (for
    which every action earns reward 0). The logged reward is
    1 if the logged action is at most ``y_star`` (a correct, possibly less
    specific label), else 0. Class-conditional Gaussian features replace a
    pretrained-embedding pipeline: class c is shifted on coordinate c-1
    (visible to the logging policy) and on coordinate n_classes+c-1.
    """
    gen = rng.substream(cfg.seed, rng.NESTED)
    k = cfg.n_classes
    n_pos = cfg.n_samples // (1 + cfg.neg_ratio)
    n_neg = cfg.n_samples - n_pos
    per_class = n_pos // k

    means = np.zeros((k, cfg.feature_dim))
    for c in range(k):
        means[c, c] = cfg.class_mean_shift
        means[c, k + c] = cfg.class_mean_shift

    X = gen.standard_normal(size=(cfg.n_samples, cfg.feature_dim))
    y_star = np.zeros(cfg.n_samples, dtype=np.int64)
    for c in range(k):
        lo, hi = c * per_class, (c + 1) * per_class
        X[lo:hi] += means[c]
        y_star[lo:hi] = c + 1

    # Softmax logging policy over the first n_classes coordinates: positive
    # everywhere (overlap holds) yet correlated with the true class.
    logits = X[:, :k]
    logits = logits - logits.max(axis=1, keepdims=True)
    P = np.exp(logits)
    P /= P.sum(axis=1, keepdims=True)
    Y = _categorical_rows(P, gen.random(cfg.n_samples))
    R = ((Y <= y_star) & (y_star > 0)).astype(np.float64)

    order = gen.permutation(cfg.n_samples)
    X, Y, R, P, y_star = X[order], Y[order], R[order], P[order], y_star[order]

    n = cfg.n_samples
    n_train = int(round(cfg.split[0] * n))
    n_val = int(round(cfg.split[1] * n))
    tags = np.array([SPLIT_TRAIN] * n_train + [SPLIT_VALIDATION] * n_val + [SPLIT_TEST] * (n - n_train - n_val))

    ds = BanditDataset(X, Y, R, P, tags, k)
    y_star.setflags(write=False)
    return ds, y_star


def nested_reward_matrix(y_star, n_actions: int) -> np.ndarray:
    """(n, K) oracle reward for the nested benchmark: 1 iff action <= y_star."""
    y_star = np.asarray(y_star)
    acts = np.arange(1, n_actions + 1)
    return ((acts[None, :] <= y_star[:, None]) & (y_star[:, None] > 0)).astype(np.float64)
