"""Self-normalized importance-sampling policy baseline with a cost penalty.

The baseline learns a linear softmax policy directly from logged bandit
data: estimate the logging policy with multinomial logistic regression,
then for each Lagrange multiplier ``lam`` on the reward maximize

    (1/n) sum_i [ (r_i - lam) * pi(y_i|x_i) / rho_hat(y_i|x_i)
                  - eta * sum_y c(y) * pi(y|x_i) ]

by deterministic full-batch gradient ascent, binary-searching the cost
multiplier ``eta`` for the highest-cost-but-in-budget deterministic policy.
Among the per-lam winners, the policy with the best self-normalized
importance-sampling (SNIPS) reward estimate is returned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .allocate import CostSchedule, InfeasibleBudget, PolicySolution
from .simgen import BanditDataset

_PROPENSITY_L2 = 1e-4
_PROPENSITY_LR = 0.1
_PROPENSITY_ITERS = 500


@dataclass(frozen=True)
class CrmConfig:
    """Optimization settings for the importance-sampling baseline."""

    clip_epsilon: float = 0.01
    policy_lr: float = 0.05
    policy_iterations: int = 300
    eta_tol: float = 1e-3

    def __post_init__(self):
        if not 0 < self.clip_epsilon < 0.5:
            raise ValueError("clip_epsilon must lie in (0, 0.5)")


def _softmax_rows(logits):
    logits = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return p


@dataclass
class FeatureMap:
    """Stored per-column standardization plus intercept column.

    Standardizing is an invertible affine map, so softmax-linear models over
    standardized features span exactly the same function class as over raw
    features; it only conditions the fixed-step gradient iterations.
    """

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=np.float64)
        return cls(mean=X.mean(axis=0), std=np.maximum(X.std(axis=0), 1e-12))

    def __call__(self, X):
        X = np.asarray(X, dtype=np.float64)
        Z = (X - self.mean) / self.std
        return np.hstack([Z, np.ones((Z.shape[0], 1))])


@dataclass
class PropensityModel:
    """Multinomial logistic regression (standardized features + intercept)."""

    weights: np.ndarray  # (K, d+1), intercept last
    feature_map: FeatureMap
    clip_epsilon: float = 0.01

    def predict_proba(self, X) -> np.ndarray:
        """(n, K) probability rows (each sums to 1)."""
        return _softmax_rows(self.feature_map(X) @ self.weights.T)

    def clipped(self, X) -> np.ndarray:
        """Probabilities floored at clip_epsilon, for importance-weight
        denominators (rows no longer sum to 1)."""
        return np.maximum(self.predict_proba(X), self.clip_epsilon)


def fit_propensity(dataset: BanditDataset, clip_epsilon: float = 0.01) -> PropensityModel:
    """Estimate the logging policy from the train split (all rows if untagged).

    Full-batch gradient descent on the L2-penalized multinomial negative
    log-likelihood: 500 iterations at learning rate 0.1, zero
    initialization, deterministic.
    """
    rows = dataset.split("train")
    if rows.n == 0:
        rows = dataset
    K = dataset.n_actions
    counts = np.bincount(rows.actions, minlength=K + 1)[1:]
    if counts.min() == 0:
        raise ValueError(f"every action needs at least one sample; counts={counts.tolist()}")
    fmap = FeatureMap.fit(rows.features)
    Xa = fmap(rows.features)
    onehot = np.zeros((rows.n, K))
    onehot[np.arange(rows.n), rows.actions - 1] = 1.0
    W = np.zeros((K, Xa.shape[1]))
    for _ in range(_PROPENSITY_ITERS):
        P = _softmax_rows(Xa @ W.T)
        grad = (P - onehot).T @ Xa / rows.n + 2.0 * _PROPENSITY_L2 * W
        W -= _PROPENSITY_LR * grad
    return PropensityModel(weights=W, feature_map=fmap, clip_epsilon=clip_epsilon)


@dataclass
class LinearSoftmaxPolicy:
    """Stochastic policy pi(y|x) = softmax(theta @ features(x))."""

    theta: np.ndarray  # (K, d+1)
    feature_map: FeatureMap

    def probs(self, X) -> np.ndarray:
        return _softmax_rows(self.feature_map(X) @ self.theta.T)

    def greedy_actions(self, X) -> np.ndarray:
        return np.argmax(self.probs(X), axis=1) + 1


def expected_policy_cost(policy: LinearSoftmaxPolicy, X, costs) -> float:
    """Mean over rows of sum_y c(y) pi(y|x)."""
    return float((policy.probs(X) @ np.asarray(costs, dtype=np.float64)).mean())


def crm_objective_grad(policy: LinearSoftmaxPolicy, X, actions, rewards, rho_logged,
                       costs, lam: float, eta: float):
    """Value and exact theta-gradient of the penalized IS objective.

    ``rho_logged`` holds the (clipped) estimated logging probability of each
    row's own logged action.
    """
    X = np.asarray(X, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    rewards = np.asarray(rewards, dtype=np.float64)
    rho_logged = np.asarray(rho_logged, dtype=np.float64)
    costs = np.asarray(costs, dtype=np.float64)
    n = X.shape[0]
    Xa = policy.feature_map(X)
    P = _softmax_rows(Xa @ policy.theta.T)
    idx = np.arange(n)
    pi_logged = P[idx, actions - 1]
    w = (rewards - lam) / rho_logged

    cost_bar = P @ costs
    value = float((w * pi_logged).mean() - eta * cost_bar.mean())

    # d pi(y_i|x)/d theta_k = pi(y_i|x) ([k = y_i] - pi(k|x)) x
    coeff = w * pi_logged
    A = -coeff[:, None] * P
    A[idx, actions - 1] += coeff
    # d (sum_y c_y pi(y|x))/d theta_k = pi(k|x) (c_k - cost_bar) x
    A -= eta * P * (costs[None, :] - cost_bar[:, None])
    grad = A.T @ Xa / n
    return value, grad


def _train_policy(X, actions, rewards, rho_logged, costs, lam, eta, cfg: CrmConfig, fmap: FeatureMap):
    theta = np.zeros((len(costs), X.shape[1] + 1))
    policy = LinearSoftmaxPolicy(theta, fmap)
    for _ in range(cfg.policy_iterations):
        value, grad = crm_objective_grad(policy, X, actions, rewards, rho_logged, costs, lam, eta)
        if not np.isfinite(value):
            raise FloatingPointError("policy objective became non-finite")
        policy.theta = policy.theta + cfg.policy_lr * grad
    return policy


@dataclass
class CrmDiagnostics:
    """Per-lambda record emitted by the baseline run."""

    lam: float
    eta: float
    s_value: float  # mean importance weight (self-normalizer)
    snips: float
    avg_cost: float  # deterministic-policy cost on the evaluation rows


def _snips(policy, X, actions, rewards, rho_logged):
    pi_logged = policy.probs(X)[np.arange(X.shape[0]), actions - 1]
    s = float((pi_logged / rho_logged).mean())
    value = float((rewards * pi_logged / rho_logged).mean())
    return s, value / s


def run_crm_baseline(dataset: BanditDataset, sched: CostSchedule, lambda_grid=None,
                     cfg: CrmConfig = CrmConfig(), eval_X=None):
    """Run the full baseline; returns ``(PolicySolution, [CrmDiagnostics])``.

    Policies train on the dataset's train split; the budget is enforced on
    the deterministic (argmax) policy over the evaluation rows (the test
    split by default), which is also where the returned assignment lives.
    """
    costs = np.asarray(sched.costs, dtype=np.float64)
    if costs.min() > sched.budget + 1e-12:
        raise InfeasibleBudget(f"cheapest action costs {costs.min()}, budget is {sched.budget}")
    tr = dataset.split("train")
    if tr.n == 0:
        tr = dataset
    if eval_X is None:
        test = dataset.split("test")
        eval_X = test.features if test.n else tr.features

    prop = fit_propensity(dataset, cfg.clip_epsilon)
    fmap = prop.feature_map
    rho_logged = prop.clipped(tr.features)[np.arange(tr.n), tr.actions - 1]
    if lambda_grid is None:
        lambda_grid = np.linspace(0.0, float(tr.rewards.max()), 10)
    lambda_grid = list(lambda_grid)
    if not lambda_grid:
        raise ValueError("lambda grid must be nonempty")

    def det_cost(policy):
        return float(costs[policy.greedy_actions(eval_X) - 1].mean())

    diagnostics = []
    best = None  # (snips, solution fields)
    for lam in lambda_grid:
        policy, eta = _search_eta(tr, rho_logged, costs, lam, sched.budget, cfg, det_cost, fmap)
        s, snips = _snips(policy, tr.features, tr.actions, tr.rewards, rho_logged)
        cost = det_cost(policy)
        diagnostics.append(CrmDiagnostics(lam=float(lam), eta=eta, s_value=s, snips=snips, avg_cost=cost))
        if best is None or snips > best[0]:
            best = (snips, policy, float(lam), cost)

    snips, policy, lam_star, avg_cost = best
    assignment = policy.greedy_actions(eval_X)
    solution = PolicySolution(assignment=assignment, lambda_star=lam_star,
                              avg_cost=avg_cost, est_reward=snips)
    return solution, diagnostics


def _search_eta(tr, rho_logged, costs, lam, budget, cfg, det_cost, fmap):
    """Highest-cost-but-in-budget eta for one lambda (deterministic policy)."""

    def fit(eta):
        return _train_policy(tr.features, tr.actions, tr.rewards, rho_logged, costs, lam, eta, cfg, fmap)

    policy = fit(0.0)
    if det_cost(policy) <= budget + 1e-9:
        return policy, 0.0
    lo, hi = 0.0, 1.0
    pol_hi = fit(hi)
    doublings = 0
    while det_cost(pol_hi) > budget + 1e-9:
        lo, hi = hi, 2.0 * hi
        pol_hi = fit(hi)
        doublings += 1
        if doublings > 40:
            raise InfeasibleBudget(f"no feasible eta found for lam={lam}")
    best = (det_cost(pol_hi), hi, pol_hi)
    while hi - lo > cfg.eta_tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        pol = fit(mid)
        cost = det_cost(pol)
        if cost <= budget + 1e-9:
            hi = mid
            if cost > best[0]:
                best = (cost, mid, pol)
        else:
            lo = mid
    return best[2], best[1]
