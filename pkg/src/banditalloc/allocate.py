"""Budget-constrained assignment of actions given a reward-estimate matrix.

Three solvers over an (n, K) estimate matrix F and per-action costs:

* ``greedy_for_lambda``: per-customer argmax of F[i][k] - lambda * cost[k],
  the pointwise maximizer of the Lagrangian relaxation.
* ``lagrangian_search``: bisection on lambda until the greedy assignment is
  feasible, followed by a budget-filling pass that upgrades individual
  customers toward their just-infeasible choice while budget remains. The
  result is always feasible and never beats the exact optimum.
* ``dp_allocate``: exact O(n * M * K) dynamic program for integer costs and
  an integer total budget M, plus ``brute_force_allocate`` as a test oracle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


class InfeasibleBudget(ValueError):
    """The cheapest possible assignment already exceeds the budget."""


@dataclass(frozen=True)
class CostSchedule:
    """Per-action costs (nondecreasing in action order) and budget per customer."""

    costs: tuple
    budget: float

    def __post_init__(self):
        costs = tuple(float(c) for c in self.costs)
        object.__setattr__(self, "costs", costs)
        if any(c < 0 for c in costs):
            raise ValueError("costs must be nonnegative")
        if any(costs[i] > costs[i + 1] for i in range(len(costs) - 1)):
            raise ValueError("costs must be nondecreasing in action order")
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")


@dataclass
class PolicySolution:
    """A solved deterministic assignment with its Lagrange multiplier."""

    assignment: np.ndarray  # (n,) actions in 1..K
    lambda_star: float
    avg_cost: float
    est_reward: float


def _as_matrix(F):
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] < 1:
        raise ValueError("estimate matrix must be nonempty and 2-d")
    return F


def greedy_for_lambda(F, sched: CostSchedule, lam: float) -> np.ndarray:
    """Per-customer argmax of F[i][k] - lam * cost[k], ties to the cheapest."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    F = _as_matrix(F)
    costs = np.asarray(sched.costs)
    scores = F - lam * costs[None, :]
    # argmax returns the first maximizer; costs are nondecreasing in the
    # action index, so the first is the cheapest.
    return np.argmax(scores, axis=1) + 1


def _assignment_stats(F, costs, assignment):
    idx = assignment - 1
    rows = np.arange(F.shape[0])
    return float(costs[idx].mean()), float(F[rows, idx].mean())


def _max_slope(F, costs):
    best = 0.0
    K = F.shape[1]
    for k in range(K):
        for kp in range(k + 1, K):
            dc = costs[kp] - costs[k]
            if dc <= 0:
                continue
            gain = float((F[:, kp] - F[:, k]).max())
            if gain / dc > best:
                best = gain / dc
    return best


def lagrangian_search(F, sched: CostSchedule, tol: float = 1e-9) -> PolicySolution:
    """Feasible assignment of largest average cost along the Lagrangian path.

    Bisects lambda in [0, 1 + max pairwise reward-per-cost slope] until the
    bracket is narrower than ``tol``, keeping the feasible greedy assignment
    of largest average cost, then spends any remaining budget by upgrading
    single customers toward their choice at the infeasible end of the
    bracket (largest reward-per-cost gain first).
    """
    F = _as_matrix(F)
    costs = np.asarray(sched.costs)
    n, K = F.shape
    if len(sched.costs) != K:
        raise ValueError("cost schedule length must match the action count")
    m = sched.budget
    if costs.min() > m + 1e-12:
        raise InfeasibleBudget(f"cheapest action costs {costs.min()}, budget is {m}")

    assign0 = greedy_for_lambda(F, sched, 0.0)
    cost0, reward0 = _assignment_stats(F, costs, assign0)
    if cost0 <= m + 1e-9:
        return PolicySolution(assign0, 0.0, cost0, reward0)

    lo, hi = 0.0, 1.0 + _max_slope(F, costs)
    best_assign = greedy_for_lambda(F, sched, hi)
    best_lam = hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        assign = greedy_for_lambda(F, sched, mid)
        cost, _ = _assignment_stats(F, costs, assign)
        if cost <= m + 1e-9:
            hi, best_assign, best_lam = mid, assign, mid
        else:
            lo = mid
    assignment = best_assign.copy()

    # Budget-filling pass: on degenerate instances the greedy cost jumps
    # across the budget; upgrade customers one at a time toward their
    # lambda=lo choice while the total stays within n * m.
    target = greedy_for_lambda(F, sched, lo)
    total = costs[assignment - 1].sum()
    budget_total = m * n
    d_reward = F[np.arange(n), target - 1] - F[np.arange(n), assignment - 1]
    d_cost = costs[target - 1] - costs[assignment - 1]
    cand = np.flatnonzero((d_reward > 0) & (d_cost > 0))
    for i in cand[np.lexsort((cand, -(d_reward[cand] / d_cost[cand])))]:
        if total + d_cost[i] <= budget_total + 1e-9:
            assignment[i] = target[i]
            total += d_cost[i]

    avg_cost, est_reward = _assignment_stats(F, costs, assignment)
    return PolicySolution(assignment, best_lam, avg_cost, est_reward)


def dp_allocate(F, int_costs, total_budget: int):
    """Exact maximizer of total estimated reward under an integer budget.

    Returns ``(assignment, total_reward)``. Value ties break toward the
    cheaper (lower-index) action. Raises InfeasibleBudget when no
    assignment fits.
    """
    F = _as_matrix(F)
    n, K = F.shape
    costs = [int(c) for c in int_costs]
    if any(c != float(ic) for c, ic in zip(costs, int_costs)):
        raise ValueError("dp_allocate requires integral costs")
    if any(c < 0 for c in costs) or len(costs) != K:
        raise ValueError("costs must be nonnegative, one per action")
    M = int(total_budget)
    if n * min(costs) > M:
        raise InfeasibleBudget(f"minimum spend {n * min(costs)} exceeds total budget {M}")

    neg = -np.inf
    value = np.full(M + 1, neg)
    value[0] = 0.0  # budget consumed exactly b after zero customers
    # value[b] after customer i: best total reward with spend exactly b
    choice = np.zeros((n, M + 1), dtype=np.int8)
    # Scanning actions cheapest-first makes the strict comparison below break
    # value ties toward the cheaper action.
    scan_order = sorted(range(K), key=lambda k: (costs[k], k))
    for i in range(n):
        new = np.full(M + 1, neg)
        pick = np.zeros(M + 1, dtype=np.int8)
        for k in scan_order:
            c = costs[k]
            if c > M:
                continue
            cand = np.full(M + 1, neg)
            cand[c:] = value[: M + 1 - c] + F[i, k]
            better = cand > new
            new[better] = cand[better]
            pick[better] = k
        value, choice[i] = new, pick
    best_b = int(np.argmax(value))
    if not np.isfinite(value[best_b]):
        raise InfeasibleBudget("no feasible assignment")
    assignment = np.zeros(n, dtype=np.int64)
    b = best_b
    for i in range(n - 1, -1, -1):
        k = int(choice[i, b])
        assignment[i] = k + 1
        b -= costs[k]
    return assignment, float(value[best_b])


def brute_force_allocate(F, int_costs, total_budget: int):
    """Exhaustive maximum over all feasible assignments (test oracle)."""
    F = _as_matrix(F)
    n, K = F.shape
    if K**n > 10**6:
        raise ValueError(f"instance too large for brute force: K^n = {K**n}")
    costs = [int(c) for c in int_costs]
    best_value, best_assign = -np.inf, None
    for combo in itertools.product(range(K), repeat=n):
        if sum(costs[k] for k in combo) > total_budget:
            continue
        value = sum(F[i, k] for i, k in enumerate(combo))
        if value > best_value:
            best_value = value
            best_assign = combo
    if best_assign is None:
        raise InfeasibleBudget("no feasible assignment")
    return np.asarray(best_assign, dtype=np.int64) + 1, float(best_value)
