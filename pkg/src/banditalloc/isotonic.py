"""Least squares over per-action constants, with and without monotonicity.

Empirical check of the prediction-rate separation between the constant
class (one free level per action; error flat in the number of actions K)
and its monotone subclass (error shrinking roughly like log(K)/K once the
noise dominates the level spacing). The monotone projection is solved
exactly by pool-adjacent-violators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng


@dataclass(frozen=True)
class RateConfig:
    """Sweep settings: actions grid, rows per action level, noise, trials."""

    K_grid: tuple = (2, 8, 32, 128)
    n: int = 50
    sigma: float = 1.0
    trials: int = 200
    seed: int = 0

    def __post_init__(self):
        if min(self.K_grid) < 2:
            raise ValueError("every K must be at least 2")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


def pava(values, weights=None) -> np.ndarray:
    """Weighted least-squares projection onto nondecreasing vectors.

    Pool-adjacent-violators: scan left to right, merging each new value into
    the preceding block while the block means decrease.
    """
    values = np.asarray(values, dtype=np.float64)
    if weights is None:
        weights = np.ones_like(values)
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != values.shape:
            raise ValueError("weights must match values in shape")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
    means, wsum, sizes = [], [], []
    for v, w in zip(values, weights):
        means.append(v)
        wsum.append(w)
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, s2 = means.pop(), wsum.pop(), sizes.pop()
            means[-1] = (means[-1] * wsum[-1] + m2 * w2) / (wsum[-1] + w2)
            wsum[-1] += w2
            sizes[-1] += s2
    return np.repeat(means, sizes)


def ls_constant_fit(R) -> np.ndarray:
    """Per-action least-squares levels of an (n, K) reward matrix: column means."""
    R = np.asarray(R, dtype=np.float64)
    if R.ndim != 2 or R.shape[0] < 1:
        raise ValueError("reward matrix must be nonempty and 2-d")
    return R.mean(axis=0)


def ls_monotone_fit(R) -> np.ndarray:
    """Least-squares levels constrained to be nondecreasing across actions.

    Under the fixed design (every action observed in every row) this is the
    isotonic projection of the column means with equal weights n.
    """
    R = np.asarray(R, dtype=np.float64)
    means = ls_constant_fit(R)
    return pava(means, np.full(means.shape, float(R.shape[0])))


@dataclass
class RateTable:
    """Mean/std of per-trial squared errors for both estimators, per K."""

    K: list
    mean_error_constant: list
    std_error_constant: list
    mean_error_monotone: list
    std_error_monotone: list
    trials: int

    def rows(self):
        for i, k in enumerate(self.K):
            yield {
                "K": k,
                "mean_error_constant": self.mean_error_constant[i],
                "std_error_constant": self.std_error_constant[i],
                "mean_error_monotone": self.mean_error_monotone[i],
                "std_error_monotone": self.std_error_monotone[i],
            }


def rate_experiment(cfg: RateConfig) -> RateTable:
    """Simulate the fixed-design noise model and record both estimators' errors.

    Per trial: a nondecreasing truth (sorted uniforms), an (n, K) Gaussian
    reward matrix around it, both fits, and the squared error
    (1/K) sum_k (fhat_k - f*_k)^2.
    """
    mean_c, std_c, mean_m, std_m = [], [], [], []
    for ki, K in enumerate(cfg.K_grid):
        errs_c = np.empty(cfg.trials)
        errs_m = np.empty(cfg.trials)
        for t in range(cfg.trials):
            gen = rng.substream(cfg.seed, rng.RATES, ki, t)
            truth = np.sort(gen.uniform(size=K))
            R = truth[None, :] + cfg.sigma * gen.standard_normal(size=(cfg.n, K))
            errs_c[t] = float(((ls_constant_fit(R) - truth) ** 2).mean())
            errs_m[t] = float(((ls_monotone_fit(R) - truth) ** 2).mean())
        mean_c.append(float(errs_c.mean()))
        std_c.append(float(errs_c.std()))
        mean_m.append(float(errs_m.mean()))
        std_m.append(float(errs_m.std()))
    return RateTable(list(cfg.K_grid), mean_c, std_c, mean_m, std_m, cfg.trials)
