import numpy as np
import pytest

from banditalloc import allocate, crm, simgen
from banditalloc.crm import CrmConfig, FeatureMap, LinearSoftmaxPolicy, PropensityModel


@pytest.fixture(scope="module")
def sim_data():
    gt = simgen.sample_ground_truth(0)
    ds = simgen.simulate_dataset(gt, 500, "deterministic", seed=0)
    return gt, ds


def small_logged(gen, n=60, d=5, K=3):
    X = gen.normal(size=(n, d))
    actions = gen.integers(1, K + 1, size=n)
    rewards = gen.random(n)
    rho = np.clip(gen.random(n), 0.1, None)
    return X, actions, rewards, rho


def test_zero_weights_predict_uniform(gen):
    X = gen.normal(size=(10, 4))
    model = PropensityModel(np.zeros((5, 5)), FeatureMap.fit(X))
    P = model.predict_proba(X)
    assert np.allclose(P, 0.2, atol=1e-15)


def test_propensity_rows_are_distributions(sim_data):
    _, ds = sim_data
    model = crm.fit_propensity(ds)
    P = model.predict_proba(ds.features[:200])
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-9)
    assert P.min() > 0
    clipped = model.clipped(ds.features[:200])
    assert clipped.min() >= model.clip_epsilon


def test_propensity_recovers_logging_policy(sim_data):
    # Mean total-variation distance to the true logging policy on held-out rows.
    _, ds = sim_data
    model = crm.fit_propensity(ds)
    val = ds.split("validation")
    P = model.predict_proba(val.features)
    tv = 0.5 * np.abs(P - val.propensities).sum(axis=1).mean()
    assert tv < 0.15


def test_propensity_requires_every_action(gen):
    X = gen.normal(size=(20, 3))
    ds = simgen.BanditDataset(X, np.ones(20, dtype=int), gen.random(20), None,
                              np.array(["train"] * 20), 2)
    with pytest.raises(ValueError):
        crm.fit_propensity(ds)


def test_objective_value_at_logging_policy(gen):
    # With pi identical to the (unclipped) propensity estimate and
    # lam = eta = 0 the importance weights are 1 and the objective is the
    # mean logged reward.
    X, actions, rewards, _ = small_logged(gen)
    fmap = FeatureMap.fit(X)
    theta = gen.normal(size=(3, 6)) * 0.4
    policy = LinearSoftmaxPolicy(theta, fmap)
    rho = policy.probs(X)[np.arange(X.shape[0]), actions - 1]
    value, _ = crm.crm_objective_grad(policy, X, actions, rewards, rho, (0, 1, 2), 0.0, 0.0)
    assert abs(value - rewards.mean()) < 1e-12


def test_objective_gradient_matches_finite_differences(gen):
    X, actions, rewards, rho = small_logged(gen, n=50)
    fmap = FeatureMap.fit(X)
    policy = LinearSoftmaxPolicy(gen.normal(size=(3, 6)) * 0.3, fmap)
    costs = (0.0, 1.0, 2.0)
    value, grad = crm.crm_objective_grad(policy, X, actions, rewards, rho, costs, 0.3, 0.25)
    h = 1e-6
    worst = 0.0
    for i in range(policy.theta.size):
        orig = policy.theta.flat[i]
        policy.theta.flat[i] = orig + h
        up, _ = crm.crm_objective_grad(policy, X, actions, rewards, rho, costs, 0.3, 0.25)
        policy.theta.flat[i] = orig - h
        dn, _ = crm.crm_objective_grad(policy, X, actions, rewards, rho, costs, 0.3, 0.25)
        policy.theta.flat[i] = orig
        fd = (up - dn) / (2 * h)
        worst = max(worst, abs(grad.flat[i] - fd) / max(abs(fd), abs(grad.flat[i]), 1e-8))
    assert worst < 1e-5


def test_objective_nonpositive_at_max_reward_penalty(gen):
    X, actions, rewards, rho = small_logged(gen)
    policy = LinearSoftmaxPolicy(gen.normal(size=(3, 6)) * 0.5, FeatureMap.fit(X))
    value, _ = crm.crm_objective_grad(policy, X, actions, rewards, rho, (0, 1, 2),
                                      float(rewards.max()), 0.0)
    assert value <= 1e-12


def test_snips_invariant_to_weight_scaling(gen):
    X, actions, rewards, rho = small_logged(gen)
    policy = LinearSoftmaxPolicy(gen.normal(size=(3, 6)) * 0.3, FeatureMap.fit(X))
    s1, v1 = crm._snips(policy, X, actions, rewards, rho)
    s2, v2 = crm._snips(policy, X, actions, rewards, rho * 2.0)
    assert abs(v1 - v2) < 1e-12
    assert abs(s1 - 2.0 * s2) < 1e-12


def test_importance_weights_bounded_by_clip(sim_data):
    _, ds = sim_data
    model = crm.fit_propensity(ds, clip_epsilon=0.02)
    tr = ds.split("train")
    rho = model.clipped(tr.features)[np.arange(tr.n), tr.actions - 1]
    weights = 1.0 / rho  # any policy's weight is pi/rho <= 1/rho
    assert weights.max() <= 1.0 / 0.02 + 1e-9


def test_degenerate_rewards_return_first_lambda(gen):
    X = gen.normal(size=(80, 4))
    actions = gen.integers(1, 4, size=80)
    rewards = np.full(80, 0.4)
    ds = simgen.BanditDataset(X, actions, rewards, None, np.array(["train"] * 80), 3)
    sched = allocate.CostSchedule((0.0, 0.0, 0.0), 0.0)
    cfg = CrmConfig(policy_iterations=20)
    solution, diagnostics = crm.run_crm_baseline(ds, sched, lambda_grid=[0.0, 0.2, 0.4], cfg=cfg)
    assert all(abs(d.snips - 0.4) < 1e-9 for d in diagnostics)
    assert solution.lambda_star == 0.0


def test_baseline_feasibility_and_diagnostics(sim_data, gen):
    gt, ds = sim_data
    test_X = gen.uniform(0, 10, size=(300, 50))
    sched = allocate.CostSchedule((1, 2, 3, 4, 5), 3.0)
    cfg = CrmConfig(policy_iterations=60)
    solution, diagnostics = crm.run_crm_baseline(ds, sched, lambda_grid=np.linspace(0, 1, 4), cfg=cfg)
    assert solution.avg_cost <= 3.0 + 1e-6
    assert len(diagnostics) == 4
    for d in diagnostics:
        assert np.isfinite(d.s_value) and d.s_value > 0
        assert d.avg_cost <= 3.0 + 1e-6
    # explicit evaluation rows
    solution2, _ = crm.run_crm_baseline(ds, sched, lambda_grid=[0.5], cfg=cfg, eval_X=test_X)
    assert solution2.assignment.shape == (300,)
    assert (np.array(sched.costs)[solution2.assignment - 1].mean()) <= 3.0 + 1e-6


def test_baseline_infeasible_budget(sim_data):
    _, ds = sim_data
    with pytest.raises(allocate.InfeasibleBudget):
        crm.run_crm_baseline(ds, allocate.CostSchedule((1, 2, 3, 4, 5), 0.5),
                             lambda_grid=[0.0], cfg=CrmConfig(policy_iterations=5))


def test_eta_increase_never_raises_expected_cost(gen):
    # Deterministic full-batch training: the stochastic policy's expected
    # cost is nonincreasing along increasing eta.
    X, actions, rewards, rho = small_logged(gen, n=120, d=4, K=3)
    fmap = FeatureMap.fit(X)
    costs = np.array([0.0, 1.0, 2.0])
    cfg = CrmConfig(policy_iterations=80)
    prev = np.inf
    for eta in (0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0):
        policy = crm._train_policy(X, actions, rewards, rho, costs, 0.0, eta, cfg, fmap)
        cost = crm.expected_policy_cost(policy, X, costs)
        assert cost <= prev + 1e-9
        prev = cost
