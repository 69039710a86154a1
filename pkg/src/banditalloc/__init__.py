"""Budget-constrained incentive allocation from logged bandit feedback.

Modules: ``simgen`` (synthetic environments with reward oracles),
``kernels`` (Gram matrices, the dependence penalty and its gradient),
``reward_model`` (monotone/unstructured response estimation),
``allocate`` (Lagrangian and exact dynamic-programming solvers),
``crm`` (self-normalized importance-sampling baseline),
``isotonic`` (monotone least squares and the rate experiment),
``benchmark`` (metrics and the seeded benchmark runner),
``dataio`` (CSV/JSON serialization), ``cli`` (command line).
"""

from .allocate import CostSchedule, PolicySolution, brute_force_allocate, dp_allocate, greedy_for_lambda, lagrangian_search
from .benchmark import BenchmarkResult, BenchmarkSpec, expected_true_reward, pehe, rmse_reward, run_benchmark, summarize
from .crm import CrmConfig, LinearSoftmaxPolicy, PropensityModel, crm_objective_grad, fit_propensity, run_crm_baseline
from .isotonic import RateConfig, ls_constant_fit, ls_monotone_fit, pava, rate_experiment
from .kernels import KernelSpec, gram, hsic_gradient_z, hsic_vstat, mmd_squared_biased, one_hot_encode
from .reward_model import (KappaSelection, RewardModel, RewardModelConfig, init_model, loss_and_grad,
                           load_model, predict_all, predict_reward, save_model, select_kappa, train)
from .simgen import (BanditDataset, GroundTruth, NestedSimConfig, h_eval, logging_prob, logging_probs,
                     sample_ground_truth, simulate_binary_dataset, simulate_dataset,
                     simulate_nested_dataset, true_reward, true_reward_matrix)

__version__ = "0.1.0"
