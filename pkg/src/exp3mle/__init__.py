"""Simulation of exponential-weights bandit learners and maximum-likelihood
estimation of their learning rate, with the numerical analysis that explains
when that estimation can and cannot work."""

from .core import (
    BanditSpec,
    ConstantRate,
    PolynomialRate,
    ProbabilityPath,
    RateBounds,
    Trajectory,
    importance_loss,
    initial_policy,
    probability_path,
    simulate,
    softmax_update,
)
from .errors import (
    AllNegInfinity,
    BracketNotFound,
    DegenerateInput,
    DomainError,
    EmptyInput,
    Exp3MLEError,
    NonFiniteInput,
    ReplayCollapse,
    SimulationCollapse,
    ZeroProbabilityPull,
)
from .estimator import (
    ConstantRateMLE,
    DEResult,
    EstimationResult,
    OptimizerConfig,
    TruncatedRateMLE,
    differential_evolution,
    mle_constant,
    mle_truncated,
)
from .experiments import (
    EstimationBound,
    ExperimentConfig,
    ExperimentRecord,
    ExperimentReport,
    PATH_LIPSCHITZ_CONSTANT,
    derive_seed,
    estimation_error_bound,
    likelihood_curve,
    prediction_error,
    prediction_error_bound,
    quantile,
    rate_regression,
    run_experiment,
    spearman_test,
    squared_gap_lower_margin,
)
from .likelihood import (
    NEG_INFINITY,
    LikelihoodValue,
    TruncationConfig,
    empirical_truncation_horizon,
    full_log_likelihood,
    truncated_log_likelihood,
    truncation_horizon,
)
from .two_arm import (
    KLResult,
    PullSequence,
    TetrationMargin,
    hard_pair,
    horizon_index,
    informative_index,
    kl_exact,
    kl_monte_carlo,
    log_star,
    pull_sequence,
    tetration_margins,
)

__version__ = "0.1.0"

__all__ = [
    "AllNegInfinity",
    "BanditSpec",
    "BracketNotFound",
    "ConstantRate",
    "ConstantRateMLE",
    "DEResult",
    "DegenerateInput",
    "DomainError",
    "EmptyInput",
    "EstimationBound",
    "EstimationResult",
    "Exp3MLEError",
    "ExperimentConfig",
    "ExperimentRecord",
    "ExperimentReport",
    "KLResult",
    "LikelihoodValue",
    "NEG_INFINITY",
    "NonFiniteInput",
    "OptimizerConfig",
    "PATH_LIPSCHITZ_CONSTANT",
    "PolynomialRate",
    "ProbabilityPath",
    "PullSequence",
    "RateBounds",
    "ReplayCollapse",
    "SimulationCollapse",
    "TetrationMargin",
    "Trajectory",
    "TruncatedRateMLE",
    "TruncationConfig",
    "ZeroProbabilityPull",
    "derive_seed",
    "differential_evolution",
    "empirical_truncation_horizon",
    "estimation_error_bound",
    "full_log_likelihood",
    "hard_pair",
    "horizon_index",
    "importance_loss",
    "informative_index",
    "initial_policy",
    "kl_exact",
    "kl_monte_carlo",
    "likelihood_curve",
    "log_star",
    "mle_constant",
    "mle_truncated",
    "prediction_error",
    "prediction_error_bound",
    "probability_path",
    "pull_sequence",
    "quantile",
    "rate_regression",
    "run_experiment",
    "simulate",
    "softmax_update",
    "spearman_test",
    "squared_gap_lower_margin",
    "tetration_margins",
    "truncated_log_likelihood",
    "truncation_horizon",
]
