"""Maximum-likelihood estimation of the learning rate.

The objective is a replayed log-likelihood whose derivatives are awkward
(the path is defined by a recursion in the rate), so maximization is
derivative-free: a small rand/1/bin differential-evolution loop on a
one-dimensional box.  The sentinel value for impossible likelihoods ranks
below every finite value, so the optimizer handles it without special
cases.

Two entry points mirror the two regimes: :func:`mle_constant` maximizes the
full log-likelihood of a constant rate, :func:`mle_truncated` maximizes the
truncated log-likelihood of the decreasing-rate parameterization over its
box.  :class:`ConstantRateMLE` and :class:`TruncatedRateMLE` wrap them in a
scikit-learn style fit API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .core import RateBounds, Trajectory, probability_path, ConstantRate
from .errors import AllNegInfinity, DomainError
from .likelihood import (
    TruncationConfig,
    empirical_truncation_horizon,
    full_log_likelihood,
    truncated_log_likelihood,
    truncation_horizon,
)
from .validation import check_integer_at_least, check_positive

_STAGNATION_SPAN = 10  # generations of sub-tolerance improvement before stopping
_BOUNDARY_RTOL = 1e-9


@dataclass(frozen=True)
class OptimizerConfig:
    """Differential-evolution settings.

    Defaults are the reference defaults of the rand/1/bin family with the
    iteration budget capped at 50.  ``tolerance`` is the stagnation
    threshold on the best value; 0 disables early stopping.
    """

    population_size: int = 20
    max_iterations: int = 50
    crossover_rate: float = 0.9
    differential_weight: float = 0.8
    seed: int = 0
    tolerance: float = 1e-10

    def __post_init__(self):
        check_integer_at_least("population_size", self.population_size, 4)
        check_integer_at_least("max_iterations", self.max_iterations, 1)
        if not (0.0 <= self.crossover_rate <= 1.0):
            raise DomainError("crossover_rate must lie in [0, 1]")
        if not (0.0 < self.differential_weight < 2.0):
            raise DomainError("differential_weight must lie in (0, 2)")
        if self.tolerance < 0.0:
            raise DomainError("tolerance must be nonnegative")


@dataclass(frozen=True)
class DEResult:
    """Best point found by the optimizer and bookkeeping about the run."""

    x: float
    value: float
    iterations: int
    evaluations: int
    saw_neg_infinity: bool


@dataclass(frozen=True)
class EstimationResult:
    """Outcome of a rate fit.

    ``eta0_hat`` is the maximizer in base-rate space (for the constant case
    it is the rate itself); ``eta_n_hat`` is the resolved per-step rate.
    ``objective`` equals re-evaluating the likelihood at ``eta0_hat``
    exactly.  ``hit_neg_infinity`` reports whether the optimizer ever saw
    the sentinel; ``hit_boundary`` whether the maximizer sits on the search
    box edge.
    """

    eta0_hat: float
    eta_n_hat: float
    objective: float
    iterations_used: int
    hit_neg_infinity: bool
    hit_boundary: bool = False
    upsilon_used: Optional[int] = None


def differential_evolution(
    objective: Callable[[float], float],
    lower: float,
    upper: float,
    config: OptimizerConfig,
) -> DEResult:
    """Maximize ``objective`` on [lower, upper] with rand/1/bin differential
    evolution.

    Deterministic given ``config.seed``.  The objective may return the
    -inf sentinel, which ranks below every finite value; NaN violates the
    contract and raises.  Ties on the best value are broken by first found.
    With a single decision variable, binomial crossover always inherits the
    mutant coordinate, so ``crossover_rate`` is inert here.

    Raises :class:`AllNegInfinity` if no finite value was ever observed.
    """
    lower = float(lower)
    upper = float(upper)
    if not (math.isfinite(lower) and math.isfinite(upper)) or lower > upper:
        raise DomainError("need finite bounds with lower <= upper")

    ps = config.population_size
    weight = config.differential_weight
    rng = np.random.Generator(np.random.PCG64(config.seed))

    def evaluate(x: float) -> float:
        v = float(objective(x))
        if math.isnan(v):
            raise DomainError(f"objective returned NaN at {x}")
        return v

    pop = (lower + rng.random(ps) * (upper - lower)).tolist()
    vals = [evaluate(x) for x in pop]
    evaluations = ps
    saw_neg_inf = any(v == -math.inf for v in vals)

    best_x = pop[0]
    best_val = vals[0]
    for x, v in zip(pop[1:], vals[1:]):
        if v > best_val:
            best_x, best_val = x, v

    iterations = 0
    stagnant = 0
    for _ in range(config.max_iterations):
        iterations += 1
        gen_start_best = best_val
        for i in range(ps):
            picks = rng.choice(ps - 1, size=3, replace=False)
            a, b, c = (int(j) + (j >= i) for j in picks)
            trial = pop[a] + weight * (pop[b] - pop[c])
            if trial < lower:
                trial = lower
            elif trial > upper:
                trial = upper
            tv = evaluate(trial)
            evaluations += 1
            if tv == -math.inf:
                saw_neg_inf = True
            if tv >= vals[i]:
                pop[i] = trial
                vals[i] = tv
            if tv > best_val:
                best_x, best_val = trial, tv
        if config.tolerance > 0.0:
            improvement = best_val - gen_start_best
            if best_val > -math.inf and improvement < config.tolerance:
                stagnant += 1
                if stagnant >= _STAGNATION_SPAN:
                    break
            else:
                stagnant = 0

    if best_val == -math.inf:
        raise AllNegInfinity("every objective evaluation returned the -inf sentinel")
    return DEResult(
        x=best_x,
        value=best_val,
        iterations=iterations,
        evaluations=evaluations,
        saw_neg_infinity=saw_neg_inf,
    )


def _on_boundary(x: float, lower: float, upper: float) -> bool:
    span = max(upper - lower, abs(upper), 1e-30)
    return abs(x - lower) <= _BOUNDARY_RTOL * span or abs(x - upper) <= _BOUNDARY_RTOL * span


def mle_constant(
    trajectory: Trajectory, lower: float, upper: float, config: OptimizerConfig
) -> EstimationResult:
    """Maximize the full log-likelihood of a constant rate over [lower, upper]."""
    lower = check_positive("lower", lower)
    upper = check_positive("upper", upper)

    def objective(delta: float) -> float:
        return full_log_likelihood(trajectory, delta).value

    res = differential_evolution(objective, lower, upper, config)
    return EstimationResult(
        eta0_hat=res.x,
        eta_n_hat=res.x,
        objective=res.value,
        iterations_used=res.iterations,
        hit_neg_infinity=res.saw_neg_infinity,
        hit_boundary=_on_boundary(res.x, lower, upper),
    )


def mle_truncated(
    trajectory: Trajectory,
    theta: RateBounds,
    alpha: float,
    epsilon: float,
    truncation: str,
    config: OptimizerConfig,
    grid_points: int = 50,
) -> EstimationResult:
    """Maximize the truncated log-likelihood over the base-rate box.

    ``truncation`` picks the horizon: ``"theory"`` uses the guaranteed term,
    ``"empirical"`` the grid-replayed one.  The search runs in base-rate
    space so the box does not depend on the horizon; the resolved per-step
    estimate is returned alongside.

    Intended for trajectories generated under the decreasing-rate regime
    with a true base rate inside the box.
    """
    if truncation == "theory":
        upsilon = truncation_horizon(trajectory.spec.k, epsilon, alpha, theta.upper, trajectory.n)
    elif truncation == "empirical":
        tc = TruncationConfig(epsilon=epsilon, alpha=alpha, bounds=theta, grid_points=grid_points)
        upsilon = empirical_truncation_horizon(trajectory, tc)
    else:
        raise DomainError(f"truncation must be 'theory' or 'empirical', got {truncation!r}")

    pi1 = trajectory.spec.max_loss

    def objective(delta0: float) -> float:
        return truncated_log_likelihood(trajectory, delta0, alpha, pi1, upsilon).value

    res = differential_evolution(objective, theta.lower, theta.upper, config)
    scale = float(trajectory.n) ** alpha * pi1
    return EstimationResult(
        eta0_hat=res.x,
        eta_n_hat=res.x / scale,
        objective=res.value,
        iterations_used=res.iterations,
        hit_neg_infinity=res.saw_neg_infinity,
        hit_boundary=_on_boundary(res.x, theta.lower, theta.upper),
        upsilon_used=upsilon,
    )


class ConstantRateMLE(BaseEstimator):
    """Scikit-learn style estimator of a constant learning rate.

    Parameters
    ----------
    lower, upper : float
        Search interval for the rate.
    population_size, max_iterations, crossover_rate, differential_weight,
    tolerance, seed :
        Optimizer settings, see :class:`OptimizerConfig`.

    Attributes
    ----------
    rate_ : float
        The maximum-likelihood rate.
    objective_ : float
        Log-likelihood at ``rate_``.
    n_iter_ : int
        Optimizer generations used.
    result_ : EstimationResult
        Full fit record.
    """

    def __init__(
        self,
        lower: float = 0.1,
        upper: float = 0.8,
        population_size: int = 20,
        max_iterations: int = 50,
        crossover_rate: float = 0.9,
        differential_weight: float = 0.8,
        tolerance: float = 1e-10,
        seed: int = 0,
    ):
        self.lower = lower
        self.upper = upper
        self.population_size = population_size
        self.max_iterations = max_iterations
        self.crossover_rate = crossover_rate
        self.differential_weight = differential_weight
        self.tolerance = tolerance
        self.seed = seed

    def _optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            population_size=self.population_size,
            max_iterations=self.max_iterations,
            crossover_rate=self.crossover_rate,
            differential_weight=self.differential_weight,
            seed=self.seed,
            tolerance=self.tolerance,
        )

    def fit(self, X: Trajectory, y=None):
        if not isinstance(X, Trajectory):
            raise DomainError("X must be a Trajectory")
        result = mle_constant(X, self.lower, self.upper, self._optimizer_config())
        self.result_ = result
        self.rate_ = result.eta0_hat
        self.objective_ = result.objective
        self.n_iter_ = result.iterations_used
        return self

    def _check_fitted(self):
        if not hasattr(self, "rate_"):
            raise NotFittedError("call fit before using this estimator")

    def score(self, X: Trajectory, y=None) -> float:
        """Full log-likelihood of the fitted rate along another trajectory."""
        self._check_fitted()
        return full_log_likelihood(X, self.rate_).value

    def predict_proba(self, X: Trajectory, horizon: int | None = None) -> np.ndarray:
        """Replayed probability path under the fitted rate along X's arms."""
        self._check_fitted()
        return probability_path(X.spec, ConstantRate(self.rate_), X.arms, horizon=horizon).probs


class TruncatedRateMLE(BaseEstimator):
    """Scikit-learn style estimator for the decreasing-rate regime.

    Parameters
    ----------
    theta : tuple of (float, float)
        Base-rate search box.
    alpha : float
        Schedule exponent in (0, 1).
    epsilon : float
        Truncation threshold in (0, 1/k).
    truncation : {"empirical", "theory"}
        Which truncation horizon to use.
    grid_points : int
        Grid size for the empirical horizon.

    Attributes
    ----------
    eta0_ : float
        Estimated base rate.
    eta_n_ : float
        Resolved per-step rate at the fitted trajectory's horizon.
    upsilon_ : int
        Truncation horizon used.
    objective_ : float
        Truncated log-likelihood at ``eta0_``.
    """

    def __init__(
        self,
        theta=(0.1, 0.8),
        alpha: float = 0.5,
        epsilon: float = 1e-7,
        truncation: str = "empirical",
        grid_points: int = 50,
        population_size: int = 20,
        max_iterations: int = 50,
        crossover_rate: float = 0.9,
        differential_weight: float = 0.8,
        tolerance: float = 1e-10,
        seed: int = 0,
    ):
        self.theta = theta
        self.alpha = alpha
        self.epsilon = epsilon
        self.truncation = truncation
        self.grid_points = grid_points
        self.population_size = population_size
        self.max_iterations = max_iterations
        self.crossover_rate = crossover_rate
        self.differential_weight = differential_weight
        self.tolerance = tolerance
        self.seed = seed

    def fit(self, X: Trajectory, y=None):
        if not isinstance(X, Trajectory):
            raise DomainError("X must be a Trajectory")
        bounds = RateBounds(lower=self.theta[0], upper=self.theta[1])
        config = OptimizerConfig(
            population_size=self.population_size,
            max_iterations=self.max_iterations,
            crossover_rate=self.crossover_rate,
            differential_weight=self.differential_weight,
            seed=self.seed,
            tolerance=self.tolerance,
        )
        result = mle_truncated(
            X, bounds, self.alpha, self.epsilon, self.truncation, config,
            grid_points=self.grid_points,
        )
        self.result_ = result
        self.eta0_ = result.eta0_hat
        self.eta_n_ = result.eta_n_hat
        self.upsilon_ = result.upsilon_used
        self.objective_ = result.objective
        return self

    def _check_fitted(self):
        if not hasattr(self, "eta0_"):
            raise NotFittedError("call fit before using this estimator")

    def score(self, X: Trajectory, y=None) -> float:
        """Truncated log-likelihood of the fitted base rate along X's arms."""
        self._check_fitted()
        pi1 = X.spec.max_loss
        bounds = RateBounds(lower=self.theta[0], upper=self.theta[1])
        if self.truncation == "theory":
            upsilon = truncation_horizon(X.spec.k, self.epsilon, self.alpha, bounds.upper, X.n)
        else:
            tc = TruncationConfig(
                epsilon=self.epsilon, alpha=self.alpha, bounds=bounds, grid_points=self.grid_points
            )
            upsilon = empirical_truncation_horizon(X, tc)
        return truncated_log_likelihood(X, self.eta0_, self.alpha, pi1, upsilon).value

    def predict_proba(self, X: Trajectory, horizon: int | None = None) -> np.ndarray:
        """Replayed path under the fitted rate resolved at X's horizon.

        Past the truncation window the replay may hit a dead probability at
        an observed arm and raise; pass ``horizon=self.upsilon_`` to stay in
        the window the fit actually used.
        """
        self._check_fitted()
        rate = self.eta0_ / (float(X.n) ** self.alpha * X.spec.max_loss)
        return probability_path(X.spec, ConstantRate(rate), X.arms, horizon=horizon).probs
