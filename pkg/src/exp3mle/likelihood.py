"""Truncation rules and log-likelihood evaluation along observed arms.

Likelihoods replay the probability path a candidate rate would have
produced along the observed arm sequence and sum the log-probabilities at
the observed arms.  Truncation keeps the sum over the prefix where every
candidate's probabilities provably (or empirically) stay above a threshold,
which is both where the observations are informative and where the
computation cannot blow up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import RateBounds, Trajectory, _softmax_row
from .errors import DomainError
from .validation import check_integer_at_least, check_open_unit, check_positive

#: Sentinel value for a likelihood that touched a zero probability.  It
#: compares below every finite float, so optimizers rank it deterministically
#: without raising.
NEG_INFINITY = float("-inf")


@dataclass(frozen=True)
class TruncationConfig:
    """Parameters of the empirical truncation rule."""

    epsilon: float
    alpha: float
    bounds: RateBounds
    grid_points: int = 50

    def __post_init__(self):
        object.__setattr__(self, "epsilon", check_open_unit("epsilon", self.epsilon))
        object.__setattr__(self, "alpha", check_open_unit("alpha", self.alpha))
        object.__setattr__(
            self, "grid_points", check_integer_at_least("grid_points", self.grid_points, 2)
        )


@dataclass(frozen=True)
class LikelihoodValue:
    """A log-likelihood together with how many steps were actually summed.

    ``value`` is :data:`NEG_INFINITY` exactly when some visited probability
    was 0 in machine arithmetic at an observed arm; ``evaluated_steps`` then
    counts the finite terms accumulated before the zero.
    """

    value: float
    evaluated_steps: int

    @property
    def is_neg_infinity(self) -> bool:
        return self.value == NEG_INFINITY


def truncation_horizon(k: int, epsilon: float, alpha: float, r_upper: float, n: int) -> int:
    """The guaranteed truncation term: floor((1/k - epsilon) * n**alpha / r_upper).

    Up to this step, every replayed probability stays at or above ``epsilon``
    for every base rate in the box, for horizons past (r_upper/epsilon^2)^(1/alpha).
    """
    k = check_integer_at_least("k", k, 2)
    epsilon = check_open_unit("epsilon", epsilon)
    if epsilon >= 1.0 / k:
        raise DomainError(f"epsilon must be below 1/k = {1.0 / k}")
    alpha = check_open_unit("alpha", alpha)
    r_upper = check_positive("r_upper", r_upper)
    n = check_integer_at_least("n", n, 1)
    return int(math.floor((1.0 / k - epsilon) * float(n) ** alpha / r_upper))


def _first_breach(losses, eta, arms, epsilon, limit):
    """1-based index of the first step whose policy row has an entry <= epsilon,
    scanning at most ``limit`` steps; None if no breach in range."""
    k = len(losses)
    cum = [0.0] * k
    row = [1.0 / k] * k
    for t in range(limit):
        if min(row) <= epsilon:
            return t + 1
        a = arms[t] - 1
        pa = row[a]
        if pa == 0.0:
            # The zero itself breached the threshold at this row already.
            return t + 1
        est = losses[a] / pa
        if est != 0.0:
            cum[a] += est
            row = _softmax_row(cum, eta)
    return None


def empirical_truncation_horizon(trajectory: Trajectory, config: TruncationConfig) -> int:
    """Last step up to which every grid-replayed probability stays strictly
    above the threshold.

    Builds ``grid_points`` equally spaced resolved rates spanning the box
    (endpoints included), replays each along the observed arms, and returns
    the largest t such that all replayed probabilities at steps 1..t exceed
    ``epsilon`` for every grid rate and every arm.  Returns 0 when even the
    uniform first row fails.
    """
    spec = trajectory.spec
    if config.epsilon >= 1.0 / spec.k:
        return 0
    n = trajectory.n
    scale = spec.max_loss * float(n) ** config.alpha
    rates = np.linspace(config.bounds.lower / scale, config.bounds.upper / scale, config.grid_points)
    arms = trajectory.arms.tolist()
    best = n
    for eta in rates:
        breach = _first_breach(spec.losses, float(eta), arms, config.epsilon, best)
        if breach is not None:
            best = breach - 1
            if best == 0:
                return 0
    return best


def _replay_log_likelihood(losses, eta, arms, steps) -> LikelihoodValue:
    k = len(losses)
    cum = [0.0] * k
    row = [1.0 / k] * k
    total = 0.0
    for t in range(steps):
        a = arms[t] - 1
        pa = row[a]
        if pa == 0.0:
            return LikelihoodValue(value=NEG_INFINITY, evaluated_steps=t)
        total += math.log(pa)
        if t + 1 < steps:
            est = losses[a] / pa
            if est != 0.0:
                cum[a] += est
                row = _softmax_row(cum, eta)
    return LikelihoodValue(value=total, evaluated_steps=steps)


def truncated_log_likelihood(
    trajectory: Trajectory, delta0: float, alpha: float, pi1: float, upsilon: int
) -> LikelihoodValue:
    """Log-likelihood of the observed arms under base rate ``delta0``, summed
    over the first ``upsilon`` steps.

    The candidate resolves to delta0 / (n**alpha * pi1) and the path is
    replayed under it.  A zero probability at an observed arm yields the
    :data:`NEG_INFINITY` sentinel, not an exception.
    """
    delta0 = check_positive("delta0", delta0)
    alpha = check_open_unit("alpha", alpha)
    pi1 = check_positive("pi1", pi1)
    upsilon = check_integer_at_least("upsilon", upsilon, 0)
    if upsilon > trajectory.n:
        raise DomainError("upsilon exceeds the trajectory horizon")
    eta = delta0 / (float(trajectory.n) ** alpha * pi1)
    return _replay_log_likelihood(trajectory.spec.losses, eta, trajectory.arms.tolist(), upsilon)


def full_log_likelihood(trajectory: Trajectory, delta: float) -> LikelihoodValue:
    """Untruncated log-likelihood under a constant candidate rate.

    Expect the sentinel for large candidates: their replayed probabilities
    go numerically to zero while the observed learner keeps visiting the
    corresponding arms.
    """
    delta = check_positive("delta", delta)
    return _replay_log_likelihood(
        trajectory.spec.losses, delta, trajectory.arms.tolist(), trajectory.n
    )
