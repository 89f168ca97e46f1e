"""Exponential-weights bandit simulation and deterministic path replay.

The simulator draws arms from a softmax over importance-weighted cumulative
loss estimates.  The same update kernel replays the probability path for any
candidate learning rate along a fixed, observed arm sequence, which is what
the likelihood machinery needs.

Reproducibility: arm draws use a ``numpy`` PCG64 generator seeded per
trajectory, with one uniform per step consumed by inverse-CDF sampling over
the current policy.  Ties at cumulative boundaries resolve toward the lower
arm index.  Identical seed and configuration give bit-identical trajectories
on any platform with IEEE-754 doubles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import (
    DomainError,
    NonFiniteInput,
    ReplayCollapse,
    SimulationCollapse,
    ZeroProbabilityPull,
)
from .validation import (
    check_arm_indices,
    check_integer_at_least,
    check_nonnegative,
    check_open_unit,
    check_positive,
)

ROW_SUM_TOLERANCE = 1e-12


@dataclass(frozen=True)
class BanditSpec:
    """A fixed-loss bandit: arm count and per-arm losses.

    Losses must be sorted in non-increasing order inside [0, 1], so the
    first entry is the largest loss.  Unsorted input is rejected rather
    than silently reordered, keeping the meaning of ``losses[0]`` explicit.
    """

    losses: tuple

    def __post_init__(self):
        losses = tuple(float(x) for x in self.losses)
        if len(losses) < 2:
            raise DomainError("a bandit needs at least 2 arms")
        for x in losses:
            if not math.isfinite(x) or not (0.0 <= x <= 1.0):
                raise DomainError(f"losses must lie in [0, 1], got {x!r}")
        for a, b in zip(losses, losses[1:]):
            if a < b:
                raise DomainError("losses must be sorted in non-increasing order")
        object.__setattr__(self, "losses", losses)

    @property
    def k(self) -> int:
        return len(self.losses)

    @property
    def max_loss(self) -> float:
        return self.losses[0]

    def to_dict(self) -> dict:
        return {"losses": list(self.losses)}

    @classmethod
    def from_dict(cls, data: dict) -> "BanditSpec":
        return cls(losses=tuple(data["losses"]))


@dataclass(frozen=True)
class ConstantRate:
    """A learning rate that does not depend on the horizon.

    ``eta == 0`` is allowed: it freezes the policy at uniform, which the
    replay contract relies on as a fixpoint.
    """

    eta: float

    def __post_init__(self):
        object.__setattr__(self, "eta", check_nonnegative("eta", self.eta))

    def resolve(self, n: int, pi1: float) -> float:
        return self.eta

    def to_dict(self) -> dict:
        return {"kind": "constant", "eta": self.eta}


@dataclass(frozen=True)
class PolynomialRate:
    """The decreasing-rate regime: rate eta0 / (n**alpha * pi1) at horizon n."""

    eta0: float
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "eta0", check_positive("eta0", self.eta0))
        object.__setattr__(self, "alpha", check_open_unit("alpha", self.alpha))

    def resolve(self, n: int, pi1: float) -> float:
        return self.eta0 / (float(n) ** self.alpha * pi1)

    def to_dict(self) -> dict:
        return {"kind": "polynomial", "eta0": self.eta0, "alpha": self.alpha}


RateSchedule = Union[ConstantRate, PolynomialRate]


def schedule_from_dict(data: dict) -> RateSchedule:
    kind = data.get("kind")
    if kind == "constant":
        return ConstantRate(eta=data["eta"])
    if kind == "polynomial":
        return PolynomialRate(eta0=data["eta0"], alpha=data["alpha"])
    raise DomainError(f"unknown schedule kind {kind!r}")


@dataclass(frozen=True)
class RateBounds:
    """Closed search box [lower, upper] for the base learning rate.

    A degenerate box (lower == upper) is accepted; it pins the search to a
    single point, which some diagnostics use.
    """

    lower: float
    upper: float

    def __post_init__(self):
        lower = check_positive("lower", self.lower)
        upper = check_positive("upper", self.upper)
        if lower > upper:
            raise DomainError(f"need lower <= upper, got ({lower}, {upper})")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper}


@dataclass(eq=False)
class Trajectory:
    """An observed run: configuration, 1-based arm choices, and the realized
    probability path under the generating rate.

    ``true_path[t - 1]`` is the policy from which arm ``t`` was drawn.
    Replaying :func:`probability_path` with the generating schedule along
    ``arms`` reproduces ``true_path`` bit-exactly.
    """

    spec: BanditSpec
    schedule: RateSchedule
    n: int
    seed: int
    arms: np.ndarray
    true_path: np.ndarray

    def __post_init__(self):
        self.n = check_integer_at_least("n", self.n, 1)
        self.arms = check_arm_indices("arms", self.arms, self.spec.k)
        if self.arms.shape != (self.n,):
            raise DomainError("arms must have length n")
        path = np.asarray(self.true_path, dtype=float)
        if path.shape != (self.n, self.spec.k):
            raise DomainError("true_path must have shape (n, k)")
        _check_rows_stochastic(path)
        self.true_path = path

    @property
    def rate(self) -> float:
        """The resolved per-step learning rate of the generating schedule."""
        return self.schedule.resolve(self.n, self.spec.max_loss)

    def to_dict(self) -> dict:
        """JSON form; probability paths are recomputed, never stored."""
        return {
            "spec": self.spec.to_dict(),
            "schedule": self.schedule.to_dict(),
            "n": self.n,
            "seed": self.seed,
            "arms": [int(a) for a in self.arms],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Trajectory":
        spec = BanditSpec.from_dict(data["spec"])
        schedule = schedule_from_dict(data["schedule"])
        arms = check_arm_indices("arms", data["arms"], spec.k)
        n = check_integer_at_least("n", data["n"], 1)
        if len(arms) != n:
            raise DomainError("arms must have length n")
        path = probability_path(spec, schedule, arms, horizon=n)
        return cls(
            spec=spec,
            schedule=schedule,
            n=n,
            seed=int(data["seed"]),
            arms=arms,
            true_path=path.probs,
        )


@dataclass(eq=False)
class ProbabilityPath:
    """A replayed probability path and the cumulative loss estimates behind it.

    Row ``t - 1`` of ``probs`` is the policy at step ``t``; the matching row
    of ``cum_loss_est`` is the loss-estimate vector it was computed from,
    which is all-zero at ``t = 1``.
    """

    probs: np.ndarray
    cum_loss_est: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        self.cum_loss_est = np.asarray(self.cum_loss_est, dtype=float)
        if self.probs.shape != self.cum_loss_est.shape:
            raise DomainError("probs and cum_loss_est must have matching shapes")
        _check_rows_stochastic(self.probs)
        if self.probs.shape[0] > 0 and np.any(self.cum_loss_est[0] != 0.0):
            raise DomainError("cumulative loss estimates must start at zero")


def _check_rows_stochastic(path: np.ndarray) -> None:
    if np.any(path < 0.0):
        raise DomainError("probability rows must be nonnegative")
    sums = path.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > ROW_SUM_TOLERANCE):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise DomainError(f"probability rows must sum to 1 within {ROW_SUM_TOLERANCE}, off by {worst}")


def _softmax_row(cum_losses: list, eta: float) -> list:
    # Log-space with max subtraction: exponents are <= 0, so the sum is >= 1
    # and nothing overflows.  Entries may underflow to exactly 0; that is
    # deliberate and observable upstream.
    m = min(cum_losses)
    row = [math.exp(-eta * (v - m)) for v in cum_losses]
    total = 0.0
    for w in row:
        total += w
    return [w / total for w in row]


def initial_policy(spec: BanditSpec) -> np.ndarray:
    """Uniform policy over the arms."""
    return np.full(spec.k, 1.0 / spec.k)


def softmax_update(cum_loss_est: Sequence[float], eta: float) -> np.ndarray:
    """Policy proportional to exp(-eta * cumulative loss estimate), computed
    in log space with max subtraction so no intermediate overflows.

    Entries may underflow to exactly 0 in extreme regimes; they are reported
    as-is, never clamped.
    """
    arr = np.asarray(cum_loss_est, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError("cum_loss_est must be a non-empty vector")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("cumulative loss estimates must be finite")
    eta = check_nonnegative("eta", eta)
    return np.array(_softmax_row(arr.tolist(), eta))


def importance_loss(spec: BanditSpec, policy: Sequence[float], chosen: int) -> np.ndarray:
    """Importance-weighted loss estimate: loss/probability at the chosen arm,
    zero elsewhere.  ``chosen`` is 1-based."""
    p = np.asarray(policy, dtype=float)
    if p.shape != (spec.k,):
        raise DomainError("policy must have one entry per arm")
    chosen = check_integer_at_least("chosen", chosen, 1)
    if chosen > spec.k:
        raise DomainError(f"chosen must lie in 1..{spec.k}")
    pa = p[chosen - 1]
    if pa == 0.0:
        raise ZeroProbabilityPull(f"arm {chosen} has probability exactly 0")
    out = np.zeros(spec.k)
    out[chosen - 1] = spec.losses[chosen - 1] / pa
    return out


def simulate(spec: BanditSpec, schedule: RateSchedule, n: int, seed: int) -> Trajectory:
    """Run the exponential-weights learner for ``n`` steps.

    Deterministic given ``seed``.  Raises :class:`SimulationCollapse` if a
    drawn arm carries probability exactly 0, the machine-arithmetic failure
    mode of the plain update formula.
    """
    n = check_integer_at_least("n", n, 1)
    eta = schedule.resolve(n, spec.max_loss)
    losses = spec.losses
    k = spec.k

    rng = np.random.Generator(np.random.PCG64(seed))
    uniforms = rng.random(n).tolist()

    cum = [0.0] * k
    row = [1.0 / k] * k
    rows = []
    arms = []
    for t in range(n):
        rows.append(row)
        u = uniforms[t]
        acc = 0.0
        a = k - 1
        for i in range(k):
            acc += row[i]
            if u <= acc:
                a = i
                break
        if row[a] == 0.0:
            raise SimulationCollapse(t + 1)
        arms.append(a + 1)
        if t + 1 < n:
            est = losses[a] / row[a]
            if est != 0.0:
                cum[a] += est
                row = _softmax_row(cum, eta)

    return Trajectory(
        spec=spec,
        schedule=schedule,
        n=n,
        seed=int(seed),
        arms=np.array(arms, dtype=np.int64),
        true_path=np.array(rows, dtype=float),
    )


def probability_path(
    spec: BanditSpec,
    schedule: RateSchedule,
    arms: Sequence[int],
    horizon: int | None = None,
) -> ProbabilityPath:
    """Replay the policy path a candidate schedule would have produced along
    a fixed arm sequence.

    The loss estimates divide by the *candidate's* probabilities, not the
    probabilities that actually generated the arms.  Polynomial schedules
    resolve against ``len(arms)``.  Raises :class:`ReplayCollapse` if an
    observed arm's probability underflows to 0 before the horizon.
    """
    arms = check_arm_indices("arms", arms, spec.k)
    if horizon is None:
        horizon = len(arms)
    horizon = check_integer_at_least("horizon", horizon, 1)
    if horizon > len(arms):
        raise DomainError("horizon exceeds the observed arm sequence")
    eta = schedule.resolve(len(arms), spec.max_loss)
    losses = spec.losses
    k = spec.k
    arm_list = arms.tolist()

    cum = [0.0] * k
    row = [1.0 / k] * k
    rows = [row]
    cums = [list(cum)]
    for t in range(horizon - 1):
        a = arm_list[t] - 1
        pa = row[a]
        if pa == 0.0:
            raise ReplayCollapse(t + 1)
        est = losses[a] / pa
        if est != 0.0:
            cum[a] += est
            row = _softmax_row(cum, eta)
        rows.append(row)
        cums.append(list(cum))

    return ProbabilityPath(
        probs=np.array(rows, dtype=float),
        cum_loss_est=np.array(cums, dtype=float),
    )
