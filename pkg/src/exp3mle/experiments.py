"""Replication harness: error sweeps, quantile trends, and bound audits.

Runs batteries of simulate-then-estimate replicates over a grid of
horizons, aggregates 95% quantiles, tests their trend with a Spearman rank
test, fits power-law rate curves, and audits the probabilistic bounds
(prediction error, squared-gap lower bound, estimation-error ceiling)
empirically.  Everything is deterministic given the base seed, independent
of execution order or the number of worker processes.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata
from scipy.stats import t as t_dist

from .core import (
    BanditSpec,
    ConstantRate,
    PolynomialRate,
    RateBounds,
    Trajectory,
    probability_path,
    simulate,
)
from .errors import (
    AllNegInfinity,
    DegenerateInput,
    DomainError,
    EmptyInput,
    ReplayCollapse,
    SimulationCollapse,
)
from .estimator import OptimizerConfig, mle_constant, mle_truncated
from .likelihood import (
    TruncationConfig,
    empirical_truncation_horizon,
    full_log_likelihood,
    truncation_horizon,
)
from .validation import check_integer_at_least, check_nonnegative, check_positive

#: Numerical constant in the Lipschitz dependence of replayed paths on the
#: base rate: sup-norm path gaps stay below this constant times the relative
#: rate gap, inside the guaranteed truncation window.
PATH_LIPSCHITZ_CONSTANT = 11.0

QUANTILE_LEVEL = 0.95

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(base_seed: int, n: int, rep: int, stream: int = 0) -> int:
    """Stable per-record seed mix.

    Each (horizon, replicate, stream) gets its own 64-bit seed from the base
    seed, so extending the horizon grid or the replicate count never
    perturbs existing records.
    """
    z = _splitmix64(int(base_seed) & _MASK64)
    z = _splitmix64(z ^ _splitmix64(int(n)))
    z = _splitmix64(z ^ _splitmix64(int(rep)))
    z = _splitmix64(z ^ _splitmix64(int(stream)))
    return z


# ---------------------------------------------------------------------------
# statistics


def quantile(data: Sequence[float], q: float) -> float:
    """Linear-interpolation quantile (the type-7 convention)."""
    arr = np.asarray(data, dtype=float)
    if arr.size == 0:
        raise EmptyInput("quantile of empty data")
    if not (0.0 <= q <= 1.0):
        raise DomainError("q must lie in [0, 1]")
    return float(np.quantile(arr, q))


def _exact_permutation_p(rx: np.ndarray, ry: np.ndarray, rho: float, alternative: str) -> float:
    m = rx.size
    cx = rx - rx.mean()
    cy_norm = math.sqrt(float(np.sum((ry - ry.mean()) ** 2)))
    cx_norm = math.sqrt(float(np.sum(cx**2)))
    denom = cx_norm * cy_norm
    total = math.factorial(m)
    eps = 1e-12

    count = 0
    chunk = []
    chunk_size = 200_000

    def flush(block):
        nonlocal count
        perm = np.array(block)
        rhos = (perm - ry.mean()) @ cx / denom
        if alternative == "decreasing":
            count += int(np.sum(rhos <= rho + eps))
        elif alternative == "increasing":
            count += int(np.sum(rhos >= rho - eps))
        else:
            count += int(np.sum(np.abs(rhos) >= abs(rho) - eps))

    for p in itertools.permutations(ry.tolist()):
        chunk.append(p)
        if len(chunk) >= chunk_size:
            flush(chunk)
            chunk = []
    if chunk:
        flush(chunk)
    return count / total


def spearman_test(x: Sequence[float], y: Sequence[float], alternative: str = "two-sided"):
    """Spearman rank correlation with mid-rank ties.

    The p-value is exact (full permutation enumeration) for up to 10 pairs
    and uses the t approximation beyond that.  ``alternative`` is one of
    ``"decreasing"``, ``"increasing"``, ``"two-sided"``.
    """
    if alternative not in ("decreasing", "increasing", "two-sided"):
        raise DomainError(f"unknown alternative {alternative!r}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 3:
        raise DomainError("need two equal-length vectors with at least 3 entries")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateInput("constant input vector")

    rx = rankdata(x)
    ry = rankdata(y)
    cx = rx - rx.mean()
    cy = ry - ry.mean()
    rho = float(np.sum(cx * cy) / math.sqrt(np.sum(cx**2) * np.sum(cy**2)))

    m = x.size
    if m <= 10:
        p = _exact_permutation_p(rx, ry, rho, alternative)
    else:
        if abs(rho) >= 1.0:
            stat = math.inf if rho > 0 else -math.inf
        else:
            stat = rho * math.sqrt((m - 2) / (1.0 - rho * rho))
        if alternative == "decreasing":
            p = float(t_dist.cdf(stat, df=m - 2))
        elif alternative == "increasing":
            p = float(t_dist.sf(stat, df=m - 2))
        else:
            p = float(2.0 * t_dist.sf(abs(stat), df=m - 2))
    return rho, p


def rate_regression(ns: Sequence[float], values: Sequence[float], exponent: float):
    """No-intercept least squares of values against ns**exponent.

    Returns (coefficient, r_squared).  The fit has no intercept, so the
    goodness of fit is the intercept-free convention 1 - SS_res / sum(y^2),
    the quantity standard regression software reports for through-origin
    models (the centered version is not bounded below for them).
    """
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    if ns.shape != values.shape or ns.ndim != 1 or ns.size < 2:
        raise DomainError("need two matched vectors of length >= 2")
    if np.any(ns <= 0.0):
        raise DomainError("ns must be positive")
    if np.all(ns == ns[0]):
        raise DegenerateInput("all ns equal")
    x = ns**exponent
    coef = float(np.sum(x * values) / np.sum(x * x))
    resid = values - coef * x
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum(values**2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res < 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return coef, r2


# ---------------------------------------------------------------------------
# bounds


def prediction_error(
    trajectory: Trajectory, eta_n_true: float, eta_n_hat: float, upsilon: int
) -> float:
    """Mean squared Euclidean distance between the paths replayed under the
    true and estimated per-step rates, over the first ``upsilon`` steps."""
    eta_n_true = check_positive("eta_n_true", eta_n_true)
    eta_n_hat = check_positive("eta_n_hat", eta_n_hat)
    upsilon = check_integer_at_least("upsilon", upsilon, 1)
    if upsilon > trajectory.n:
        raise DomainError("upsilon exceeds the trajectory horizon")
    true_rows = probability_path(
        trajectory.spec, ConstantRate(eta_n_true), trajectory.arms, horizon=upsilon
    ).probs
    hat_rows = probability_path(
        trajectory.spec, ConstantRate(eta_n_hat), trajectory.arms, horizon=upsilon
    ).probs
    diff = true_rows - hat_rows
    return float(np.mean(np.sum(diff * diff, axis=1)))


def prediction_error_bound(x: float, upsilon: int, epsilon: float) -> float:
    """High-probability ceiling on the mean squared path distance.

    Holds with probability at least 1 - exp(-x) inside the guaranteed
    truncation window.
    """
    x = check_nonnegative("x", x)
    upsilon = check_integer_at_least("upsilon", upsilon, 1)
    epsilon = check_positive("epsilon", epsilon)
    ratio = (x + 1.0) / upsilon
    return 9.0 * PATH_LIPSCHITZ_CONSTANT / epsilon * (math.sqrt(ratio) + ratio)


def _rate_sensitivity(pi1: float) -> float:
    # Lower bound on how strongly one update moves the policy per unit of rate.
    return pi1 * math.exp(-1.0) / 2.0


def _gap_coefficient(pi1: float, epsilon: float) -> float:
    return _rate_sensitivity(pi1) ** 2 * math.exp(-(1.0 - 2.0 * epsilon) / epsilon)


def squared_gap_lower_margin(
    trajectory: Trajectory,
    delta_n: float,
    eta_n: float,
    pi1: float,
    epsilon: float,
    upsilon: int,
) -> float:
    """Margin of the lower bound on the cumulative squared path gap.

    Two-arm, zero-loss-second-arm case only.  The left side is the summed
    squared gap between the two replayed arm-1 probabilities; the right side
    scales the squared rate gap by the squared pull counts.  The margin
    (left minus right) should be nonnegative.
    """
    spec = trajectory.spec
    if spec.k != 2 or spec.losses[1] != 0.0:
        raise DomainError("this bound applies to the two-arm case with zero second loss")
    delta_n = check_positive("delta_n", delta_n)
    eta_n = check_positive("eta_n", eta_n)
    epsilon = check_positive("epsilon", epsilon)
    upsilon = check_integer_at_least("upsilon", upsilon, 1)
    if upsilon > trajectory.n:
        raise DomainError("upsilon exceeds the trajectory horizon")

    delta_rows = probability_path(
        spec, ConstantRate(delta_n), trajectory.arms, horizon=upsilon
    ).probs
    eta_rows = probability_path(spec, ConstantRate(eta_n), trajectory.arms, horizon=upsilon).probs
    lhs = float(np.sum((delta_rows[:, 0] - eta_rows[:, 0]) ** 2))

    pulls = np.cumsum(trajectory.arms[:upsilon] == 1)
    n_before = np.concatenate(([0], pulls[:-1]))  # arm-1 pulls strictly before each step
    rhs = _gap_coefficient(pi1, epsilon) * (delta_n - eta_n) ** 2 * float(np.sum(n_before**2))
    return lhs - rhs


@dataclass(frozen=True)
class EstimationBound:
    """Estimation-error ceiling; ``vacuous`` flags an inapplicable regime."""

    value: Optional[float]
    vacuous: bool


def estimation_error_bound(
    x: float, upsilon: int, pi1: float, epsilon: float, r_upper: float
) -> EstimationBound:
    """High-probability ceiling on the base-rate estimation error in the
    two-arm case.

    Decays like upsilon**(-1/4).  The bound only applies when the
    deterministic part of the pull-count mass dominates its fluctuation
    term; otherwise the flagged vacuous result is returned instead of a
    number.
    """
    x = check_nonnegative("x", x)
    upsilon = check_integer_at_least("upsilon", upsilon, 1)
    pi1 = check_positive("pi1", pi1)
    r_upper = check_positive("r_upper", r_upper)
    epsilon = check_positive("epsilon", epsilon)
    if epsilon >= 0.5:
        raise DomainError("epsilon must be below 1/2 in the two-arm case")

    a_n = upsilon * (upsilon - 1) * (2 * upsilon - 1) / 96.0
    b_n = a_n / upsilon**2
    g_n = 0.4 * math.sqrt(2.0 * (math.log(2 * upsilon) + x)) * math.sqrt(upsilon) + math.log(
        2 * upsilon
    ) + x
    if b_n <= g_n:
        return EstimationBound(value=None, vacuous=True)
    gap_coef = _gap_coefficient(pi1, epsilon)
    if gap_coef == 0.0:
        return EstimationBound(value=math.inf, vacuous=False)
    scale = (r_upper * pi1 / (0.5 - epsilon)) * math.sqrt(
        9.0 * PATH_LIPSCHITZ_CONSTANT / (2.0 * gap_coef * epsilon)
    )
    value = scale * math.sqrt((math.sqrt((x + 1.0) * upsilon) + x + 1.0) / (b_n - g_n))
    return EstimationBound(value=value, vacuous=False)


# ---------------------------------------------------------------------------
# the harness


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: a bandit, a true schedule, horizons, and replicate count.

    ``mode`` selects what is measured per replicate:

    - ``"constant"``: fit a constant rate by full-likelihood MLE.
    - ``"decreasing"``: fit the base rate by truncated MLE; also record the
      prediction error and the truncation horizon used.
    - ``"upsilon"``: only record empirical truncation horizons, once per
      threshold in ``epsilons``.
    """

    name: str
    mode: str
    spec: BanditSpec
    theta: RateBounds
    n_values: tuple
    replications: int = 100
    base_seed: int = 0
    eta: Optional[float] = None
    eta0: Optional[float] = None
    alpha: float = 0.5
    epsilon: float = 1e-7
    epsilons: tuple = ()
    truncation: str = "empirical"
    grid_points: int = 50
    optimizer: OptimizerConfig = OptimizerConfig()

    def __post_init__(self):
        if self.mode not in ("constant", "decreasing", "upsilon"):
            raise DomainError(f"unknown mode {self.mode!r}")
        ns = tuple(int(v) for v in self.n_values)
        if not ns or any(b <= a for a, b in zip(ns, ns[1:])):
            raise DomainError("n_values must be non-empty and strictly increasing")
        object.__setattr__(self, "n_values", ns)
        check_integer_at_least("replications", self.replications, 1)
        if self.mode == "constant" and self.eta is None:
            raise DomainError("constant mode needs eta")
        if self.mode in ("decreasing", "upsilon") and self.eta0 is None:
            raise DomainError(f"{self.mode} mode needs eta0")
        if self.mode == "upsilon" and not self.epsilons:
            object.__setattr__(self, "epsilons", (self.epsilon,))
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))

    def schedule(self):
        if self.mode == "constant":
            return ConstantRate(self.eta)
        return PolynomialRate(eta0=self.eta0, alpha=self.alpha)


@dataclass(frozen=True)
class ExperimentRecord:
    n: int
    rep: int
    seed: int
    eta_true: float
    eta_hat: Optional[float]
    rel_error: Optional[float]
    pred_error: Optional[float]
    upsilon: Optional[int]
    collapsed: bool
    upsilon_by_epsilon: Optional[dict] = None


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: list
    aggregates: dict

    def to_csv(self) -> str:
        lines = ["n,rep,seed,eta_true,eta_hat,rel_error,pred_error,upsilon,collapsed"]
        for r in self.records:
            lines.append(
                ",".join(
                    [
                        str(r.n),
                        str(r.rep),
                        str(r.seed),
                        _fmt(r.eta_true),
                        _fmt(r.eta_hat),
                        _fmt(r.rel_error),
                        _fmt(r.pred_error),
                        "" if r.upsilon is None else str(r.upsilon),
                        "1" if r.collapsed else "0",
                    ]
                )
            )
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def _run_record(config: ExperimentConfig, n: int, rep: int) -> ExperimentRecord:
    seed = derive_seed(config.base_seed, n, rep, stream=0)
    opt = dataclasses.replace(config.optimizer, seed=derive_seed(config.base_seed, n, rep, stream=1))
    pi1 = config.spec.max_loss
    try:
        trajectory = simulate(config.spec, config.schedule(), n, seed)
    except SimulationCollapse:
        eta_true = config.eta if config.mode == "constant" else config.eta0
        return ExperimentRecord(n, rep, seed, eta_true, None, None, None, None, True)

    if config.mode == "constant":
        try:
            fit = mle_constant(trajectory, config.theta.lower, config.theta.upper, opt)
        except AllNegInfinity:
            return ExperimentRecord(n, rep, seed, config.eta, None, None, None, None, True)
        rel = abs(fit.eta0_hat - config.eta) / config.eta
        return ExperimentRecord(n, rep, seed, config.eta, fit.eta0_hat, rel, None, None, False)

    if config.mode == "decreasing":
        try:
            fit = mle_truncated(
                trajectory,
                config.theta,
                config.alpha,
                config.epsilon,
                config.truncation,
                opt,
                grid_points=config.grid_points,
            )
            eta_n_true = config.schedule().resolve(n, pi1)
            pred = None
            if fit.upsilon_used and fit.upsilon_used >= 1:
                pred = prediction_error(trajectory, eta_n_true, fit.eta_n_hat, fit.upsilon_used)
        except (AllNegInfinity, ReplayCollapse):
            return ExperimentRecord(n, rep, seed, config.eta0, None, None, None, None, True)
        rel = abs(fit.eta0_hat - config.eta0) / config.eta0
        return ExperimentRecord(
            n, rep, seed, config.eta0, fit.eta0_hat, rel, pred, fit.upsilon_used, False
        )

    # upsilon mode
    by_eps = {}
    for eps in config.epsilons:
        tc = TruncationConfig(
            epsilon=eps, alpha=config.alpha, bounds=config.theta, grid_points=config.grid_points
        )
        by_eps[repr(eps)] = empirical_truncation_horizon(trajectory, tc)
    primary = by_eps[repr(config.epsilons[0])]
    return ExperimentRecord(
        n, rep, seed, config.eta0, None, None, None, primary, False, upsilon_by_epsilon=by_eps
    )


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    """Run every (horizon, replicate) cell and aggregate.

    Collapsed runs are recorded with a flag, never dropped.  Output is
    deterministic given the config and base seed, independent of ``jobs``.
    """
    tasks = [(n, rep) for n in config.n_values for rep in range(config.replications)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_record_task, [(config, n, rep) for n, rep in tasks], chunksize=4))
    else:
        records = [_run_record(config, n, rep) for n, rep in tasks]
    records.sort(key=lambda r: (r.n, r.rep))
    aggregates = _aggregate(config, records)
    return ExperimentReport(config=config, records=records, aggregates=aggregates)


def _record_task(args):
    return _run_record(*args)


def _per_n_quantiles(config, records, field):
    out = {}
    for n in config.n_values:
        vals = [getattr(r, field) for r in records if r.n == n and getattr(r, field) is not None]
        out[str(n)] = quantile(vals, QUANTILE_LEVEL) if vals else None
    return out


def _trend(config, per_n, alternative="decreasing"):
    ns = [int(k) for k, v in per_n.items() if v is not None]
    qs = [v for v in per_n.values() if v is not None]
    if len(ns) < 3:
        return {"insufficient": True}
    rho, p = spearman_test(ns, qs, alternative=alternative)
    return {"rho": rho, "p": p, "alternative": alternative}


def _fit(per_n, exponent):
    ns = [int(k) for k, v in per_n.items() if v is not None]
    qs = [v for v in per_n.values() if v is not None]
    if len(ns) < 2:
        return {"insufficient": True}
    coef, r2 = rate_regression(ns, qs, exponent)
    return {"exponent": exponent, "coefficient": coef, "r_squared": r2}


def _aggregate(config: ExperimentConfig, records) -> dict:
    aggregates = {
        "mode": config.mode,
        "quantile_level": QUANTILE_LEVEL,
        "collapsed_runs": sum(1 for r in records if r.collapsed),
        "per_n_quantiles": {},
        "spearman": {},
        "regression": {},
    }

    if config.mode == "constant":
        rel = _per_n_quantiles(config, records, "rel_error")
        aggregates["per_n_quantiles"]["rel_error"] = rel
        aggregates["spearman"]["rel_error"] = _trend(config, rel)
        finite = [v for v in rel.values() if v is not None]
        aggregates["quantile_mean"] = sum(finite) / len(finite) if finite else None

    elif config.mode == "decreasing":
        rel = _per_n_quantiles(config, records, "rel_error")
        pred = _per_n_quantiles(config, records, "pred_error")
        aggregates["per_n_quantiles"]["rel_error"] = rel
        aggregates["per_n_quantiles"]["pred_error"] = pred
        aggregates["spearman"]["rel_error"] = _trend(config, rel)
        aggregates["spearman"]["pred_error"] = _trend(config, pred)
        aggregates["regression"]["pred_error"] = _fit(pred, -0.25)
        aggregates["regression"]["rel_error"] = _fit(rel, -0.125)

    else:  # upsilon mode
        means = {}
        for eps in config.epsilons:
            key = repr(eps)
            per_n = {}
            for n in config.n_values:
                vals = [
                    r.upsilon_by_epsilon[key]
                    for r in records
                    if r.n == n and r.upsilon_by_epsilon is not None
                ]
                per_n[str(n)] = sum(vals) / len(vals) if vals else None
            means[key] = per_n
        aggregates["upsilon_means"] = means
        aggregates["regression"] = {
            key: _fit(per_n, 0.5) for key, per_n in means.items()
        }
        # floor check: the empirical horizon never drops below the guaranteed one
        violations = 0
        floors = {}
        for n in config.n_values:
            floors[str(n)] = {
                repr(eps): truncation_horizon(
                    config.spec.k, eps, config.alpha, config.theta.upper, n
                )
                for eps in config.epsilons
                if eps < 1.0 / config.spec.k
            }
        for r in records:
            if r.upsilon_by_epsilon is None:
                continue
            for key, floor in floors[str(r.n)].items():
                if r.upsilon_by_epsilon[key] < floor:
                    violations += 1
        aggregates["guaranteed_horizons"] = floors
        aggregates["floor_violations"] = violations
        # spread between thresholds, per horizon
        if len(config.epsilons) > 1:
            spread = {}
            for n in config.n_values:
                vals = [means[repr(eps)][str(n)] for eps in config.epsilons]
                vals = [v for v in vals if v is not None]
                if len(vals) > 1 and max(vals) > 0:
                    spread[str(n)] = (max(vals) - min(vals)) / max(vals)
            aggregates["epsilon_relative_spread"] = spread

    return aggregates


def likelihood_curve(
    spec: BanditSpec,
    eta: float,
    n: int,
    seed: int,
    lower: float,
    upper: float,
    points: int = 141,
    optimizer: OptimizerConfig = OptimizerConfig(),
) -> dict:
    """Full log-likelihood of one constant-rate trajectory over a rate grid,
    plus its maximizer.  Sentinel values appear as -inf rows."""
    check_integer_at_least("points", points, 2)
    trajectory = simulate(spec, ConstantRate(eta), n, seed)
    grid = np.linspace(lower, upper, points)
    rows = []
    for delta in grid:
        value = full_log_likelihood(trajectory, float(delta))
        rows.append((float(delta), value.value, value.evaluated_steps))
    fit = mle_constant(trajectory, lower, upper, optimizer)
    return {
        "rows": rows,
        "eta_true": eta,
        "eta_hat": fit.eta0_hat,
        "objective": fit.objective,
        "neg_infinity_fraction": sum(1 for r in rows if r[1] == -math.inf) / len(rows),
    }
