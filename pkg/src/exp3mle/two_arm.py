"""Closed-form analysis of the two-arm case with a zero-loss second arm.

With two arms and no loss on arm 2, the policy only moves when arm 1 is
pulled, so the whole process is driven by one scalar recursion: the
probability of pulling arm 1 after its i-th pull.  That recursion collapses
tetrationally past a small index, which is what makes constant learning
rates hard to estimate.  This module computes the recursion (in log space
where doubles give out), the indices that separate informative from
numerically dead observations, the tetration bounds, the exact KL
divergence between arm-sequence distributions under two rates, a Monte
Carlo estimate of the same divergence, and the bisection construction of a
rate pair whose divergence stays bounded as the horizon grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BracketNotFound, DomainError
from .validation import check_integer_at_least, check_positive

#: Floor below which recursion values and DP occupancies are treated as dead.
UNDERFLOW_FLOOR = 1e-300

_LOG_OVERFLOW = 709.0  # exp beyond this overflows a double


@dataclass(frozen=True)
class PullSequence:
    """Values of the bad-arm pull-probability recursion.

    ``values[i]`` is the probability of pulling arm 1 after its i-th pull;
    ``values[0]`` is exactly 1/2.  ``truncated`` flags an early stop once the
    next value would drop below :data:`UNDERFLOW_FLOOR`.
    """

    eta: float
    pi1: float
    values: np.ndarray
    truncated: bool


@dataclass(frozen=True)
class KLResult:
    """A KL divergence in nats, with the method that produced it.

    Exact values are nonnegative by construction.  Monte Carlo estimates
    carry their standard error; near-zero divergences may estimate slightly
    negative.  ``pruned_mass`` reports the total occupancy dropped by the
    exact dynamic program's underflow floor, so the exactness claim is
    auditable.
    """

    value: float
    method: str
    reps: Optional[int] = None
    stderr: Optional[float] = None
    pruned_mass: float = 0.0


@dataclass(frozen=True)
class TetrationMargin:
    k: int
    index: int
    q_value: float
    bound: float
    margin: float


def _next_q(q: float, c: float) -> float:
    w = math.exp(-c / q)
    num = q * w
    return num / ((1.0 - q) + num)


def pull_sequence(eta: float, pi1: float, count: int) -> PullSequence:
    """Iterate the pull-probability recursion for ``count`` steps past 1/2.

    Stops early (flagged, not an error) once a value underflows below
    :data:`UNDERFLOW_FLOOR`.
    """
    eta = check_positive("eta", eta)
    pi1 = check_positive("pi1", pi1)
    if pi1 > 1.0:
        raise DomainError("pi1 must lie in (0, 1]")
    count = check_integer_at_least("count", count, 0)
    c = eta * pi1
    values = [0.5]
    truncated = False
    for _ in range(count):
        nxt = _next_q(values[-1], c)
        if nxt < UNDERFLOW_FLOOR:
            truncated = True
            break
        values.append(nxt)
    return PullSequence(eta=eta, pi1=pi1, values=np.array(values), truncated=truncated)


def _chain_tables(eta: float, pi1: float, count: int):
    """Recursion values q_0..q_count plus log q and log(1 - q) tables.

    Once q underflows to exactly 0, log q keeps following the recursion in
    log space for as long as a double can hold it, then settles at -inf.
    """
    c = eta * pi1
    q = 0.5
    lq = math.log(0.5)
    qs = [q]
    lqs = [lq]
    l1ms = [math.log1p(-q)]
    for _ in range(count):
        if q > 0.0:
            w = math.exp(-c / q)
            num = q * w
            den = (1.0 - q) + num
            nxt = num / den
            if nxt > 0.0:
                lq = math.log(nxt)
            else:
                lq = lq - c / q - math.log(den)
            q = nxt
        elif lq > -math.inf:
            if -lq > _LOG_OVERFLOW:
                lq = -math.inf
            else:
                lq = lq - c * math.exp(-lq)
        qs.append(q)
        lqs.append(lq)
        l1ms.append(math.log1p(-q))
    return np.array(qs), np.array(lqs), np.array(l1ms)


def informative_index(eta: float, pi1: float) -> int:
    """Last recursion index whose value still exceeds eta * pi1.

    Beyond it the recursion collapses tetrationally and pulls of the bad arm
    stop carrying information.  Defined for 0 < eta * pi1 < 1/2.
    """
    eta = check_positive("eta", eta)
    pi1 = check_positive("pi1", pi1)
    c = eta * pi1
    if not (0.0 < c < 0.5):
        raise DomainError(f"eta * pi1 must lie in (0, 1/2), got {c}")
    q = 0.5
    i = 0
    while True:
        nxt = _next_q(q, c)
        if nxt < c:
            return i
        if nxt >= q:
            raise DomainError(f"eta * pi1 = {c} is below float resolution of the recursion")
        q = nxt
        i += 1


def horizon_index(n: int, eta: float, pi1: float) -> int:
    """Last recursion index whose value is still at least 1/n."""
    if n < 2:
        raise DomainError(f"n must be at least 2, got {n}")
    eta = check_positive("eta", eta)
    pi1 = check_positive("pi1", pi1)
    c = eta * pi1
    threshold = 1.0 / float(n)
    q = 0.5
    i = 0
    while True:
        nxt = _next_q(q, c)
        if nxt < threshold:
            return i
        if nxt >= q:
            raise DomainError(f"eta * pi1 = {c} is below float resolution of the recursion")
        q = nxt
        i += 1


def log_star(n: float) -> int:
    """Iterated-logarithm count for f(x) = exp(x / 2).

    Counts how many times y <- 2 ln(y), starting from y = n, stays at or
    above 2.  Essentially constant: at most 6 up to n = 1e23.
    """
    n = float(n)
    if not n >= 2.0:
        raise DomainError(f"log_star needs n >= 2, got {n}")
    count = 0
    y = n
    while True:
        y = 2.0 * math.log(y)
        if y >= 2.0:
            count += 1
        else:
            return count


def tetration_margins(eta: float, pi1: float, k_max: int) -> list:
    """Margins of the tetration bound on the recursion past its informative
    index.

    For k = 0..k_max (stopping early when the iterated exponential
    overflows), checks that the value at index I + k + 1 stays below
    1 / f^(k)(2) with f(x) = exp(x / 2).  The informative index I uses the
    convention I = -1 when even the starting value 1/2 is already below
    eta * pi1, which keeps the bound valid for large rates.
    """
    eta = check_positive("eta", eta)
    pi1 = check_positive("pi1", pi1)
    k_max = check_integer_at_least("k_max", k_max, 0)
    c = eta * pi1

    # Iterate to the last index whose value still meets the rate threshold
    # (-1 if even 1/2 does not), then k_max + 1 steps further.  Values past
    # an underflow stop are exactly-0 placeholders; the true values there
    # sit below the floor, far under every bound.
    values = [0.5]
    while values[-1] >= c:
        nxt = _next_q(values[-1], c)
        if nxt < UNDERFLOW_FLOOR:
            break
        if nxt >= values[-1]:
            # rate so small the update rounds to a fixpoint; nothing to check
            raise DomainError(f"eta * pi1 = {c} is below float resolution of the recursion")
        values.append(nxt)
    cap_i = len(values) - 1 if values[-1] >= c else len(values) - 2
    for _ in range(cap_i + k_max + 2 - len(values)):
        if values[-1] < UNDERFLOW_FLOOR or values[-1] == 0.0:
            values.append(0.0)
        else:
            nxt = _next_q(values[-1], c)
            values.append(nxt if nxt >= UNDERFLOW_FLOOR else 0.0)

    rows = []
    x = 2.0  # f^(0)(2)
    for k in range(k_max + 1):
        idx = cap_i + k + 1
        bound = 1.0 / x
        qv = float(values[idx]) if idx < len(values) else 0.0
        rows.append(TetrationMargin(k=k, index=idx, q_value=qv, bound=bound, margin=bound - qv))
        if x / 2.0 > _LOG_OVERFLOW:
            break
        x = math.exp(x / 2.0)
    return rows


def _state_kl_terms(q_e, lq_e, l1m_e, lq_d, l1m_d):
    # Per-state Bernoulli KL, clamped at 0 (it is nonnegative exactly; the
    # clamp only removes rounding dust).  A dead state on the eta side
    # contributes through its complement only; a delta-side log that fell
    # past double range makes the term +inf, i.e. a genuinely astronomical
    # divergence.
    with np.errstate(invalid="ignore"):
        first = q_e * (lq_e - lq_d)
    first = np.where(q_e == 0.0, 0.0, first)
    second = (1.0 - q_e) * (l1m_e - l1m_d)
    return np.maximum(first + second, 0.0)


def _validated_pair(eta: float, delta: float, pi1: float, n: int):
    eta = check_positive("eta", eta)
    delta = check_positive("delta", delta)
    pi1 = check_positive("pi1", pi1)
    if pi1 > 1.0:
        raise DomainError("pi1 must lie in (0, 1]")
    n = check_integer_at_least("n", n, 1)
    return eta, delta, pi1, n


def _table_cap(eta: float, pi1: float, n: int) -> int:
    """Number of recursion states worth tabulating for horizon n.

    The pull probability at a state that underflowed to 0 is 0, so the
    occupancy never advances past the first dead state.
    """
    c = eta * pi1
    q = 0.5
    cap = 0
    while cap < n and q > 0.0:
        q = _next_q(q, c)
        cap += 1
    return cap


def kl_exact(eta: float, delta: float, pi1: float, n: int) -> KLResult:
    """Exact KL divergence between the arm-sequence distributions under two
    constant rates, two arms, zero loss on arm 2.

    Computed by dynamic programming over (step, pulls of arm 1 so far): the
    occupancy of each state evolves by the two-arm chain under ``eta``, and
    each state contributes the conditional Bernoulli KL between the two
    pull probabilities.  Summing per-step conditional divergences this way
    is an exact chain-rule reformulation of the sequence divergence.
    States with occupancy below :data:`UNDERFLOW_FLOOR` are pruned and the
    dropped mass reported.
    """
    eta, delta, pi1, n = _validated_pair(eta, delta, pi1, n)
    cap = _table_cap(eta, pi1, n)
    q_e, lq_e, l1m_e = _chain_tables(eta, pi1, cap)
    _, lq_d, l1m_d = _chain_tables(delta, pi1, cap)
    terms = _state_kl_terms(q_e, lq_e, l1m_e, lq_d, l1m_d)
    one_minus = 1.0 - q_e

    occ = np.array([1.0])
    total = 0.0
    pruned = 0.0
    for _ in range(n):
        m = occ.size
        total += float(occ @ terms[:m])
        if math.isinf(total):
            break
        advance = occ * q_e[:m]
        nxt = occ * one_minus[:m]
        nxt[1:] += advance[:-1]
        tail = float(advance[-1])
        if tail >= UNDERFLOW_FLOOR and m < cap + 1:
            nxt = np.append(nxt, tail)
        else:
            pruned += tail
        small = nxt < UNDERFLOW_FLOOR
        if small.any():
            pruned += float(nxt[small].sum())
            nxt[small] = 0.0
        while nxt.size > 1 and nxt[-1] == 0.0:
            nxt = nxt[:-1]
        occ = nxt
    return KLResult(value=total, method="exact", pruned_mass=pruned)


def kl_monte_carlo(
    eta: float, delta: float, pi1: float, n: int, reps: int, seed: int
) -> KLResult:
    """Monte Carlo estimate of the same divergence as :func:`kl_exact`.

    Simulates ``reps`` pull sequences of the two-arm chain under ``eta`` and
    averages the per-trajectory log-likelihood ratio between the two rates.
    """
    eta, delta, pi1, n = _validated_pair(eta, delta, pi1, n)
    reps = check_integer_at_least("reps", reps, 1)
    cap = _table_cap(eta, pi1, n)
    q_e, lq_e, l1m_e = _chain_tables(eta, pi1, cap)
    _, lq_d, l1m_d = _chain_tables(delta, pi1, cap)

    with np.errstate(invalid="ignore"):
        pull_gain = lq_e - lq_d
    pull_gain = np.where(q_e == 0.0, 0.0, pull_gain)  # never gathered at dead states
    stay_gain = l1m_e - l1m_d

    rng = np.random.Generator(np.random.PCG64(seed))
    state = np.zeros(reps, dtype=np.int64)
    llr = np.zeros(reps)
    for _ in range(n):
        u = rng.random(reps)
        qs = q_e[state]
        pulled = u < qs
        llr += np.where(pulled, pull_gain[state], stay_gain[state])
        state += pulled
    value = float(llr.mean())
    if reps > 1:
        stderr = float(llr.std(ddof=1) / math.sqrt(reps))
    else:
        stderr = float("inf")
    return KLResult(value=value, method="monte_carlo", reps=reps, stderr=stderr)


def hard_pair(n: int, upper: float, pi1: float, beta: float):
    """Construct a pair of rates that no procedure can tell apart well.

    Bisects on the recursion value at index J + 1, where J is the horizon
    index at rate ``upper``, to find a ``delta`` whose value lands in
    [1/(2n), 1/n); the partner rate sits exactly (log n)^-(1+beta) above it.
    The map from rate to recursion value is continuous and strictly
    decreasing, so the target interval is always reachable; the bisection
    stops inside it.
    """
    n = check_integer_at_least("n", n, 2)
    upper = check_positive("upper", upper)
    pi1 = check_positive("pi1", pi1)
    beta = check_positive("beta", beta)
    if not (0.0 < upper * pi1 < 0.5):
        raise DomainError("need 0 < upper * pi1 < 1/2")

    idx = horizon_index(n, upper, pi1) + 1
    lo_target = 1.0 / (2.0 * n)
    hi_target = 1.0 / float(n)

    def value_at(rate: float) -> float:
        c = rate * pi1
        q = 0.5
        for _ in range(idx):
            q = _next_q(q, c) if c > 0.0 else q
        return q

    lo, hi = 0.0, upper
    delta = None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        v = value_at(mid)
        if lo_target <= v < hi_target:
            delta = mid
            break
        if v >= hi_target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    if delta is None:
        raise BracketNotFound(
            f"no rate with recursion value in [{lo_target}, {hi_target}) at index {idx}"
        )
    gap = 1.0 / (math.log(n) ** (1.0 + beta))
    return delta, delta + gap
