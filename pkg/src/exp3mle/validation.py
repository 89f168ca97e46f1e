"""Input-validation helpers used across the package."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import DomainError, NonFiniteInput


def check_positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise DomainError(f"{name} must be a positive finite number, got {value!r}")
    return value


def check_nonnegative(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0.0:
        raise DomainError(f"{name} must be a nonnegative finite number, got {value!r}")
    return value


def check_open_unit(name: str, value: float) -> float:
    """Check that ``value`` lies strictly inside (0, 1)."""
    value = float(value)
    if not (0.0 < value < 1.0):
        raise DomainError(f"{name} must lie in (0, 1), got {value!r}")
    return value


def check_integer_at_least(name: str, value: int, minimum: int) -> int:
    if int(value) != value:
        raise DomainError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise DomainError(f"{name} must be at least {minimum}, got {value}")
    return value


def check_finite_vector(name: str, values: Sequence[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError(f"{name} must be a non-empty 1-d vector")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(f"{name} contains NaN or infinite entries")
    return arr


def check_arm_indices(name: str, arms: Sequence[int], k: int) -> np.ndarray:
    """Check a sequence of 1-based arm indices against an arm count."""
    arr = np.asarray(arms)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError(f"{name} must be a non-empty 1-d sequence of arm indices")
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.asarray(arms, dtype=float)
        if not np.all(rounded == np.round(rounded)):
            raise DomainError(f"{name} must contain integer arm indices")
        arr = rounded.astype(np.int64)
    arr = arr.astype(np.int64)
    if arr.min() < 1 or arr.max() > k:
        raise DomainError(f"{name} entries must lie in 1..{k}")
    return arr
