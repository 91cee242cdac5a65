"""
Custom validators for numeric parameters.
"""
import math
from typing import Iterable, List

import numpy as np

from app.core.exceptions import DomainError


class FiniteValidator:
    """Validateur pour les valeurs finies."""

    @staticmethod
    def validate_finite(value: float, name: str = "value") -> float:
        """Reject NaN and infinities."""
        if not math.isfinite(value):
            raise DomainError(f"{name} must be finite, got {value}")
        return float(value)

    @staticmethod
    def validate_finite_array(values: np.ndarray, name: str = "array") -> np.ndarray:
        """Reject arrays holding NaN or infinities."""
        arr = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise DomainError(f"{name} must be finite")
        return arr


class PositiveValidator:
    """Validateur pour les réels strictement positifs."""

    @staticmethod
    def validate_positive(value: float, name: str = "value") -> float:
        value = FiniteValidator.validate_finite(value, name)
        if value <= 0:
            raise DomainError(f"{name} must be > 0, got {value}")
        return value


class ProbabilityValidator:
    """Validateur pour les probabilités."""

    @staticmethod
    def validate_open_unit(value: float, name: str = "probability") -> float:
        """Value in the open interval (0, 1)."""
        value = FiniteValidator.validate_finite(value, name)
        if not 0.0 < value < 1.0:
            raise DomainError(f"{name} must lie in (0, 1), got {value}")
        return value

    @staticmethod
    def validate_simplex(probs: np.ndarray, atol: float = 1e-9) -> np.ndarray:
        """Nonnegative vector summing to one."""
        arr = FiniteValidator.validate_finite_array(probs, "probs")
        if np.any(arr < 0) or abs(arr.sum() - 1.0) > atol:
            raise DomainError("probs must be a probability vector")
        return arr


class CountValidator:
    """Validateur pour les entiers de comptage."""

    @staticmethod
    def validate_count(value: int, name: str = "count", minimum: int = 1) -> int:
        if int(value) != value or value < minimum:
            raise DomainError(f"{name} must be an integer >= {minimum}, got {value}")
        return int(value)

    @staticmethod
    def validate_index(index: int, size: int, name: str = "action") -> int:
        if int(index) != index or not 0 <= index < size:
            raise DomainError(f"{name} index {index} out of range [0, {size})")
        return int(index)


def parse_csv_list(raw: str | Iterable, cast=str) -> List:
    """Split a comma separated value into a typed list."""
    if isinstance(raw, str):
        items = [item.strip() for item in raw.split(",")]
    else:
        items = [item.strip() if isinstance(item, str) else item for item in raw]
    return [cast(item) for item in items if item != ""]
