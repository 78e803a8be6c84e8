"""Input checks shared across the package, in the spirit of ``check_array``."""

from __future__ import annotations

import math
from numbers import Real
from typing import Iterable, Tuple

from .exceptions import ValidationError


def check_non_negative(**values: float) -> None:
    for name, value in values.items():
        if not isinstance(value, Real) or math.isnan(value):
            raise ValidationError(f"{name} must be a real number")
        if value < 0:
            raise ValidationError(f"{name} must be >= 0, got {value}")


def check_fraction(value: float, name: str, *, open_low: bool = False) -> float:
    """Require ``value`` in [0, 1] (or (0, 1] with ``open_low``)."""
    value = float(value)
    low_ok = value > 0 if open_low else value >= 0
    if not (low_ok and value <= 1):
        interval = "(0, 1]" if open_low else "[0, 1]"
        raise ValidationError(f"{name} must be in {interval}, got {value}")
    return value


def check_series(values: Iterable[float], name: str) -> Tuple[float, ...]:
    """Finite, non-negative floats as a tuple."""
    out = tuple(float(v) for v in values)
    for i, v in enumerate(out):
        if not math.isfinite(v) or v < 0:
            raise ValidationError(f"{name}[{i}] must be finite and >= 0, got {v}")
    return out


def check_length(values, expected: int, name: str) -> None:
    if len(values) != expected:
        raise ValidationError(f"{name} has length {len(values)}, expected {expected}")
