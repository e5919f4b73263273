"""Input validation helpers shared by the estimator classes."""

from __future__ import annotations

import numbers

from .model import IsingModel

__all__ = ["check_model", "check_positive", "check_nonnegative", "check_in"]


def check_model(model) -> IsingModel:
    if not isinstance(model, IsingModel):
        raise TypeError(f"expected an IsingModel, got {type(model).__name__}")
    return model


def check_positive(name: str, value) -> float:
    if not isinstance(value, numbers.Real) or not value > 0:
        raise ValueError(f"{name} must be a positive real, got {value!r}")
    return float(value)


def check_nonnegative(name: str, value) -> float:
    if not isinstance(value, numbers.Real) or value < 0:
        raise ValueError(f"{name} must be a nonnegative real, got {value!r}")
    return float(value)


def check_in(name: str, value, allowed) -> str:
    if value not in allowed:
        raise ValueError(f"{name} must be one of {sorted(allowed)}, got {value!r}")
    return value
