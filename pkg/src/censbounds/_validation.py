"""Small input checks shared by the estimator classes."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_array, check_consistent_length


def check_binary(v, name: str) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.isin(v, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0 and 1")
    return v.astype(np.int8)


def check_unit_interval(v, name: str, allow_nan: bool = False) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    finite = v[~np.isnan(v)] if allow_nan else v
    if not allow_nan and np.isnan(v).any():
        raise ValueError(f"{name} contains NaN")
    if np.any((finite < 0) | (finite > 1)) or not np.all(np.isfinite(finite)):
        raise ValueError(f"{name} must lie in [0, 1]")
    return v


def check_features(X) -> np.ndarray:
    return check_array(X, dtype=float, ensure_2d=True)


def check_fraction(value, name: str, *, closed: bool = True) -> float:
    """Validate a scalar in [0, 1] (or (0, 1) when ``closed`` is False)."""
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite number")
    ok = 0.0 <= value <= 1.0 if closed else 0.0 < value < 1.0
    if not ok:
        bounds = "[0, 1]" if closed else "(0, 1)"
        raise ValueError(f"{name} must lie in {bounds}, got {value}")
    return float(value)


__all__ = [
    "check_binary",
    "check_unit_interval",
    "check_features",
    "check_fraction",
    "check_consistent_length",
]
