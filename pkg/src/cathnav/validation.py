"""Input validation helpers used by the public APIs.

Small check_* functions in the style of scikit-learn's validation module:
each either returns a normalized value or raises ValueError with the
offending argument named.
"""

from __future__ import annotations

import numbers

import numpy as np


def check_vector3(x, name: str = "x") -> np.ndarray:
    """Coerce to a finite float64 3-vector."""
    arr = np.asarray(x, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {arr}")
    return arr


def check_finite_scalar(x, name: str = "x") -> float:
    if not isinstance(x, numbers.Real) or not np.isfinite(x):
        raise ValueError(f"{name} must be a finite real number, got {x!r}")
    return float(x)


def check_positive(x, name: str = "x") -> float:
    v = check_finite_scalar(x, name)
    if v <= 0.0:
        raise ValueError(f"{name} must be positive, got {v}")
    return v


def check_nonnegative(x, name: str = "x") -> float:
    v = check_finite_scalar(x, name)
    if v < 0.0:
        raise ValueError(f"{name} must be non-negative, got {v}")
    return v


def check_in_range(x, lo: float, hi: float, name: str = "x") -> float:
    v = check_finite_scalar(x, name)
    if not (lo <= v <= hi):
        raise ValueError(f"{name} must lie in [{lo}, {hi}], got {v}")
    return v


def check_unit_vector(x, name: str = "direction", tol: float = 1e-9) -> np.ndarray:
    arr = check_vector3(x, name)
    norm = float(np.linalg.norm(arr))
    if abs(norm - 1.0) > tol:
        raise ValueError(f"{name} must be a unit vector (|v|=1 within {tol}), got |v|={norm}")
    return arr


def check_array_2d(x, n_cols: int, name: str = "X") -> np.ndarray:
    """Coerce to a finite float64 array of shape (n, n_cols)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1 and arr.shape[0] == n_cols:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != n_cols:
        raise ValueError(f"{name} must have shape (n, {n_cols}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def ensure_rng(seed_or_rng) -> np.random.Generator:
    """Accept a Generator, a seed, or None and return a Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)
