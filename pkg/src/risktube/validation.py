"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np

MIN_HORIZON = 2


def check_horizon(horizon: int) -> int:
    """Validate a horizon length (must be an integer >= 2)."""
    h = int(horizon)
    if h != horizon or h < MIN_HORIZON:
        raise ValueError(f"horizon must be an integer >= {MIN_HORIZON}, got {horizon!r}")
    return h


def check_unit_interval(value: float, name: str = "value") -> float:
    """Validate a scalar in [0, 1]."""
    v = float(value)
    if not np.isfinite(v) or v < 0.0 or v > 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value!r}")
    return v


def check_open_unit_interval(value: float, name: str = "value") -> float:
    """Validate a scalar in the open interval (0, 1)."""
    v = float(value)
    if not np.isfinite(v) or v <= 0.0 or v >= 1.0:
        raise ValueError(f"{name} must be in (0, 1), got {value!r}")
    return v


def check_score_matrix(X, horizon: int | None = None) -> np.ndarray:
    """Validate a (n_tubes, horizon) matrix of risk scores in [0, 1].

    A single tube may be passed as a 1-d array and is promoted to 2-d.
    """
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-d score matrix, got shape {arr.shape}")
    if horizon is not None and arr.shape[1] != horizon:
        raise ValueError(
            f"score matrix has horizon {arr.shape[1]}, expected {horizon}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("scores must be finite")
    if arr.min(initial=0.0) < 0.0 or arr.max(initial=0.0) > 1.0:
        raise ValueError("scores must lie in [0, 1]")
    return arr


def check_label_matrix(y, shape: tuple[int, int]) -> np.ndarray:
    """Validate a 0/1 label matrix matching the score matrix shape."""
    arr = np.asarray(y)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.shape != shape:
        raise ValueError(f"label matrix shape {arr.shape} does not match scores {shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return arr.astype(np.int8)


def check_categories(categories, n: int) -> list:
    """Validate an optional per-tube category list (entries may be None)."""
    if categories is None:
        return [None] * n
    cats = list(categories)
    if len(cats) != n:
        raise ValueError(f"got {len(cats)} categories for {n} tubes")
    return cats
