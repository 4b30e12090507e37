"""Small input-validation helpers shared across the package."""

from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError


def as_float_matrix(x, name: str = "X") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting NaN/Inf."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def as_float_vector(x, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def as_label_vector(y, n_classes: int, name: str = "y") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    arr = arr.astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
        raise ValueError(
            f"{name} has labels outside [0, {n_classes}): "
            f"min={arr.min()}, max={arr.max()}"
        )
    return arr


def check_fitted(estimator, attribute: str) -> None:
    """Raise NotFittedError unless `estimator.<attribute>` exists and is set."""
    if getattr(estimator, attribute, None) is None:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )
