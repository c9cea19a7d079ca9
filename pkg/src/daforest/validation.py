"""Input validation helpers shared by the estimator and the data loaders."""

from __future__ import annotations

import numpy as np


class DataError(ValueError):
    """Raised when input data violates a documented precondition."""


def as_feature_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a C-contiguous float64 2-D array and reject non-finite cells."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise DataError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise DataError(f"{name} is empty (shape {X.shape})")
    if not np.isfinite(X).all():
        bad = np.argwhere(~np.isfinite(X))[0]
        raise DataError(f"{name} contains a non-finite value at row {bad[0]}, column {bad[1]}")
    return X


def as_label_vector(y, n_rows: int, name: str = "y") -> np.ndarray:
    """Coerce to an int32 vector of length ``n_rows``."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise DataError(f"{name} must be 1-dimensional")
    if y.shape[0] != n_rows:
        raise DataError(f"{name} has {y.shape[0]} entries, expected {n_rows}")
    if not np.issubdtype(y.dtype, np.integer):
        yi = y.astype(np.int64)
        if not np.array_equal(yi, y):
            raise DataError(f"{name} must contain integer class ids")
        y = yi
    return np.ascontiguousarray(y, dtype=np.int32)


def check_encoded_labels(y: np.ndarray, n_classes: int, name: str = "y") -> None:
    """Require labels in 0..n_classes-1 with every class present."""
    if y.min() < 0 or y.max() >= n_classes:
        raise DataError(f"{name} must lie in [0, {n_classes - 1}]")
    present = np.bincount(y, minlength=n_classes) > 0
    if not present.all():
        missing = int(np.flatnonzero(~present)[0])
        raise DataError(f"class {missing} has no samples")


def as_weight_vector(w, n_rows: int, name: str = "sample_weight") -> np.ndarray:
    """Coerce to float64, reject negative entries and all-zero totals."""
    w = np.ascontiguousarray(w, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != n_rows:
        raise DataError(f"{name} must be a vector of length {n_rows}")
    if not np.isfinite(w).all():
        raise DataError(f"{name} contains non-finite values")
    if (w < 0).any():
        raise DataError(f"{name} contains negative values")
    if w.sum() <= 0.0:
        raise DataError(f"{name} sums to zero")
    return w


def check_n_features(X: np.ndarray, expected: int) -> None:
    if X.shape[1] != expected:
        raise DataError(f"feature dimension mismatch: got {X.shape[1]}, expected {expected}")
