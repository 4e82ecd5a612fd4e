"""Input validation helpers shared by the estimators."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import InputError, ShapeError


def check_coords(coords, n=None, name="coords"):
    """Return ``coords`` as a finite float array of shape (n, 2)."""
    if coords is None:
        raise InputError(f"{name} is required for spatial models")
    try:
        coords = check_array(coords, dtype=np.float64, ensure_all_finite=True)
    except ValueError as exc:
        raise InputError(f"{name}: {exc}") from exc
    if coords.shape[1] != 2:
        raise ShapeError(f"{name} must have 2 columns (u, v), got {coords.shape[1]}")
    if n is not None and coords.shape[0] != n:
        raise ShapeError(f"{name} has {coords.shape[0]} rows, expected {n}")
    return coords


def check_covariates(X, n_features=None):
    """Raw covariates without the unit column, as float (n, p)."""
    try:
        X = check_array(X, dtype=np.float64, ensure_all_finite=True, ensure_min_features=0)
    except ValueError as exc:
        raise InputError(f"X: {exc}") from exc
    if n_features is not None and X.shape[1] != n_features:
        raise ShapeError(f"expected {n_features} covariates, found {X.shape[1]}")
    return X


def check_target(y, n):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 2 and y.shape[1] == 1:
        y = y[:, 0]
    if y.ndim != 1:
        raise ShapeError(f"y must be one-dimensional, got shape {y.shape}")
    if y.shape[0] != n:
        raise ShapeError(f"y has {y.shape[0]} entries, expected {n}")
    if not np.all(np.isfinite(y)):
        raise InputError("y contains non-finite values")
    return y


def add_intercept(X):
    """Prepend the unit column."""
    return np.column_stack([np.ones(X.shape[0]), X])


def check_design(X):
    """Validate an augmented design matrix (first column all ones)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ShapeError(f"design matrix must be 2-D with an intercept column, got {X.shape}")
    if not np.all(X[:, 0] == 1.0):
        raise InputError("first column of the design matrix must be exactly 1")
    if not np.all(np.isfinite(X)):
        raise InputError("design matrix contains non-finite values")
    return X
