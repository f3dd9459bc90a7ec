"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np

from .exceptions import InputValidationError


def check_images(X, *, name="X"):
    """Return float64 images ``(N, 32, 32, 3)`` in [0, 1].

    Accepts uint8 pixels (scaled by 1/255) or floats already in [0, 1];
    a single image gains a leading batch axis.
    """
    X = np.asarray(X)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4 or X.shape[-1] != 3:
        raise InputValidationError(f"{name} must have shape (N, H, W, 3), got {X.shape}")
    if X.shape[0] == 0:
        raise InputValidationError(f"{name} is empty")
    if X.dtype == np.uint8:
        return X.astype(np.float64) / 255.0
    if not np.issubdtype(X.dtype, np.number):
        raise InputValidationError(f"{name} must be numeric, got {X.dtype}")
    X = X.astype(np.float64)
    if not np.all(np.isfinite(X)):
        raise InputValidationError(f"{name} contains NaN or infinite values")
    if X.min() < 0.0 or X.max() > 1.0:
        raise InputValidationError(f"float {name} must lie in [0, 1]")
    return X


def check_features(Z, dim=None, *, name="features"):
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[None]
    if Z.ndim != 2:
        raise InputValidationError(f"{name} must be 2-D, got shape {Z.shape}")
    if dim is not None and Z.shape[1] != dim:
        raise InputValidationError(f"{name} must have {dim} columns, got {Z.shape[1]}")
    if not np.all(np.isfinite(Z)):
        raise InputValidationError(f"{name} contains NaN or infinite values")
    return Z


def check_labels(y, n, *, n_classes=None, name="y"):
    y = np.asarray(y)
    if y.shape != (n,):
        raise InputValidationError(f"{name} must have shape ({n},), got {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if np.issubdtype(y.dtype, np.floating) and np.all(y == np.round(y)):
            y = y.astype(np.int64)
        else:
            raise InputValidationError(f"{name} must hold integer class labels")
    if y.size and y.min() < 0:
        raise InputValidationError(f"{name} must be non-negative")
    if n_classes is not None and y.size and y.max() >= n_classes:
        raise InputValidationError(f"{name} must lie in [0, {n_classes - 1}]")
    return y.astype(np.int64)
