"""Small input-validation helpers used by the estimators and functional API."""

import numpy as np

from .errors import DataError, ShapeError


def as_float_matrix(X, name="X"):
    """Coerce to a 2-D float64 array, raising ShapeError otherwise."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D array, got ndim={X.ndim}")
    if X.shape[0] < 1:
        raise ShapeError(f"{name} must have at least one row")
    return X


def check_finite(X, name="X"):
    if not np.all(np.isfinite(X)):
        raise DataError(f"{name} contains non-finite values")
    return X


def check_dim(X, dim, name="X"):
    """Require the trailing feature dimension of a matrix to equal ``dim``."""
    if X.shape[1] != dim:
        raise ShapeError(f"{name} has dimension {X.shape[1]}, expected {dim}")
    return X


def as_image_stack(pixels, name="pixels"):
    """Coerce to a H x W x C float64 array; 2-D input gains a channel axis."""
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ShapeError(f"{name} must be H x W or H x W x C, got ndim={arr.ndim}")
    return arr
