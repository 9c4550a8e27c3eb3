"""Input checks shared by the estimators."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DimensionError


def check_matrix(X, n_features=None, ensure_min_samples=1):
    """2-D finite float64 array, optionally with a fixed column count."""
    X = check_array(X, dtype=np.float64, ensure_min_samples=ensure_min_samples)
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionError(f"X has {X.shape[1]} features, expected {n_features}")
    return X


def check_unit_interval(X, name="X"):
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise ValueError(f"{name} must lie in [0, 1] for binary visible units")
    return X


def check_codes(codes):
    """Code sets as a 3-D array ``(n_models, n_views, code_dim)``."""
    codes = np.asarray(codes, dtype=np.float64)
    if codes.ndim == 2:
        codes = codes[None]
    if codes.ndim != 3:
        raise DimensionError(f"code sets must be 3-D (models, views, dims), got {codes.shape}")
    if not np.isfinite(codes).all():
        raise ValueError("code sets contain non-finite values")
    return codes
