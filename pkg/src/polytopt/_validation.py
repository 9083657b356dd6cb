"""Input checks shared by the estimator wrappers."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from polytopt.sdf import SignedDistanceField


def check_points(X, name: str = "X") -> np.ndarray:
    """Finite float array of shape (n, 3); a single (3,) point is promoted."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, dtype=float, ensure_all_finite=True, input_name=name)
    if X.shape[1] != 3:
        raise ValueError(f"{name} must have 3 columns, got {X.shape[1]}")
    return X


def check_field(field) -> SignedDistanceField:
    if not isinstance(field, SignedDistanceField):
        raise TypeError(f"expected a SignedDistanceField, got {type(field).__name__}")
    return field


def check_fraction(value, name: str, closed_low: bool = False) -> float:
    v = float(value)
    ok = (0 <= v <= 1) if closed_low else (0 < v <= 1)
    if not ok:
        raise ValueError(f"{name} must lie in {'[0, 1]' if closed_low else '(0, 1]'}, got {value}")
    return v
