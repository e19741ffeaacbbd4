"""Input validation helpers for array-facing entry points.

These are deliberately small and reused by the estimator, the training loop
and the CLI so that every door into the package rejects bad input with the
same error types and messages.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

#: Class labels, in the order used for class indices everywhere (index 0 is
#: the low/-1 class, index 1 the high/+1 class).
LABELS = (-1, 1)


def as_signal_array(X, n_marks: int | None = None) -> np.ndarray:
    """Coerce ``X`` to a float64 array of shape ``(n_samples, n_marks, n_bins)``.

    Accepts a 3-d array directly, or a 2-d array of flattened per-sample rows
    when ``n_marks`` is given (each row is then reshaped to
    ``(n_marks, n_features // n_marks)``).
    """
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2:
        if n_marks is None:
            raise DimensionError(
                "2-d input needs n_marks to recover the (marks, bins) layout"
            )
        n_samples, n_features = arr.shape
        if n_marks < 1 or n_features % n_marks != 0:
            raise DimensionError(
                f"cannot split {n_features} features into {n_marks} marks"
            )
        arr = arr.reshape(n_samples, n_marks, n_features // n_marks)
    elif arr.ndim != 3:
        raise DimensionError(f"expected 2-d or 3-d input, got {arr.ndim}-d")
    if n_marks is not None and arr.shape[1] != n_marks:
        raise DimensionError(
            f"input has {arr.shape[1]} marks, expected {n_marks}"
        )
    if arr.shape[0] == 0 or arr.shape[1] == 0 or arr.shape[2] == 0:
        raise DimensionError(f"input has an empty axis: shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError("input contains NaN or infinite values")
    return arr


def as_label_array(y, n_samples: int | None = None) -> np.ndarray:
    """Validate labels: a 1-d integer array whose values are all -1 or +1."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise DimensionError(f"labels must be 1-d, got {arr.ndim}-d")
    if n_samples is not None and arr.shape[0] != n_samples:
        raise DimensionError(
            f"got {arr.shape[0]} labels for {n_samples} samples"
        )
    values = set(np.unique(arr).tolist())
    if not values <= set(LABELS):
        raise DimensionError(
            f"labels must be -1 or +1, found {sorted(values - set(LABELS))}"
        )
    return arr.astype(np.int64)


def class_index(label: int) -> int:
    """Map a -1/+1 label to its output-unit index (0 or 1)."""
    if label == -1:
        return 0
    if label == 1:
        return 1
    raise ValueError(f"label must be -1 or +1, got {label!r}")


def check_finite(name: str, arr: np.ndarray) -> np.ndarray:
    """Raise :class:`DimensionError` if ``arr`` has NaN/inf entries."""
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contains NaN or infinite values")
    return arr
