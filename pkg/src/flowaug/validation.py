"""Input validation helpers shared by estimators and the evaluation harness."""

from __future__ import annotations

import numpy as np


def check_images(x, name: str = "x") -> np.ndarray:
    """Coerce to a float64 BHWC batch; reject anything else."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 4:
        raise ValueError(f"{name} must be a BHWC batch, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_labels(y, n: int, name: str = "y") -> np.ndarray:
    """Coerce to a 1-d integer label vector aligned with n samples."""
    arr = np.asarray(y)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise ValueError(f"{name} must be 1-d with {n} entries, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.round(np.asarray(arr, dtype=np.float64))
        if not np.array_equal(rounded, np.asarray(arr, dtype=np.float64)):
            raise ValueError(f"{name} must hold integer class labels")
        arr = rounded
    return arr.astype(np.int64)
