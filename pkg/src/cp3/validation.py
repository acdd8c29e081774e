"""Input checks shared by the public entry points."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_eps(eps) -> np.ndarray:
    """1-D float array of area errors, finite."""
    arr = np.asarray(eps, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    return check_array(arr, ensure_2d=False, dtype=float, ensure_all_finite=True)


def check_grid(start: float, stop: float, points: int) -> np.ndarray:
    if not (np.isfinite(start) and np.isfinite(stop)) or stop <= start:
        raise ValueError(f"empty error range [{start}, {stop}]")
    if int(points) < 2:
        raise ValueError("a sweep needs at least two points")
    return np.linspace(start, stop, int(points))
