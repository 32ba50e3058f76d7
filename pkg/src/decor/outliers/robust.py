import math

import numpy as np


def mad(scores):
    """Median absolute deviation (unscaled)."""
    s = np.asarray(scores, dtype=float)
    return float(np.median(np.abs(s - np.median(s))))


def robust_cut(scores, k=3.0):
    """Threshold ``median(s) + k * MAD(s)``; flag scores strictly above it."""
    s = np.asarray(scores, dtype=float).reshape(-1)
    if s.size == 0:
        raise ValueError("robust_cut needs at least one score")
    med = np.median(s)
    return float(med + k * np.median(np.abs(s - med)))


def adaptive_k(n, min_k=10, max_k=50):
    """LOF neighbourhood size: floor(sqrt(n)) clipped to [min_k, max_k], and
    never more than n - 1."""
    if n < 2:
        raise ValueError(f"adaptive_k needs n >= 2, got {n}")
    if min_k > max_k:
        raise ValueError(f"min_k={min_k} exceeds max_k={max_k}")
    k = min(max(math.isqrt(n), min_k), max_k)
    return max(1, min(k, n - 1))
