"""Input validation helpers shared by the estimator surfaces."""

from __future__ import annotations

import numpy as np

__all__ = ["check_alpha", "check_pvalue_vector", "check_pvalue_matrix", "check_theta"]


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    return alpha


def check_theta(theta, allow_zero: bool = False):
    arr = np.asarray(theta, dtype=float)
    if allow_zero:
        if np.any(arr > 0):
            raise ValueError("shift parameters must be <= 0")
    elif np.any(arr >= 0):
        raise ValueError("shift parameters must be negative")
    return arr if arr.ndim else float(arr)


def check_pvalue_vector(u, k: int, sorted_input: bool = False) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (k,):
        raise ValueError(f"expected a length-{k} p-value vector, got shape {u.shape}")
    if np.any(np.isnan(u)) or np.any(u < 0) or np.any(u > 1):
        raise ValueError("p-values must lie in [0, 1]")
    if sorted_input and np.any(np.diff(u) < 0):
        raise ValueError("p-values must be sorted ascending")
    return u


def check_pvalue_matrix(U, k: int) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U[None, :]
    if U.ndim != 2 or U.shape[1] != k:
        raise ValueError(f"expected an (n, {k}) p-value matrix, got shape {U.shape}")
    if np.any(np.isnan(U)) or np.any(U < 0) or np.any(U > 1):
        raise ValueError("p-values must lie in [0, 1]")
    return U
