"""Shared dense linear-algebra helpers (Cholesky with jitter escalation)."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular


class IllConditionedError(RuntimeError):
    """Raised when a matrix stays non-PD even at the maximum jitter level."""


def chol_with_jitter(A: np.ndarray, rel_start: float = 1e-10, rel_max: float = 1e-4):
    """Lower Cholesky factor of a symmetric PSD matrix, adding jitter if needed.

    Tries the bare factorisation first, then escalates a relative jitter
    (scaled by the mean diagonal) in decades from ``rel_start`` to
    ``rel_max``.  Returns ``(L, jitter)`` where ``jitter`` is the absolute
    value that was added to the diagonal (0.0 in the clean case).
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    try:
        return np.linalg.cholesky(A), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(A)))
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    rel = rel_start
    eye = np.eye(n)
    while rel <= rel_max * (1 + 1e-12):
        jitter = rel * scale
        try:
            return np.linalg.cholesky(A + jitter * eye), jitter
        except np.linalg.LinAlgError:
            rel *= 10.0
    raise IllConditionedError(
        f"matrix of size {n} is not positive definite even with relative "
        f"jitter {rel_max:g}"
    )


def chol_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b given the lower Cholesky factor L of A."""
    if L.shape[0] == 0:
        return np.zeros_like(b)
    z = solve_triangular(L, b, lower=True)
    return solve_triangular(L.T, z, lower=False)


def inv_from_chol(L: np.ndarray) -> np.ndarray:
    """Dense inverse of A from its lower Cholesky factor (test/gradient use)."""
    n = L.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    return chol_solve(L, np.eye(n))
