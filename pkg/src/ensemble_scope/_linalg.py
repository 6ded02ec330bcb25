"""Small numerical helpers shared across modules."""

from __future__ import annotations

import os

import numpy as np
import scipy.linalg

DEFAULT_TOL = 1e-9


def expm(M) -> np.ndarray:
    # scaling-and-squaring Pade (Al-Mohy & Higham) via scipy
    return scipy.linalg.expm(np.asarray(M, dtype=float))


def numerical_rank(M, tol: float = DEFAULT_TOL) -> int:
    s = np.linalg.svd(np.atleast_2d(M), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s >= tol * s[0]))


def null_space(M, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal kernel basis; singular values below ``tol * s_max`` count as zero."""
    M = np.atleast_2d(np.asarray(M))
    n = M.shape[1]
    if M.size == 0 or not np.any(M):
        return np.eye(n, dtype=M.dtype)
    _, s, vh = np.linalg.svd(M)
    rank = int(np.sum(s >= tol * s[0]))
    return vh[rank:].conj().T


def orthogonal_complement(Q: np.ndarray, n: int) -> np.ndarray:
    if Q.shape[1] == 0:
        return np.eye(n)
    if Q.shape[1] >= n:
        return np.zeros((n, 0))
    u, _, _ = np.linalg.svd(Q, full_matrices=True)
    return u[:, Q.shape[1]:]


def max_principal_angle(U: np.ndarray, V: np.ndarray) -> float:
    """Largest principal angle between two subspaces; pi/2 if dimensions differ."""
    if U.shape[1] != V.shape[1]:
        return float(np.pi / 2)
    if U.shape[1] == 0:
        return 0.0
    return float(np.max(scipy.linalg.subspace_angles(U, V)))


def rref(M: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Reduced row echelon form with partial pivoting; zero rows dropped."""
    R = np.array(M, dtype=float)
    rows, cols = R.shape
    scale = np.max(np.abs(R)) if R.size else 0.0
    r = 0
    for c in range(cols):
        if r == rows:
            break
        piv = r + int(np.argmax(np.abs(R[r:, c])))
        if abs(R[piv, c]) <= tol * max(scale, 1e-300):
            R[r:, c] = 0.0
            continue
        R[[r, piv]] = R[[piv, r]]
        R[r] /= R[r, c]
        for k in range(rows):
            if k != r:
                R[k] -= R[k, c] * R[r]
        r += 1
    return R[:r]


def max_threads() -> int:
    """Parallelism cap from ENSEMBLE_SCOPE_THREADS (default: CPU count)."""
    env = os.environ.get("ENSEMBLE_SCOPE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1
