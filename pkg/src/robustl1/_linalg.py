"""Small dense linear-algebra helpers used by every module.

Rank decisions everywhere in the package use the same rule: a matrix has
rank ``k`` when exactly ``k`` singular values satisfy
``sigma_i / sigma_max >= RANK_RTOL``.
"""

import numpy as np

from .errors import RankDeficientError

RANK_RTOL = 1e-10


def numerical_rank(M, rtol=RANK_RTOL):
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s >= rtol * s[0]))


def has_full_row_rank(M, rtol=RANK_RTOL):
    M = np.asarray(M, dtype=float)
    return M.shape[0] > 0 and numerical_rank(M, rtol) == M.shape[0]


def require_full_row_rank(X, what="regressor matrix X"):
    if not has_full_row_rank(X):
        n = X.shape[0]
        raise RankDeficientError(f"{what} must have rank {n}; got {numerical_rank(X)}")


def row_space_basis(X):
    """Orthonormal N x n basis of range(X^T), for applying the annihilator cheaply."""
    Q, _ = np.linalg.qr(np.asarray(X, dtype=float).T)
    return Q


def annihilate(Q, v):
    """Apply Psi = I - X^T (X X^T)^{-1} X using the row-space basis ``Q``."""
    return v - Q @ (Q.T @ v)


def projection_matrix(X):
    """The hat matrix P = X^T (X X^T)^{-1} X (N x N)."""
    X = np.asarray(X, dtype=float)
    return X.T @ np.linalg.solve(X @ X.T, X)


def annihilator_matrix(X):
    """Psi = I_N - P."""
    P = projection_matrix(X)
    return np.eye(P.shape[0]) - P


def least_squares(X, y):
    """theta = (X X^T)^{-1} X y, via lstsq for conditioning."""
    theta, *_ = np.linalg.lstsq(np.asarray(X, dtype=float).T, np.asarray(y, dtype=float), rcond=None)
    return theta
