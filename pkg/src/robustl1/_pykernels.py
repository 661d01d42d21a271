"""NumPy implementations of the subset-enumeration kernels.

Each function walks subsets in lexicographic order (sizes ascending where
several sizes are involved) and vectorizes over chunks of subsets.  The
compiled module ``_ckernels`` implements the same functions with identical
decision rules and tie-breaking (first maximizer wins).
"""

from itertools import combinations, islice

import numpy as np

CHUNK = 4096


def _chunks(N, k):
    it = combinations(range(N), k)
    while True:
        block = list(islice(it, CHUNK))
        if not block:
            return
        yield np.array(block, dtype=np.intp).reshape(len(block), k)


def _batched_rank_ok(Xs, rtol):
    """Xs is (b, n, m) with m >= n; True where rank is n by the singular-value ratio."""
    s = np.linalg.svd(Xs, compute_uv=False)
    smax = s[:, 0]
    return (smax > 0) & (s[:, -1] >= rtol * smax)


def first_deficient_subset(X, m, rtol):
    """First size-m column subset (lexicographic) with rank below n, or None."""
    X = np.asarray(X, dtype=float)
    n, N = X.shape
    if m < n:
        return tuple(range(m)) if m <= N else None
    for idx in _chunks(N, m):
        ok = _batched_rank_ok(np.transpose(X[:, idx], (1, 0, 2)), rtol)
        bad = np.flatnonzero(~ok)
        if bad.size:
            return tuple(int(i) for i in idx[bad[0]])
    return None


def max_hyperplane_count(X, rtol):
    """Largest number of columns lying in a hyperplane spanned by n-1 of them.

    Equals ``nu_n(X) - 1``.  A column is in the span when its component along
    the unit normal is at most ``rtol * max(sigma_max(X_S), ||x_t||)``.
    """
    X = np.asarray(X, dtype=float)
    n, N = X.shape
    norms = np.linalg.norm(X, axis=0)
    if n == 1:
        return int(np.count_nonzero(norms == 0.0))
    best = 0
    for idx in _chunks(N, n - 1):
        Xs = np.transpose(X[:, idx], (1, 0, 2))          # b x n x (n-1)
        U, s, _ = np.linalg.svd(Xs, full_matrices=True)
        smax = s[:, 0]
        spanning = (smax > 0) & (s[:, -1] >= rtol * smax)
        if not spanning.any():
            continue
        normal = U[spanning, :, -1]                        # b' x n
        proj = np.abs(normal @ X)                          # b' x N
        thr = rtol * np.maximum(smax[spanning, None], norms[None, :])
        counts = (proj <= thr).sum(axis=1)
        best = max(best, int(counts.max()))
    return best


def v1_max(X, k, rtol):
    """max over |I| = k of ||X_I' (X_I X_I')^{-1} X_{I^c}||_inf (max abs row sum).

    A partition with rank-deficient ``X_I`` contributes +inf.
    """
    X = np.asarray(X, dtype=float)
    n, N = X.shape
    if k == N:
        return 0.0
    best = 0.0
    for idx in _chunks(N, k):
        Xi = np.transpose(X[:, idx], (1, 0, 2))           # b x n x k
        ok = _batched_rank_ok(Xi, rtol) if k >= n else np.zeros(len(idx), bool)
        if not ok.all():
            return float("inf")
        G = Xi @ np.transpose(Xi, (0, 2, 1))               # b x n x n
        B = np.linalg.solve(G, np.broadcast_to(X, (len(idx), n, N)))
        M = np.abs(np.transpose(Xi, (0, 2, 1)) @ B)        # b x k x N
        rows = np.arange(len(idx))[:, None]
        M[rows, :, idx] = 0.0
        best = max(best, float(M.sum(axis=2).max()))
    return best


def error_constants(X, min_size, rtol):
    """(K1, K2, J) maximized over all column subsets J with |J| >= min_size.

    K1 = max sqrt|J| ||(XX')^{-1} (I + E + 2E^2 + E^3) X_J||_2,
    K2 = max sqrt|J| ||(X_J X_J')^{-1} X_J||_2, E = (X_Jc X_Jc')(X_J X_J')^{-1};
    J is the first maximizer of K1.  Rank-deficient subsets are skipped.
    """
    X = np.asarray(X, dtype=float)
    n, N = X.shape
    G = X @ X.T
    Ginv = np.linalg.inv(G)
    I = np.eye(n)
    K1 = -1.0
    K2 = -1.0
    J = None
    for size in range(max(min_size, n), N + 1):
        for idx in _chunks(N, size):
            Xj = np.transpose(X[:, idx], (1, 0, 2))
            ok = _batched_rank_ok(Xj, rtol)
            if not ok.any():
                continue
            idx, Xj = idx[ok], Xj[ok]
            GJ = Xj @ np.transpose(Xj, (0, 2, 1))
            GJinv = np.linalg.inv(GJ)
            E = (G - GJ) @ GJinv
            E2 = E @ E
            C = Ginv @ (I + E + 2 * E2 + E2 @ E)
            H = C @ GJ @ np.transpose(C, (0, 2, 1))
            H = 0.5 * (H + np.transpose(H, (0, 2, 1)))
            k1 = np.sqrt(size * np.maximum(np.linalg.eigvalsh(H)[:, -1], 0.0))
            k2 = np.sqrt(size / np.linalg.eigvalsh(GJ)[:, 0])
            j = int(np.argmax(k1))
            if k1[j] > K1:
                K1 = float(k1[j])
                J = tuple(int(i) for i in idx[j])
            K2 = max(K2, float(k2.max()))
    return K1, K2, J
