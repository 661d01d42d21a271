"""Genericity measures and sufficient recovery thresholds for a regressor matrix.

Conventions: ``X`` is n x N with columns x_t, ``P = X'(XX')^{-1}X`` is the
orthogonal projector onto its row space, and all rank decisions use the shared
singular-value ratio rule from ``_linalg``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from . import kernels
from ._linalg import RANK_RTOL, annihilator_matrix, numerical_rank, projection_matrix, require_full_row_rank
from .datamodel import Dataset
from .errors import CapExceededError, CoherenceUndefinedError, DimensionError

NU_SUBSET_CAP = 25
ENUM_CAP = 15
L0_CAP = 20
HYPERPLANE_BUDGET = 2_000_000

EXACT = "exact"
SAMPLED = "sampled_lower_bound"
ABSENT = "absent"


def _as_X(X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError("X must be a 2-d array (n x N)")
    return X


# ---------------------------------------------------------------------------
# genericity index


@dataclass(frozen=True)
class GenericityResult:
    nu_n: int
    exactness: str


def genericity_index(X, mode: str = "exact", *, method: str = "hyperplanes", cap: int = NU_SUBSET_CAP,
                     trials: int = 2000, seed: int = 0) -> GenericityResult:
    """Smallest m such that every m-column submatrix of X has rank n.

    ``method="hyperplanes"`` counts the columns inside every hyperplane spanned
    by n-1 columns; the largest count plus one is the index.  Its cost is
    C(N, n-1) and is limited by ``HYPERPLANE_BUDGET`` rather than by N.
    ``method="subsets"`` scans m upward and looks for a rank-deficient m-subset,
    limited to N <= ``cap``.  ``mode="sampled"`` returns a lower bound from
    ``trials`` random (n-1)-subsets.
    """
    X = _as_X(X)
    require_full_row_rank(X)
    n, N = X.shape
    if mode == "sampled":
        return GenericityResult(_sampled_nu(X, trials, seed), SAMPLED)
    if mode != "exact":
        raise ValueError("mode must be 'exact' or 'sampled'")
    if method == "hyperplanes":
        if math.comb(N, n - 1) > HYPERPLANE_BUDGET:
            raise CapExceededError(f"C({N},{n - 1}) hyperplanes exceed the budget {HYPERPLANE_BUDGET}")
        return GenericityResult(kernels.max_hyperplane_count(X, RANK_RTOL) + 1, EXACT)
    if method == "subsets":
        if N > cap:
            raise CapExceededError(f"exact subset scan needs N <= {cap}; got N = {N}")
        for m in range(n, N + 1):
            if kernels.first_deficient_subset(X, m, RANK_RTOL) is None:
                return GenericityResult(m, EXACT)
        return GenericityResult(N, EXACT)  # unreachable for full-rank X
    raise ValueError("method must be 'hyperplanes' or 'subsets'")


def _sampled_nu(X, trials, seed):
    n, N = X.shape
    if n == 1:
        return kernels.max_hyperplane_count(X, RANK_RTOL) + 1
    rng = np.random.default_rng(seed)
    norms = np.linalg.norm(X, axis=0)
    best = n - 1
    for _ in range(trials):
        S = rng.choice(N, n - 1, replace=False)
        U, s, _ = np.linalg.svd(X[:, S], full_matrices=True)
        if s[0] == 0 or s[-1] < RANK_RTOL * s[0]:
            continue
        proj = np.abs(U[:, -1] @ X)
        best = max(best, int(np.count_nonzero(proj <= RANK_RTOL * np.maximum(s[0], norms))))
    return best + 1


# ---------------------------------------------------------------------------
# projection-based measures


def normalize_columns(X):
    """Scale every column to unit Euclidean norm (zero columns are left as is)."""
    X = _as_X(X)
    norms = np.linalg.norm(X, axis=0)
    return X / np.where(norms > 0, norms, 1.0)


def r_value(X) -> float:
    """Largest entry magnitude of the projector X'(XX')^{-1}X."""
    X = _as_X(X)
    require_full_row_rank(X)
    return float(np.abs(projection_matrix(X)).max())


def rn_value(X) -> float:
    """r of the regressors rescaled to unit ||x||_Sigma = sqrt(x' (XX')^{-1} x).

    This is the threshold measure of the objective weighted by 1/||x_t||_Sigma.
    Samples with x_t = 0 carry no information and are dropped.
    """
    X = _as_X(X)
    require_full_row_rank(X)
    d = np.sqrt(np.clip(np.diag(projection_matrix(X)), 0.0, None))
    keep = d > 0
    return r_value(X[:, keep] / d[keep])


def sufficient_threshold_r(X) -> float:
    """N - 1/(2 r(X)): more zero residuals than this certifies exact recovery."""
    X = _as_X(X)
    return X.shape[1] - 1.0 / (2.0 * r_value(X))


def mutual_coherence(X) -> float:
    X = _as_X(X)
    require_full_row_rank(X)
    n, N = X.shape
    if N <= n:
        raise CoherenceUndefinedError(0)
    Q = annihilator_matrix(X)
    d = np.diag(Q).copy()
    scale = 1e-12 * max(1.0, d.max())
    zero = np.flatnonzero(d <= scale)
    if zero.size:
        raise CoherenceUndefinedError(int(zero[0]))
    C = np.abs(Q) / np.sqrt(np.outer(d, d))
    np.fill_diagonal(C, 0.0)
    return float(C.max())


def coherence_bound(X) -> float:
    """(1 + 1/mu)/2 with mu the mutual coherence of the columns of I - P."""
    return 0.5 * (1.0 + 1.0 / mutual_coherence(X))


# ---------------------------------------------------------------------------
# partition thresholds


def v1_value(X, k: int, *, cap: int = ENUM_CAP, nu: Optional[int] = None) -> float:
    """max over |I| = k of ||X_I'(X_I X_I')^{-1} X_Ic||_inf; requires k >= nu_n(X)."""
    X = _as_X(X)
    require_full_row_rank(X)
    n, N = X.shape
    if N > cap:
        raise CapExceededError(f"v1 enumeration needs N <= {cap}; got N = {N}")
    if nu is None:
        nu = genericity_index(X).nu_n
    if not nu <= k <= N:
        raise ValueError(f"v1 is defined for nu_n(X) = {nu} <= k <= N = {N}")
    return float(kernels.v1_max(X, int(k), RANK_RTOL))


def v2_value(X, k: int) -> float:
    """max over |I| = k of ||X_Ic'(XX')^{-1}X||_1 (max abs column sum).

    For each column t of P the worst complement picks the N - k largest
    |P_st|, so the maximum is available without enumerating partitions.
    """
    X = _as_X(X)
    require_full_row_rank(X)
    N = X.shape[1]
    if not 0 <= k <= N:
        raise ValueError("k must lie in [0, N]")
    if k == N:
        return 0.0
    A = -np.sort(-np.abs(projection_matrix(X)), axis=0)
    return float(A[: N - k].sum(axis=0).max())


def v2_value_enumerated(X, k: int, cap: int = ENUM_CAP) -> float:
    """Reference implementation of v2 by explicit partition enumeration."""
    X = _as_X(X)
    N = X.shape[1]
    if N > cap:
        raise CapExceededError(f"v2 enumeration needs N <= {cap}; got N = {N}")
    P = projection_matrix(X)
    best = 0.0
    for Ic in combinations(range(N), N - k):
        if Ic:
            best = max(best, float(np.abs(P[list(Ic)]).sum(axis=0).max()))
    return best


_THRESH_SLACK = 1e-12


def k1_value(X, *, cap: int = ENUM_CAP, nu: Optional[int] = None) -> int:
    """min{k >= nu_n(X) : v1(k) <= 1}."""
    X = _as_X(X)
    require_full_row_rank(X)
    N = X.shape[1]
    if N > cap:
        raise CapExceededError(f"k1 enumeration needs N <= {cap}; got N = {N}")
    if nu is None:
        nu = genericity_index(X).nu_n
    for k in range(nu, N + 1):
        if kernels.v1_max(X, k, RANK_RTOL) <= 1.0 + _THRESH_SLACK:
            return k
    return N


def k2_value(X) -> int:
    """min{k in 1..N : v2(k) <= 1/2} (exact for any N; see v2_value)."""
    X = _as_X(X)
    require_full_row_rank(X)
    N = X.shape[1]
    A = -np.sort(-np.abs(projection_matrix(X)), axis=0)
    csum = np.cumsum(A, axis=0).max(axis=1)     # csum[j] = v2(N - j - 1)
    for k in range(1, N + 1):
        v2 = 0.0 if k == N else csum[N - k - 1]
        if v2 <= 0.5 + _THRESH_SLACK:
            return k
    return N


# ---------------------------------------------------------------------------
# error bound


@dataclass(frozen=True)
class ErrorConstants:
    K1: float
    K2: float
    J: tuple
    exactness: str


def error_bound_constants(X, mode: str = "exact", *, cap: int = ENUM_CAP, nu: Optional[int] = None,
                          trials: int = 2000, seed: int = 0) -> ErrorConstants:
    """K1, K2 and the maximizing subset J over |J| >= nu_n(X).

    ``mode="sampled"`` evaluates random subsets only and returns lower bounds.
    """
    X = _as_X(X)
    require_full_row_rank(X)
    n, N = X.shape
    if nu is None:
        nu = genericity_index(X).nu_n
    if mode == "exact":
        if N > cap:
            raise CapExceededError(f"K1/K2 enumeration needs N <= {cap}; got N = {N}")
        K1, K2, J = kernels.error_constants(X, int(nu), RANK_RTOL)
        return ErrorConstants(K1, K2, tuple(J), EXACT)
    if mode != "sampled":
        raise ValueError("mode must be 'exact' or 'sampled'")
    rng = np.random.default_rng(seed)
    G = X @ X.T
    Ginv = np.linalg.inv(G)
    I = np.eye(n)
    K1, K2, J = -1.0, -1.0, None
    for _ in range(trials):
        size = int(rng.integers(nu, N + 1))
        S = np.sort(rng.choice(N, size, replace=False))
        XJ = X[:, S]
        if numerical_rank(XJ) < n:
            continue
        GJ = XJ @ XJ.T
        E = (G - GJ) @ np.linalg.inv(GJ)
        M = Ginv @ (I + E + 2 * E @ E + E @ E @ E) @ XJ
        k1 = math.sqrt(size) * np.linalg.norm(M, 2)
        k2 = math.sqrt(size) / np.linalg.svd(XJ, compute_uv=False)[-1]
        if k1 > K1:
            K1, J = float(k1), tuple(int(i) for i in S)
        K2 = max(K2, float(k2))
    return ErrorConstants(K1, K2, J, SAMPLED)


def evaluate_error_bound(K1, K2, J_set, eps, M, lam, outlier_set) -> float:
    """(K1 eps + lam K2) + K1 M sqrt(|J & outliers| / |J|)."""
    J = set(int(j) for j in J_set)
    if not J:
        raise ValueError("J_set must be nonempty")
    overlap = len(J & set(int(t) for t in outlier_set))
    return float(K1 * eps + lam * K2 + K1 * M * math.sqrt(overlap / len(J)))


# ---------------------------------------------------------------------------
# l0 oracle


@dataclass(frozen=True)
class L0Result:
    minimizers: list
    objective: int


def l0_brute_force(dataset: Dataset, *, cap: int = L0_CAP, tol: float = 1e-9, batch: int = 4096) -> L0Result:
    """All theta minimizing the number of nonzero residuals, by interpolating every n-subset.

    Any minimizer with at least n zero residuals interpolates some rank-n subset,
    so the enumeration is complete whenever the optimum leaves n or more zeros.
    """
    X, y = dataset.regressors, dataset.outputs
    n, N = X.shape
    if N > cap:
        raise CapExceededError(f"l0 enumeration needs N <= {cap}; got N = {N}")
    require_full_row_rank(X)
    yscale = tol * (1.0 + np.abs(y))
    best = N + 1
    found = []
    it = combinations(range(N), n)
    while True:
        block = [c for _, c in zip(range(batch), it)]
        if not block:
            break
        idx = np.array(block, dtype=np.intp)
        Xs = np.transpose(X[:, idx], (1, 0, 2))               # b x n x n
        s = np.linalg.svd(Xs, compute_uv=False)
        ok = (s[:, 0] > 0) & (s[:, -1] >= RANK_RTOL * s[:, 0])
        if not ok.any():
            continue
        idx, Xs = idx[ok], Xs[ok]
        thetas = np.linalg.solve(np.transpose(Xs, (0, 2, 1)), y[idx][..., None])[..., 0]
        R = np.abs(y[None, :] - thetas @ X)
        nnz = (R > yscale[None, :]).sum(axis=1)
        m = int(nnz.min())
        if m < best:
            best, found = m, []
        if m == best:
            for th in thetas[nnz == best]:
                if not any(np.linalg.norm(th - f) <= 1e-8 * (1.0 + np.linalg.norm(f)) for f in found):
                    found.append(th)
    return L0Result(found, int(best))


# ---------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class BoundsReport:
    nu_n: int
    r: float
    r_n: float
    coherence_bound: Optional[float]
    threshold_r: float
    k1: Optional[int]
    k2: Optional[int]
    exactness: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "nu_n": self.nu_n,
            "r": self.r,
            "r_n": self.r_n,
            "coherence_bound": self.coherence_bound,
            "threshold_r": self.threshold_r,
            "k1": self.k1,
            "k2": self.k2,
            "exactness": dict(self.exactness),
        }


def bounds_report(X, *, exact_cap: int = ENUM_CAP, nu_trials: int = 5000, seed: int = 0) -> BoundsReport:
    """All bounds for X; enumeration-based fields beyond ``exact_cap`` are flagged."""
    X = _as_X(X)
    require_full_row_rank(X)
    n, N = X.shape
    flags = {}
    try:
        g = genericity_index(X)
    except CapExceededError:
        g = genericity_index(X, "sampled", trials=nu_trials, seed=seed)
    flags["nu_n"] = g.exactness
    try:
        cb = coherence_bound(X)
        flags["coherence_bound"] = EXACT
    except CoherenceUndefinedError:
        cb = None
        flags["coherence_bound"] = "undefined"
    k1 = None
    if N <= exact_cap and g.exactness == EXACT:
        k1 = k1_value(X, cap=exact_cap, nu=g.nu_n)
        flags["k1"] = EXACT
    else:
        flags["k1"] = ABSENT
    k2 = k2_value(X)
    flags["k2"] = EXACT
    for key in ("r", "r_n", "threshold_r"):
        flags[key] = EXACT
    return BoundsReport(g.nu_n, r_value(X), rn_value(X), cb, sufficient_threshold_r(X), k1, k2, flags)
