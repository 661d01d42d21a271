"""Optimality and uniqueness certificates.

Scalar output (``min_theta sum_t |y_t - x_t' theta|``): a candidate ``theta`` is
optimal iff the minimum infinity norm of ``alpha`` with
``X_{I0} alpha = z``, ``z = sum_{I+} x_t - sum_{I-} x_t``, is at most one.  The
certificate LPs here are solved with HiGHS (through scipy), deliberately a
different code path from the simplex used by :func:`robustl1.solvers.solve_l1`.

Multivariable output (sum of Euclidean norms): the analogous value is the
minimum of ``max_t ||z_t||_2`` over ``Z`` with ``V X_{Ic}' = Z X_{I0}'``,
a second-order cone program solved with cvxpy/Clarabel.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from ._linalg import annihilate, numerical_rank, require_full_row_rank, row_space_basis
from .datamodel import (
    DEFAULT_PARTITION_TOL,
    Dataset,
    IndexPartition,
    MultiDataset,
    multi_partition,
    partition_indices,
)
from .errors import DimensionError, NotOptimalError

DEFAULT_CERT_TOL = 1e-8
# Values this close to one are taken as exactly one (structural ties in the LP).
_EXACT_ONE = 1e-10


@dataclass(frozen=True)
class RankEvidence:
    rank_I0: int
    s2prime_lp_value: Optional[float] = None


@dataclass(frozen=True)
class Certificate:
    s3_value: float
    lambda_coeffs: np.ndarray
    optimal: bool
    unique: Optional[bool]
    rank_evidence: RankEvidence
    partition: IndexPartition

    def to_dict(self) -> dict:
        p = self.partition
        return {
            "s3_value": _json_float(self.s3_value),
            "lambda_coeffs": self.lambda_coeffs.tolist(),
            "optimal": self.optimal,
            "unique": self.unique,
            "rank_evidence": {
                "rank_I0": self.rank_evidence.rank_I0,
                "s2prime_lp_value": _json_float(self.rank_evidence.s2prime_lp_value),
            },
            "partition": {
                "plus": p.plus.tolist(),
                "minus": p.minus.tolist(),
                "zero": p.zero.tolist(),
                "tol": p.tol,
            },
        }


@dataclass(frozen=True)
class UniquenessResult:
    unique: Optional[bool]          # None = indeterminate (borderline LP value)
    rank_I0: int
    s2prime_lp_value: Optional[float]
    s1prime_set: np.ndarray         # diagnostic only: {t in I0 : |lambda_t| < 1 - tol}


def _json_float(v):
    if v is None:
        return None
    v = float(v)
    return v if np.isfinite(v) else "inf"


def _signed_sum(X, part: IndexPartition):
    return X[:, part.plus].sum(axis=1) - X[:, part.minus].sum(axis=1)


def _min_inf_norm(A, z):
    """min ||alpha||_inf s.t. A alpha = z; returns (value, alpha) or (inf, None)."""
    n, p = A.shape
    scale = 1.0 + np.abs(z).max(initial=0.0)
    if p == 0:
        return (0.0, np.zeros(0)) if np.abs(z).max(initial=0.0) <= 1e-12 * scale else (np.inf, None)
    c = np.zeros(p + 1)
    c[-1] = 1.0
    I = np.eye(p)
    A_ub = np.block([[I, -np.ones((p, 1))], [-I, -np.ones((p, 1))]])
    b_ub = np.zeros(2 * p)
    A_eq = np.hstack([A, np.zeros((n, 1))])
    bounds = [(None, None)] * p + [(0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=z, bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status == 2:
        return np.inf, None
    if res.status != 0:
        raise RuntimeError(f"certificate LP failed: {res.message}")
    alpha = res.x[:p]
    return float(np.abs(alpha).max()), alpha


def s3_value(dataset: Dataset, theta, tol: float = DEFAULT_PARTITION_TOL):
    """Optimal value of the minimum-infinity-norm certificate LP and its minimizer.

    ``tol`` is the residual classification tolerance for the sign partition.
    Returns ``(inf, empty)`` when ``z`` is not in the range of ``X_{I0}``.
    """
    value, lam, _ = _s3(dataset, theta, tol)
    return value, lam


def _s3(dataset, theta, tol):
    part = partition_indices(dataset, theta, tol)
    X = dataset.regressors
    z = _signed_sum(X, part)
    value, alpha = _min_inf_norm(X[:, part.zero], z)
    if alpha is None:
        alpha = np.full(part.zero.size, np.nan)
    return value, alpha, part


def check_optimal(dataset: Dataset, theta, tol: float = DEFAULT_CERT_TOL,
                  partition_tol: float = DEFAULT_PARTITION_TOL) -> Certificate:
    require_full_row_rank(dataset.regressors)
    value, lam, part = _s3(dataset, theta, partition_tol)
    rank = numerical_rank(dataset.regressors[:, part.zero]) if part.zero.size else 0
    return Certificate(
        s3_value=value,
        lambda_coeffs=lam,
        optimal=bool(value <= 1.0 + tol),
        unique=None,
        rank_evidence=RankEvidence(rank_I0=rank),
        partition=part,
    )


def _s2prime_lp(X0, z):
    """min sum_{t in I0} |x_t' eta| subject to z' eta = 1."""
    n, p = X0.shape
    c = np.concatenate([np.zeros(n), np.ones(p)])
    I = np.eye(p)
    A_ub = np.block([[X0.T, -I], [-X0.T, -I]])
    b_ub = np.zeros(2 * p)
    A_eq = np.concatenate([z, np.zeros(p)])[None, :]
    bounds = [(None, None)] * n + [(0, None)] * p
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status == 3:
        return 0.0
    if res.status != 0:
        raise RuntimeError(f"uniqueness LP failed: {res.message}")
    return float(res.fun)


def check_unique(dataset: Dataset, theta, tol: float = DEFAULT_CERT_TOL,
                 partition_tol: float = DEFAULT_PARTITION_TOL) -> UniquenessResult:
    """Decide uniqueness of an optimal ``theta`` via the strict-inequality LP test.

    ``theta`` is the unique minimizer iff ``rank(X_{I0}) = n`` and
    ``min { sum_{I0} |x_t' eta| : z' eta = 1 } > 1``.  Values within ``tol`` above
    one are reported as indeterminate (``unique=None``).
    """
    cert = check_optimal(dataset, theta, tol, partition_tol)
    if not cert.optimal:
        raise NotOptimalError(f"theta is not optimal (S3 value {cert.s3_value:.6g})")
    X = dataset.regressors
    part = cert.partition
    n = dataset.n
    rank = cert.rank_evidence.rank_I0
    lam = cert.lambda_coeffs
    s1 = part.zero[np.abs(lam) < 1.0 - tol] if lam.size else part.zero
    if rank < n:
        return UniquenessResult(False, rank, None, s1)
    z = _signed_sum(X, part)
    zscale = np.abs(X).sum(axis=1).max()
    if np.abs(z).max(initial=0.0) <= 1e-12 * (1.0 + zscale):
        return UniquenessResult(True, rank, None, s1)
    value = _s2prime_lp(X[:, part.zero], z)
    if value > 1.0 + tol:
        verdict = True
    elif value <= 1.0 + _EXACT_ONE:
        verdict = False
    else:
        verdict = None
    return UniquenessResult(verdict, rank, value, s1)


def certify(dataset: Dataset, theta, tol: float = DEFAULT_CERT_TOL,
            partition_tol: float = DEFAULT_PARTITION_TOL) -> Certificate:
    """Optimality certificate with the uniqueness verdict filled in when optimal."""
    cert = check_optimal(dataset, theta, tol, partition_tol)
    if not cert.optimal:
        return cert
    u = check_unique(dataset, theta, tol, partition_tol)
    return Certificate(cert.s3_value, cert.lambda_coeffs, True, u.unique,
                       RankEvidence(u.rank_I0, u.s2prime_lp_value), cert.partition)


def affine_necessary(dataset: Dataset, theta, tol: float = DEFAULT_PARTITION_TOL) -> bool:
    """Cardinality test ``||I+| - |I-|| <= |I0|`` for affine models; False proves non-optimality."""
    if not dataset.is_affine():
        raise DimensionError("affine_necessary needs a constant-one last regressor row")
    p, m, z = partition_indices(dataset, theta, tol).counts()
    return abs(p - m) <= z


# ---------------------------------------------------------------------------
# multivariable


@dataclass(frozen=True)
class MultiCertificate:
    t3_value: float
    optimal: bool
    unique: Optional[bool]
    rank_I0: int
    zero: np.ndarray


def t3_value(mdataset: MultiDataset, A, tol: float = DEFAULT_PARTITION_TOL) -> float:
    """min ||Z||_{2,inf} s.t. V X_{Ic}' = Z X_{I0}' (``+inf`` when infeasible)."""
    require_full_row_rank(mdataset.regressors)
    A = np.asarray(A, dtype=float)
    if A.shape != (mdataset.m, mdataset.n):
        raise DimensionError(f"A must be {mdataset.m} x {mdataset.n}")
    X = mdataset.regressors
    nz, zero = multi_partition(mdataset, A, tol)
    R = mdataset.residuals(A)[:, nz]
    V = R / np.linalg.norm(R, axis=0)
    G = V @ X[:, nz].T                      # m x n
    gscale = 1.0 + np.abs(X[:, nz]).sum(axis=1).max(initial=0.0)
    if zero.size == 0:
        return 0.0 if np.abs(G).max(initial=0.0) <= 1e-12 * gscale else np.inf
    if np.abs(G).max(initial=0.0) <= 1e-14 * gscale:
        return 0.0
    # reduce G = Z X0' to the range of X0: X0 = U S W'
    U, s, Wt = np.linalg.svd(X[:, zero], full_matrices=False)
    k = int(np.count_nonzero(s >= 1e-10 * s[0]))
    U, s, Wt = U[:, :k], s[:k], Wt[:k]
    if k < X.shape[0]:
        Uperp = np.linalg.svd(X[:, zero])[0][:, k:]
        if np.abs(G @ Uperp).max() > 1e-9 * gscale:
            return np.inf
    rhs = (G @ U) / s                       # Z W' ... so Z @ Wt.T = rhs
    return _min_max_colnorm(Wt.T, rhs)


def _min_max_colnorm(W, rhs):
    """min_Z max_t ||Z[:, t]||_2 subject to Z @ W = rhs (W is p x k, orthonormal columns)."""
    import cvxpy as cp

    m = rhs.shape[0]
    p = W.shape[0]
    if m == 1:
        value, _ = _min_inf_norm(W.T, rhs[0])
        return value
    Z = cp.Variable((m, p))
    tau = cp.Variable()
    cons = [Z @ W == rhs, cp.norm(Z, 2, axis=0) <= tau]
    prob = cp.Problem(cp.Minimize(tau), cons)
    with warnings.catch_warnings():
        # reduced-accuracy exits are re-checked from Z below
        warnings.simplefilter("ignore", UserWarning)
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-11, tol_gap_rel=1e-11, tol_feas=1e-11)
    if prob.status in ("infeasible", "infeasible_inaccurate"):
        return np.inf
    if prob.status not in ("optimal", "optimal_inaccurate") or Z.value is None:
        raise RuntimeError(f"T3 cone program failed: {prob.status}")
    Zv = Z.value
    if np.abs(Zv @ W - rhs).max() > 1e-8 * (1.0 + np.abs(rhs).max()):
        raise RuntimeError("T3 cone program returned an infeasible point")
    return float(np.linalg.norm(Zv, axis=0).max())


def check_multi_optimal(mdataset: MultiDataset, A, tol: float = DEFAULT_CERT_TOL,
                        partition_tol: float = DEFAULT_PARTITION_TOL) -> MultiCertificate:
    """T3-style optimality test plus a one-sided uniqueness screen.

    ``unique`` is False when ``rank(X_{I0}) < n`` (necessary condition fails),
    True when in addition the T3 value is strictly below one (all ball multipliers
    interior), and None otherwise.
    """
    value = t3_value(mdataset, A, partition_tol)
    _, zero = multi_partition(mdataset, A, partition_tol)
    rank = numerical_rank(mdataset.regressors[:, zero]) if zero.size else 0
    optimal = bool(value <= 1.0 + tol)
    unique = None
    if optimal:
        if rank < mdataset.n:
            unique = False
        elif value < 1.0 - tol:
            unique = True
    return MultiCertificate(value, optimal, unique, rank, zero)


# ---------------------------------------------------------------------------
# regularized problem  min 1/2 ||y - X' theta - phi||^2 + lam ||phi||_1


@dataclass(frozen=True)
class KKTReport:
    ok: bool
    stationarity_theta: float     # ||X X' theta - X (y - phi)||_inf
    stationarity_phi: float       # ||X' theta - (y - phi) + lam s||_inf
    xs_norm: float                # ||X s||_inf
    subgradient: np.ndarray


def regularized_kkt(dataset: Dataset, lam: float, theta, phi, tol: float = 1e-9) -> KKTReport:
    """Evaluate both stationarity conditions with a constructed valid subgradient."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    X, y = dataset.regressors, dataset.outputs
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    scale = tol * (1.0 + np.abs(y).max())
    r1 = X @ (X.T @ theta) - X @ (y - phi)
    g = y - phi - X.T @ theta
    on = np.abs(phi) > scale
    s = np.where(on, np.sign(phi), np.clip(g / lam, -1.0, 1.0))
    r2 = -g + lam * s
    xs = X @ s
    e1 = float(np.abs(r1).max())
    e2 = float(np.abs(r2).max())
    e3 = float(np.abs(xs).max())
    xs_bound = scale * (1.0 + np.abs(X).sum(axis=1).max()) / lam
    ok = e1 <= scale and e2 <= scale and e3 <= xs_bound
    return KKTReport(bool(ok), e1, e2, e3, s)


def check_regularized_kkt(dataset: Dataset, lam: float, solution, tol: float = 1e-9) -> bool:
    return regularized_kkt(dataset, lam, solution.theta, solution.phi, tol).ok


def check_regularized_unique(dataset: Dataset, solution, tol: float = 1e-9) -> bool:
    """rank(X) = n and the annihilator restricted to the saturated set has full column rank.

    The saturated set is ``{t : |s_t| = 1}`` (to ``tol``), which contains the
    nonzero support of ``phi``.
    """
    X = dataset.regressors
    if numerical_rank(X) < dataset.n:
        return False
    signs = np.asarray(solution.signs, dtype=float)
    sat = np.flatnonzero(np.abs(signs) >= 1.0 - tol)
    sat = np.union1d(sat, np.asarray(solution.support, dtype=int))
    if sat.size == 0:
        return True
    if sat.size > dataset.N - dataset.n:
        return False
    Q = row_space_basis(X)
    cols = np.zeros((dataset.N, sat.size))
    cols[sat, np.arange(sat.size)] = 1.0
    cols = annihilate(Q, cols)
    return numerical_rank(cols) == sat.size
