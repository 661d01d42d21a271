"""Robust estimators built on the sum of absolute (or Euclidean) residuals.

Scalar output:  ``min_theta sum_t |y_t - x_t' theta|`` (optionally weighted or
reweighted) and the noise-aware variant
``min 1/2 ||y - X' theta - phi||^2 + lam ||phi||_1``.
Vector output:  ``min_A sum_t ||y_t - A x_t||_2`` and its special case, the
geometric median.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _simplex
from ._linalg import annihilate, least_squares, numerical_rank, require_full_row_rank, row_space_basis
from .certificates import regularized_kkt, s3_value, t3_value
from .datamodel import DEFAULT_PARTITION_TOL, Dataset, MultiDataset, multi_partition
from .errors import DimensionError, RankDeficientError

METHODS = ("exact_lp", "first_order")


@dataclass(frozen=True)
class SolverOptions:
    opt_tol: float = 1e-9
    max_iter: int = 20000
    method: str = "exact_lp"

    def __post_init__(self):
        if not self.opt_tol > 0:
            raise ValueError("opt_tol must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")


@dataclass(frozen=True)
class Estimate:
    """Result of a scalar-output fit.

    ``status`` is ``optimal`` when the solution passed an independent optimality
    check, ``uncertified`` when the algorithm stopped normally but the check
    failed, and ``iteration_limit`` when it ran out of iterations.
    """
    theta: np.ndarray
    residuals: np.ndarray
    objective: float
    status: str
    iterations: int
    trace: tuple = ()

    def to_dict(self) -> dict:
        d = {
            "theta": self.theta.tolist(),
            "residuals": self.residuals.tolist(),
            "objective": float(self.objective),
            "status": self.status,
            "iterations": int(self.iterations),
        }
        if self.trace:
            d["trace"] = [{"theta": th.tolist(), "weights": w.tolist()} for th, w in self.trace]
        return d


@dataclass(frozen=True)
class MatrixEstimate:
    A: np.ndarray
    residuals: np.ndarray          # m x N
    objective: float
    status: str
    iterations: int
    t3_value: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "objective": float(self.objective),
            "status": self.status,
            "iterations": int(self.iterations),
            "t3_value": float(self.t3_value) if np.isfinite(self.t3_value) else "inf",
        }


@dataclass(frozen=True)
class RegularizedSolution:
    theta: np.ndarray
    phi: np.ndarray
    lam: float
    support: np.ndarray
    signs: np.ndarray
    objective: float = float("nan")
    status: str = "optimal"
    iterations: int = 0

    def __post_init__(self):
        if np.any(np.abs(self.signs) > 1 + 1e-9):
            raise ValueError("subgradient entries must lie in [-1, 1]")

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.tolist(),
            "phi": self.phi.tolist(),
            "lambda": float(self.lam),
            "support": self.support.tolist(),
            "signs": self.signs.tolist(),
            "objective": float(self.objective),
            "status": self.status,
            "iterations": int(self.iterations),
        }


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("inputs must be finite")


def _make_estimate(dataset, theta, status, iterations, weights=None, trace=()):
    r = dataset.residuals(theta)
    obj = float(np.abs(r).sum() if weights is None else weights @ np.abs(r))
    return Estimate(np.asarray(theta, dtype=float), r, obj, status, int(iterations), tuple(trace))


# ---------------------------------------------------------------------------
# scalar l1


def _lad_admm(X, y, w, opts: SolverOptions):
    """Over-relaxed ADMM for min sum w_t |z_t|, z = y - X' theta (first_order path)."""
    n, N = X.shape
    Q = row_space_basis(X)
    theta = least_squares(X, y)
    z = y - X.T @ theta
    u = np.zeros(N)
    rho = 1.0 / (np.median(np.abs(z)) + 1e-12)
    alpha = 1.6
    ynorm = np.linalg.norm(y)
    it = 0
    for it in range(1, opts.max_iter + 1):
        theta = least_squares(X, y - z - u)
        xt = X.T @ theta
        xh = alpha * xt + (1 - alpha) * (y - z)
        v = y - xh - u
        z_old = z
        z = np.sign(v) * np.maximum(np.abs(v) - w / rho, 0.0)
        u = u + xh + z - y
        rp = np.linalg.norm(xt + z - y)
        rd = rho * np.linalg.norm(X @ (z - z_old))
        eps = opts.opt_tol * (1.0 + ynorm)
        # dual point d = rho u projected onto {X d = 0, |d| <= w} gives a lower bound
        d = np.clip(annihilate(Q, -rho * u), -w, w)
        feas = np.abs(X @ d).max()
        primal = w @ np.abs(y - xt)
        if rp <= eps and rd <= eps and feas <= eps:
            gap = primal - y @ d
            if gap <= opts.opt_tol * (1.0 + primal):
                return theta, it, "optimal"
        if it % 20 == 0:
            if rp > 10 * rd:
                rho *= 2.0
                u /= 2.0
            elif rd > 10 * rp:
                rho /= 2.0
                u *= 2.0
    return theta, it, "iteration_limit"


def _polish_lad(X, y, w, theta, tol):
    """Refit on the n samples with the smallest residuals when that is not worse."""
    r = np.abs(y - X.T @ theta)
    order = np.argsort(r, kind="stable")
    idx = []
    for t in order:
        cand = idx + [int(t)]
        if numerical_rank(X[:, cand]) == len(cand):
            idx = cand
        if len(idx) == X.shape[0]:
            break
    if len(idx) < X.shape[0]:
        return theta
    th = np.linalg.solve(X[:, idx].T, y[idx])
    if w @ np.abs(y - X.T @ th) <= w @ r + tol * (1.0 + w @ r):
        return th
    return theta


def _validate(dataset: Dataset):
    _check_finite(dataset.regressors, dataset.outputs)
    require_full_row_rank(dataset.regressors)


def solve_l1(dataset: Dataset, opts: Optional[SolverOptions] = None) -> Estimate:
    """Least-absolute-deviation estimate; status checked with the S3 certificate LP."""
    opts = opts or SolverOptions()
    _validate(dataset)
    X, y = dataset.regressors, dataset.outputs
    ones = np.ones(dataset.N)
    if opts.method == "exact_lp":
        res = _simplex.weighted_lad(X, y, ones, max_iter=opts.max_iter)
        if res.status == "iteration_limit":
            theta = res.theta if res.theta is not None else least_squares(X, y)
            return _make_estimate(dataset, theta, "iteration_limit", res.iterations)
        theta, its = res.theta, res.iterations
    else:
        theta, its, st = _lad_admm(X, y, ones, opts)
        theta = _polish_lad(X, y, ones, theta, opts.opt_tol)
        if st != "optimal":
            return _make_estimate(dataset, theta, st, its)
    value, _ = s3_value(dataset, theta, DEFAULT_PARTITION_TOL)
    status = "optimal" if value <= 1.0 + opts.opt_tol else "uncertified"
    return _make_estimate(dataset, theta, status, its)


def _weighted_dual_check(X, y, w, theta, dual, tol):
    """Zero duality gap with a feasible dual proves optimality of the weighted fit."""
    if dual is None:
        return False
    scale = 1.0 + np.abs(w).max()
    if np.any(np.abs(dual) > w + tol * scale):
        return False
    if np.abs(X @ dual).max() > tol * scale * (1.0 + np.abs(X).max()) * X.shape[1]:
        return False
    primal = w @ np.abs(y - X.T @ theta)
    return primal - y @ dual <= tol * (1.0 + abs(primal)) * 10


def solve_weighted_l1(dataset: Dataset, weights, opts: Optional[SolverOptions] = None) -> Estimate:
    """Minimize ``sum_t w_t |y_t - x_t' theta|`` for nonnegative, not-all-zero weights."""
    opts = opts or SolverOptions()
    w = np.asarray(weights, dtype=float)
    if w.shape != (dataset.N,):
        raise DimensionError(f"weights must have length {dataset.N}")
    _check_finite(w)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if not np.any(w > 0):
        raise ValueError("weights must not all be zero")
    _validate(dataset)
    X, y = dataset.regressors, dataset.outputs
    res = _simplex.weighted_lad(X, y, w, max_iter=opts.max_iter)
    if res.status != "optimal" or res.theta is None:
        theta = res.theta if res.theta is not None else least_squares(X, y)
        return _make_estimate(dataset, theta, "iteration_limit", res.iterations, w)
    ok = _weighted_dual_check(X, y, w, res.theta, res.dual, opts.opt_tol)
    return _make_estimate(dataset, res.theta, "optimal" if ok else "uncertified", res.iterations, w)


def default_delta(y) -> float:
    return 1e-4 * (1.0 + float(np.median(np.abs(y))))


def solve_reweighted_l1(dataset: Dataset, r_max: int = 2, delta: Optional[float] = None,
                        opts: Optional[SolverOptions] = None) -> Estimate:
    """Iteratively reweighted l1 with weights proportional to 1/(|residual| + delta).

    The returned estimate carries ``trace``: one ``(theta, weights)`` pair per
    iteration, starting with the uniform weights ``1/N``.  The objective reported
    is the plain unweighted sum of absolute residuals.
    """
    opts = opts or SolverOptions()
    if int(r_max) < 0:
        raise ValueError("r_max must be >= 0")
    if delta is None:
        delta = default_delta(dataset.outputs)
    if not delta > 0:
        raise ValueError("delta must be positive")
    N = dataset.N
    w = np.full(N, 1.0 / N)
    est = solve_l1(dataset, opts)
    trace = [(est.theta, w)]
    its = est.iterations
    status = est.status
    for _ in range(int(r_max)):
        xi = 1.0 / (np.abs(dataset.residuals(est.theta)) + delta)
        w = xi / xi.sum()
        est = solve_weighted_l1(dataset, w, opts)
        its += est.iterations
        status = est.status
        trace.append((est.theta, w))
    return _make_estimate(dataset, est.theta, status, its, trace=trace)


def least_squares_oracle(dataset: Dataset, inliers: Sequence[int]) -> Estimate:
    """Ordinary least squares on the given inlier columns only."""
    idx = np.asarray(inliers, dtype=int)
    X = dataset.regressors[:, idx]
    require_full_row_rank(X, "inlier regressor matrix")
    theta = least_squares(X, dataset.outputs[idx])
    r = dataset.residuals(theta)
    return Estimate(theta, r, float(np.abs(r).sum()), "optimal", 0)


# ---------------------------------------------------------------------------
# regularized l1


def _reg_objective(X, y, theta, phi, lam):
    r = y - X.T @ theta - phi
    return 0.5 * float(r @ r) + lam * float(np.abs(phi).sum())


def regularized_closed_form(dataset: Dataset, lam: float, support, signs) -> RegularizedSolution:
    """Evaluate the closed-form (theta, phi) for a given support and sign pattern.

    ``signs`` may be given on the support only (same length as ``support``) or as
    a full length-N subgradient vector.  No optimality check is made.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    X, y = dataset.regressors, dataset.outputs
    N = dataset.N
    S = np.asarray(support, dtype=int)
    sg = np.asarray(signs, dtype=float)
    Q = row_space_basis(X)
    phi = np.zeros(N)
    if S.size:
        if sg.shape == (N,):
            rhs_full = annihilate(Q, y) - lam * annihilate(Q, sg)
            rhs = rhs_full[S]
            s_on = sg[S]
        elif sg.shape == (S.size,):
            s_on = sg
            # with Psi s = s at an optimum, Psi_S' (Psi y - lam s) reduces to this
            rhs = annihilate(Q, y)[S] - lam * s_on
        else:
            raise DimensionError("signs must match the support or have length N")
        QS = Q[S]
        G = np.eye(S.size) - QS @ QS.T             # Psi_S' Psi_S = Psi[S, S]
        if numerical_rank(G) < S.size:
            raise RankDeficientError("annihilator restricted to the support is singular")
        phi[S] = np.linalg.solve(G, rhs)
    else:
        s_on = np.zeros(0)
    theta = least_squares(X, y - phi)
    signs_full = np.clip(annihilate(Q, y - phi) / lam, -1.0, 1.0)
    signs_full[S] = np.sign(phi[S])
    zero_on = S[phi[S] == 0]
    signs_full[zero_on] = s_on[phi[S] == 0] if S.size else signs_full[zero_on]
    return RegularizedSolution(theta, phi, float(lam), S, signs_full,
                               _reg_objective(X, y, theta, phi, lam), "closed_form", 0)


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def solve_regularized(dataset: Dataset, lam: float, opts: Optional[SolverOptions] = None) -> RegularizedSolution:
    """Noise-aware fit: accelerated proximal gradient on phi, then exact support polish.

    ``theta`` is eliminated, leaving ``1/2 ||Psi (y - phi)||^2 + lam ||phi||_1``.
    Its gradient is 1-Lipschitz (Psi is a projector), so the step is 1.  Whenever
    the iterate's support settles, the closed form on that support is tried and
    accepted if it passes the KKT check.
    """
    opts = opts or SolverOptions()
    if not lam > 0:
        raise ValueError("lambda must be positive")
    _validate(dataset)
    X, y = dataset.regressors, dataset.outputs
    Q = row_space_basis(X)
    psi_y = annihilate(Q, y)
    kkt_tol = opts.opt_tol
    phi = np.zeros(dataset.N)
    zk = phi.copy()
    t = 1.0
    last_support = None
    it = 0
    for it in range(1, opts.max_iter + 1):
        grad = annihilate(Q, zk) - psi_y
        new = _soft(zk - grad, lam)
        if (zk - new) @ (new - phi) > 0:      # adaptive restart
            t = 1.0
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        zk = new + ((t - 1.0) / t_new) * (new - phi)
        phi, t = new, t_new
        support = np.flatnonzero(phi)
        key = (support.tobytes(), np.sign(phi[support]).tobytes())
        if key == last_support or it % 25 == 0:
            sol = _try_polish(dataset, lam, support, np.sign(phi[support]), kkt_tol, it)
            if sol is not None:
                return sol
        last_support = key
    theta = least_squares(X, y - phi)
    support = np.flatnonzero(phi)
    signs = np.clip((psi_y - annihilate(Q, phi)) / lam, -1.0, 1.0)
    signs[support] = np.sign(phi[support])
    return RegularizedSolution(theta, phi, float(lam), support, signs,
                               _reg_objective(X, y, theta, phi, lam), "iteration_limit", it)


def _try_polish(dataset, lam, support, sgn, tol, it):
    try:
        cf = regularized_closed_form(dataset, lam, support, sgn)
    except RankDeficientError:
        return None
    if np.any(np.sign(cf.phi[support]) != sgn):
        return None
    rep = regularized_kkt(dataset, lam, cf.theta, cf.phi, tol)
    if not rep.ok:
        return None
    X, y = dataset.regressors, dataset.outputs
    return RegularizedSolution(cf.theta, cf.phi, float(lam), support, rep.subgradient,
                               _reg_objective(X, y, cf.theta, cf.phi, lam), "optimal", it)


# ---------------------------------------------------------------------------
# sum of norms and geometric median


def _block_soft(V, t):
    norms = np.linalg.norm(V, axis=0)
    scale = np.maximum(1.0 - t / np.maximum(norms, 1e-300), 0.0)
    return V * scale


def _son_objective(mdataset, A):
    return float(np.linalg.norm(mdataset.residuals(A), axis=0).sum())


def _polish_son(mdataset, A, tol):
    """Least-squares refit on the samples that look exactly fitted."""
    X, Y = mdataset.regressors, mdataset.outputs
    R = np.linalg.norm(Y - A @ X, axis=0)
    scale = 1.0 + np.linalg.norm(Y, axis=0).max()
    cands = []
    for thr in (1e-6, 1e-5, 1e-4, 1e-3):
        idx = np.flatnonzero(R <= thr * scale)
        if idx.size >= mdataset.n and numerical_rank(X[:, idx]) == mdataset.n:
            Ap = np.linalg.lstsq(X[:, idx].T, Y[:, idx].T, rcond=None)[0].T
            resid = np.linalg.norm(Y[:, idx] - Ap @ X[:, idx], axis=0).max()
            if resid <= 1e-9 * scale:
                cands.append(Ap)
    best = None
    obj = _son_objective(mdataset, A)
    for Ap in cands:
        o = _son_objective(mdataset, Ap)
        if o <= obj * (1.0 + 1e-9) + 1e-12:
            best, obj = Ap, o
    return best


def solve_sum_of_norms(mdataset: MultiDataset, opts: Optional[SolverOptions] = None) -> MatrixEstimate:
    """Minimize ``sum_t ||y_t - A x_t||_2`` by over-relaxed ADMM with block shrinkage.

    Candidate vertices found by refitting the exactly-fitted samples are accepted
    when they do not increase the objective; the status comes from the T3 value.
    """
    opts = opts or SolverOptions()
    X, Y = mdataset.regressors, mdataset.outputs
    _check_finite(X, Y)
    require_full_row_rank(X)
    m, N = Y.shape
    pinv = np.linalg.pinv(X)                     # N x n, maps rows to A
    A = Y @ pinv
    Z = Y - A @ X
    U = np.zeros_like(Y)
    med = np.median(np.linalg.norm(Z, axis=0))
    rho = 1.0 / (med + 1e-12)
    alpha = 1.6
    ynorm = np.linalg.norm(Y)
    next_polish = 50
    it = 0
    status = "iteration_limit"
    for it in range(1, opts.max_iter + 1):
        A = (Y - Z - U) @ pinv
        AX = A @ X
        AXh = alpha * AX + (1 - alpha) * (Y - Z)
        Z_old = Z
        Z = _block_soft(Y - AXh - U, 1.0 / rho)
        U = U + AXh + Z - Y
        rp = np.linalg.norm(AX + Z - Y)
        rd = rho * np.linalg.norm((Z - Z_old) @ X.T)
        eps = opts.opt_tol * (1.0 + ynorm)
        if it >= next_polish or (rp <= eps and rd <= eps):
            next_polish = 2 * it
            Ap = _polish_son(mdataset, A, opts.opt_tol)
            if Ap is not None:
                v = t3_value(mdataset, Ap, DEFAULT_PARTITION_TOL)
                if v <= 1.0 + opts.opt_tol:
                    return _matrix_estimate(mdataset, Ap, "optimal", it, v)
            if rp <= eps and rd <= eps:
                status = "stopped"
                break
        if it % 20 == 0:
            if rp > 10 * rd:
                rho *= 2.0
                U /= 2.0
            elif rd > 10 * rp:
                rho /= 2.0
                U *= 2.0
    try:
        v = t3_value(mdataset, A, DEFAULT_PARTITION_TOL)
    except Exception:
        v = float("nan")
    if status == "stopped":
        status = "optimal" if v <= 1.0 + opts.opt_tol else "uncertified"
    return _matrix_estimate(mdataset, A, status, it, v)


def _matrix_estimate(md, A, status, it, v):
    R = md.residuals(A)
    return MatrixEstimate(A, R, float(np.linalg.norm(R, axis=0).sum()), status, int(it), float(v))


def t1_residual(points, a):
    """Excess of the T1 subgradient condition at ``a``: ||sum of unit directions|| - multiplicity.

    Non-positive means ``a`` minimizes the sum of distances.
    """
    P = np.asarray(points, dtype=float)
    D = P - a
    d = np.linalg.norm(D, axis=1)
    scale = 1.0 + np.abs(P).max()
    same = d <= 1e-12 * scale
    u = D[~same] / d[~same, None]
    return float(np.linalg.norm(u.sum(axis=0)) - np.count_nonzero(same))


def geometric_median(points, opts: Optional[SolverOptions] = None) -> np.ndarray:
    """Minimizer of the sum of Euclidean distances (modified Weiszfeld iteration).

    ``points`` is a sequence of m-vectors (rows).  At a data point the T1
    condition is tested directly; the iteration stops there when it holds.
    """
    opts = opts or SolverOptions()
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[0] == 0:
        raise ValueError("at least one point is required")
    _check_finite(P)
    if P.shape[0] == 1:
        return P[0].copy()
    scale = 1.0 + np.abs(P).max()
    # start from the best data point, which also handles heavy coincidence
    sums = np.array([np.linalg.norm(P - p, axis=1).sum() for p in P]) if P.shape[0] <= 2000 else None
    a = P[int(np.argmin(sums))].copy() if sums is not None else P.mean(axis=0)
    for _ in range(opts.max_iter):
        D = P - a
        d = np.linalg.norm(D, axis=1)
        same = d <= 1e-12 * scale
        k = np.count_nonzero(same)
        w = np.zeros_like(d)
        w[~same] = 1.0 / d[~same]
        R = (w[:, None] * D).sum(axis=0)       # sum of unit directions
        rn = np.linalg.norm(R)
        if rn <= k + opts.opt_tol:
            if k > 0:
                return a
            if rn <= opts.opt_tol:
                return a
        T = (w[:, None] * P).sum(axis=0) / w.sum()
        if k == 0:
            a_new = T
        else:
            # Vardi-Zhang step away from a data point
            eta = k / rn
            a_new = max(0.0, 1.0 - eta) * T + min(1.0, eta) * a
        if np.linalg.norm(a_new - a) <= 1e-15 * scale:
            return a_new
        a = a_new
    return a
