"""Bounded-variable revised simplex for weighted least-absolute-deviation fits.

The weighted LAD problem ``min_theta sum_t w_t |y_t - x_t' theta|`` has the dual

    max_d  y' d   s.t.  X d = 0,  -w <= d <= w,

which has only ``n`` equality rows.  We run a two-phase bounded simplex on that
dual.  At an optimal basis the multipliers of ``X d = 0`` give ``theta``, and the
basic columns are ``n`` samples interpolated exactly, so the primal solution is
a vertex of the LAD problem.
"""

import numpy as np

_DEGENERATE_STREAK = 30


class SimplexResult:
    __slots__ = ("theta", "dual", "basis", "iterations", "status")

    def __init__(self, theta, dual, basis, iterations, status):
        self.theta = theta
        self.dual = dual
        self.basis = basis
        self.iterations = iterations
        self.status = status


def _iterate(A, cost, lo, hi, x, basis, status, max_iter, it0):
    """Run simplex pivots until optimal; ``status`` is 0 basic, -1 at lo, +1 at hi."""
    n = A.shape[0]
    scale = 1.0 + np.max(np.abs(cost))
    dtol = 1e-11 * scale
    it = it0
    streak = 0
    movable = hi > lo
    while it < max_iter:
        B = A[:, basis]
        pi = np.linalg.solve(B.T, cost[basis])
        red = cost - A.T @ pi
        inc = (status == -1) & (red < -dtol) & movable
        dec = (status == 1) & (red > dtol) & movable
        eligible = inc | dec
        if not eligible.any():
            return "optimal", it
        it += 1
        if streak > _DEGENERATE_STREAK:
            q = int(np.flatnonzero(eligible)[0])          # Bland's rule
        else:
            q = int(np.argmax(np.where(eligible, np.abs(red), -1.0)))
        direction = 1.0 if inc[q] else -1.0
        w = np.linalg.solve(B, A[:, q])
        delta = direction * w
        xb = x[basis]
        ptol = 1e-11 * (1.0 + np.max(np.abs(w)))
        ratios = np.full(n, np.inf)
        down = delta > ptol
        up = delta < -ptol
        ratios[down] = (xb[down] - lo[basis][down]) / delta[down]
        hib = hi[basis]
        ratios[up] = (hib[up] - xb[up]) / (-delta[up])
        ratios = np.maximum(ratios, 0.0)
        flip = hi[q] - lo[q]
        rmin = ratios.min()
        if not np.isfinite(min(rmin, flip)):
            return "unbounded", it
        if flip <= rmin:
            step = flip
            x[basis] = xb - step * delta
            x[q] = hi[q] if direction > 0 else lo[q]
            status[q] = 1 if direction > 0 else -1
        else:
            step = rmin
            ties = np.flatnonzero(ratios <= rmin + 1e-12 * (1.0 + rmin))
            if streak > _DEGENERATE_STREAK:
                r = int(ties[np.argmin(basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(delta[ties]))])
            x[basis] = xb - step * delta
            x[q] = x[q] + direction * step
            leaving = basis[r]
            if down[r]:
                x[leaving] = lo[leaving]
                status[leaving] = -1
            else:
                x[leaving] = hi[leaving]
                status[leaving] = 1
            basis[r] = q
            status[q] = 0
        streak = streak + 1 if step <= 1e-14 * scale else 0
    return "iteration_limit", it


def weighted_lad(X, y, weights, max_iter=None, start=None):
    """Vertex solution of ``min sum_t w_t |y_t - x_t' theta|`` for full-row-rank ``X``.

    ``start`` is an optional initial guess of theta used only to seed the
    starting bound pattern of the dual variables.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    n, N = X.shape
    if max_iter is None:
        max_iter = 50 * (N + n) + 1000

    if start is None:
        start, *_ = np.linalg.lstsq(X.T, y, rcond=None)
    resid = y - X.T @ start

    # variables: d_0..d_{N-1}, then n artificials
    lo = np.concatenate([-w, np.zeros(n)])
    hi = np.concatenate([w, np.full(n, np.inf)])
    x = np.zeros(N + n)
    status = np.empty(N + n, dtype=np.int64)
    pos = resid > 0
    x[:N] = np.where(pos, w, -w)
    status[:N] = np.where(pos, 1, -1)
    r = -X @ x[:N]
    sgn = np.where(r >= 0, 1.0, -1.0)
    A = np.hstack([X, np.diag(sgn)])
    basis = np.arange(N, N + n)
    x[N:] = np.abs(r)
    status[N:] = 0

    cost1 = np.concatenate([np.zeros(N), np.ones(n)])
    st, it = _iterate(A, cost1, lo, hi, x, basis, status, max_iter, 0)
    if st != "optimal":
        return SimplexResult(None, None, basis, it, st)
    infeas = x[N:].sum()
    if infeas > 1e-9 * (1.0 + np.abs(w).sum()) * (1.0 + np.abs(X).max()):
        return SimplexResult(None, None, basis, it, "infeasible")

    # fix artificials at zero and pivot any basic ones out of the basis
    hi[N:] = 0.0
    x[N:] = 0.0
    for p in range(n):
        if basis[p] < N:
            continue
        B = A[:, basis]
        row = np.linalg.solve(B.T, np.eye(n)[p]) @ X
        cand = np.abs(row)
        cand[basis[basis < N]] = 0.0
        cand[w <= 0] *= 1e-3          # prefer columns that carry weight
        j = int(np.argmax(cand))
        if cand[j] > 1e-9 * (1.0 + np.abs(row).max()):
            status[basis[p]] = -1
            basis[p] = j
            status[j] = 0
        else:
            status[basis[p]] = 0

    cost2 = np.concatenate([-y, np.zeros(n)])
    st, it = _iterate(A, cost2, lo, hi, x, basis, status, max_iter, it)
    structural = basis[basis < N]
    if structural.size == n:
        theta = np.linalg.solve(X[:, structural].T, y[structural])
    else:
        pi = np.linalg.solve(A[:, basis].T, cost2[basis])
        theta = -pi
    return SimplexResult(theta, x[:N].copy(), np.sort(structural), it, st)
