# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled subset-enumeration kernels (same contract as ``_pykernels``).

Small dense routines are written out by hand: one-sided Jacobi for singular
values, Gauss-Jordan for inverses and cyclic Jacobi for symmetric eigenvalues.
"""

import numpy as np
from libc.math cimport fabs, sqrt, INFINITY
from libc.stdlib cimport malloc, free


cdef bint _next_comb(Py_ssize_t* c, Py_ssize_t k, Py_ssize_t N) noexcept nogil:
    cdef Py_ssize_t i = k - 1
    cdef Py_ssize_t j
    while i >= 0 and c[i] == N - k + i:
        i -= 1
    if i < 0:
        return False
    c[i] += 1
    for j in range(i + 1, k):
        c[j] = c[j - 1] + 1
    return True


cdef void _jacobi_sv(double* A, Py_ssize_t rows, Py_ssize_t cols, double* smax, double* smin) noexcept nogil:
    """One-sided Jacobi on the columns of A (column-major, rows >= cols); A is overwritten."""
    cdef Py_ssize_t p, q, i, sweep
    cdef double alpha, beta, gamma, zeta, t, cs, sn, ap, aq, off, s
    for sweep in range(60):
        off = 0.0
        for p in range(cols - 1):
            for q in range(p + 1, cols):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(rows):
                    ap = A[p * rows + i]
                    aq = A[q * rows + i]
                    alpha += ap * ap
                    beta += aq * aq
                    gamma += ap * aq
                if gamma == 0.0 or fabs(gamma) <= 1e-15 * sqrt(alpha * beta):
                    continue
                off += 1.0
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0:
                    t = 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                cs = 1.0 / sqrt(1.0 + t * t)
                sn = cs * t
                for i in range(rows):
                    ap = A[p * rows + i]
                    aq = A[q * rows + i]
                    A[p * rows + i] = cs * ap - sn * aq
                    A[q * rows + i] = sn * ap + cs * aq
        if off == 0.0:
            break
    smax[0] = 0.0
    smin[0] = INFINITY
    for p in range(cols):
        s = 0.0
        for i in range(rows):
            s += A[p * rows + i] * A[p * rows + i]
        s = sqrt(s)
        if s > smax[0]:
            smax[0] = s
        if s < smin[0]:
            smin[0] = s


cdef bint _invert(double* A, double* Ainv, Py_ssize_t n) noexcept nogil:
    """Gauss-Jordan with partial pivoting on row-major A (destroyed)."""
    cdef Py_ssize_t i, j, k, piv
    cdef double big, f, tmp
    for i in range(n):
        for j in range(n):
            Ainv[i * n + j] = 1.0 if i == j else 0.0
    for k in range(n):
        piv = k
        big = fabs(A[k * n + k])
        for i in range(k + 1, n):
            if fabs(A[i * n + k]) > big:
                big = fabs(A[i * n + k])
                piv = i
        if big == 0.0:
            return False
        if piv != k:
            for j in range(n):
                tmp = A[k * n + j]; A[k * n + j] = A[piv * n + j]; A[piv * n + j] = tmp
                tmp = Ainv[k * n + j]; Ainv[k * n + j] = Ainv[piv * n + j]; Ainv[piv * n + j] = tmp
        f = 1.0 / A[k * n + k]
        for j in range(n):
            A[k * n + j] *= f
            Ainv[k * n + j] *= f
        for i in range(n):
            if i != k:
                f = A[i * n + k]
                if f != 0.0:
                    for j in range(n):
                        A[i * n + j] -= f * A[k * n + j]
                        Ainv[i * n + j] -= f * Ainv[k * n + j]
    return True


cdef void _sym_eig_extremes(double* A, Py_ssize_t n, double* lmin, double* lmax) noexcept nogil:
    """Cyclic Jacobi eigenvalues of symmetric row-major A (destroyed)."""
    cdef Py_ssize_t p, q, k, sweep
    cdef double off, theta, t, c, s, akp, akq, app, aqq, apq, tot
    for sweep in range(100):
        off = 0.0
        tot = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    off += A[p * n + q] * A[p * n + q]
                tot += A[p * n + q] * A[p * n + q]
        if off <= 1e-30 * tot:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p * n + q]
                if apq == 0.0:
                    continue
                app = A[p * n + p]
                aqq = A[q * n + q]
                theta = (aqq - app) / (2.0 * apq)
                if theta >= 0:
                    t = 1.0 / (theta + sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + sqrt(1.0 + theta * theta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = A[k * n + p]
                    akq = A[k * n + q]
                    A[k * n + p] = c * akp - s * akq
                    A[k * n + q] = s * akp + c * akq
                for k in range(n):
                    akp = A[p * n + k]
                    akq = A[q * n + k]
                    A[p * n + k] = c * akp - s * akq
                    A[q * n + k] = s * akp + c * akq
    lmin[0] = INFINITY
    lmax[0] = -INFINITY
    for p in range(n):
        if A[p * n + p] < lmin[0]:
            lmin[0] = A[p * n + p]
        if A[p * n + p] > lmax[0]:
            lmax[0] = A[p * n + p]


cdef double _det(double* A, Py_ssize_t n) noexcept nogil:
    """Determinant by partial-pivot elimination on row-major A (destroyed)."""
    cdef Py_ssize_t i, j, k, piv
    cdef double d = 1.0, big, f, tmp
    for k in range(n):
        piv = k
        big = fabs(A[k * n + k])
        for i in range(k + 1, n):
            if fabs(A[i * n + k]) > big:
                big = fabs(A[i * n + k])
                piv = i
        if big == 0.0:
            return 0.0
        if piv != k:
            d = -d
            for j in range(n):
                tmp = A[k * n + j]; A[k * n + j] = A[piv * n + j]; A[piv * n + j] = tmp
        d *= A[k * n + k]
        for i in range(k + 1, n):
            f = A[i * n + k] / A[k * n + k]
            for j in range(k, n):
                A[i * n + j] -= f * A[k * n + j]
    return d


def first_deficient_subset(X, Py_ssize_t m, double rtol):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=float)
    cdef Py_ssize_t n = Xv.shape[0], N = Xv.shape[1]
    cdef Py_ssize_t i, j
    cdef double smax, smin
    cdef bint found = False
    if m < n:
        return tuple(range(m)) if m <= N else None
    if m > N:
        return None
    cdef Py_ssize_t* c = <Py_ssize_t*> malloc(m * sizeof(Py_ssize_t))
    cdef double* A = <double*> malloc(m * n * sizeof(double))
    try:
        with nogil:
            for i in range(m):
                c[i] = i
            while True:
                for j in range(n):
                    for i in range(m):
                        A[j * m + i] = Xv[j, c[i]]
                _jacobi_sv(A, m, n, &smax, &smin)
                if not (smax > 0 and smin >= rtol * smax):
                    found = True
                    break
                if not _next_comb(c, m, N):
                    break
        if found:
            return tuple(int(c[i]) for i in range(m))
        return None
    finally:
        free(c)
        free(A)


def max_hyperplane_count(X, double rtol):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=float)
    cdef Py_ssize_t n = Xv.shape[0], N = Xv.shape[1]
    cdef Py_ssize_t k = n - 1
    cdef Py_ssize_t i, j, r, rr, t, cnt, best = 0
    cdef double smax, smin, nn, proj, thr
    norms_np = np.linalg.norm(np.asarray(Xv), axis=0)
    cdef double[::1] norms = norms_np
    if n == 1:
        return int(np.count_nonzero(norms_np == 0.0))
    if k > N:
        return 0
    cdef Py_ssize_t* c = <Py_ssize_t*> malloc(k * sizeof(Py_ssize_t))
    cdef double* A = <double*> malloc(n * k * sizeof(double))
    cdef double* M = <double*> malloc(k * k * sizeof(double))
    cdef double* nv = <double*> malloc(n * sizeof(double))
    try:
        with nogil:
            for i in range(k):
                c[i] = i
            while True:
                for j in range(k):
                    for i in range(n):
                        A[j * n + i] = Xv[i, c[j]]
                _jacobi_sv(A, n, k, &smax, &smin)
                if smax > 0 and smin >= rtol * smax:
                    nn = 0.0
                    for r in range(n):
                        # minor without row r
                        rr = 0
                        for i in range(n):
                            if i == r:
                                continue
                            for j in range(k):
                                M[rr * k + j] = Xv[i, c[j]]
                            rr += 1
                        nv[r] = _det(M, k) * (1.0 if r % 2 == 0 else -1.0)
                        nn += nv[r] * nv[r]
                    nn = sqrt(nn)
                    if nn > 0:
                        cnt = 0
                        for t in range(N):
                            proj = 0.0
                            for i in range(n):
                                proj += nv[i] * Xv[i, t]
                            proj = fabs(proj) / nn
                            thr = rtol * (smax if smax > norms[t] else norms[t])
                            if proj <= thr:
                                cnt += 1
                        if cnt > best:
                            best = cnt
                if not _next_comb(c, k, N):
                    break
        return int(best)
    finally:
        free(c); free(A); free(M); free(nv)


def v1_max(X, Py_ssize_t k, double rtol):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=float)
    cdef Py_ssize_t n = Xv.shape[0], N = Xv.shape[1]
    cdef Py_ssize_t i, j, a, t
    cdef double smax, smin, rowsum, v, best = 0.0
    cdef bint infinite = False
    if k == N:
        return 0.0
    if k < n:
        return float("inf")
    cdef Py_ssize_t* c = <Py_ssize_t*> malloc(k * sizeof(Py_ssize_t))
    cdef char* inI = <char*> malloc(N * sizeof(char))
    cdef double* A = <double*> malloc(k * n * sizeof(double))
    cdef double* G = <double*> malloc(n * n * sizeof(double))
    cdef double* Gi = <double*> malloc(n * n * sizeof(double))
    cdef double* B = <double*> malloc(n * N * sizeof(double))
    try:
        with nogil:
            for i in range(k):
                c[i] = i
            while True:
                for j in range(n):
                    for i in range(k):
                        A[j * k + i] = Xv[j, c[i]]
                _jacobi_sv(A, k, n, &smax, &smin)
                if not (smax > 0 and smin >= rtol * smax):
                    infinite = True
                    break
                for i in range(n):
                    for j in range(n):
                        v = 0.0
                        for a in range(k):
                            v += Xv[i, c[a]] * Xv[j, c[a]]
                        G[i * n + j] = v
                if not _invert(G, Gi, n):
                    infinite = True
                    break
                for t in range(N):
                    inI[t] = 0
                for a in range(k):
                    inI[c[a]] = 1
                for i in range(n):
                    for t in range(N):
                        v = 0.0
                        for j in range(n):
                            v += Gi[i * n + j] * Xv[j, t]
                        B[i * N + t] = v
                for a in range(k):
                    rowsum = 0.0
                    for t in range(N):
                        if inI[t]:
                            continue
                        v = 0.0
                        for i in range(n):
                            v += Xv[i, c[a]] * B[i * N + t]
                        rowsum += fabs(v)
                    if rowsum > best:
                        best = rowsum
                if not _next_comb(c, k, N):
                    break
        return float("inf") if infinite else float(best)
    finally:
        free(c); free(inI); free(A); free(G); free(Gi); free(B)


def error_constants(X, Py_ssize_t min_size, double rtol):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=float)
    cdef Py_ssize_t n = Xv.shape[0], N = Xv.shape[1]
    Ginv_np = np.ascontiguousarray(np.linalg.inv(np.asarray(Xv) @ np.asarray(Xv).T))
    G_np = np.ascontiguousarray(np.asarray(Xv) @ np.asarray(Xv).T)
    cdef const double[:, ::1] Ginv = Ginv_np
    cdef const double[:, ::1] Gfull = G_np
    cdef Py_ssize_t size, i, j, a, nn = n * n
    cdef double smax, smin, v, lmin, lmax, k1, k2
    cdef double K1 = -1.0, K2 = -1.0
    cdef Py_ssize_t* c = <Py_ssize_t*> malloc(N * sizeof(Py_ssize_t))
    cdef Py_ssize_t* best = <Py_ssize_t*> malloc(N * sizeof(Py_ssize_t))
    cdef Py_ssize_t best_size = 0
    cdef double* A = <double*> malloc(N * n * sizeof(double))
    cdef double* GJ = <double*> malloc(nn * sizeof(double))
    cdef double* W = <double*> malloc(nn * sizeof(double))
    cdef double* GJi = <double*> malloc(nn * sizeof(double))
    cdef double* E = <double*> malloc(nn * sizeof(double))
    cdef double* E2 = <double*> malloc(nn * sizeof(double))
    cdef double* P = <double*> malloc(nn * sizeof(double))
    cdef double* C = <double*> malloc(nn * sizeof(double))
    cdef double* H = <double*> malloc(nn * sizeof(double))
    try:
        with nogil:
            size = min_size if min_size > n else n
            while size <= N:
                for i in range(size):
                    c[i] = i
                while True:
                    for j in range(n):
                        for i in range(size):
                            A[j * size + i] = Xv[j, c[i]]
                    _jacobi_sv(A, size, n, &smax, &smin)
                    if smax > 0 and smin >= rtol * smax:
                        for i in range(n):
                            for j in range(n):
                                v = 0.0
                                for a in range(size):
                                    v += Xv[i, c[a]] * Xv[j, c[a]]
                                GJ[i * n + j] = v
                                W[i * n + j] = v
                        _invert(W, GJi, n)
                        # E = (G - GJ) GJ^{-1}
                        for i in range(n):
                            for j in range(n):
                                v = 0.0
                                for a in range(n):
                                    v += (Gfull[i, a] - GJ[i * n + a]) * GJi[a * n + j]
                                E[i * n + j] = v
                        for i in range(n):
                            for j in range(n):
                                v = 0.0
                                for a in range(n):
                                    v += E[i * n + a] * E[a * n + j]
                                E2[i * n + j] = v
                        # P = I + E + 2E^2 + E^3
                        for i in range(n):
                            for j in range(n):
                                v = 0.0
                                for a in range(n):
                                    v += E2[i * n + a] * E[a * n + j]
                                P[i * n + j] = (1.0 if i == j else 0.0) + E[i * n + j] + 2.0 * E2[i * n + j] + v
                        for i in range(n):
                            for j in range(n):
                                v = 0.0
                                for a in range(n):
                                    v += Ginv[i, a] * P[a * n + j]
                                C[i * n + j] = v
                        # H = C GJ C'
                        for i in range(n):
                            for j in range(n):
                                v = 0.0
                                for a in range(n):
                                    v += C[i * n + a] * GJ[a * n + j]
                                W[i * n + j] = v
                        for i in range(n):
                            for j in range(n):
                                v = 0.0
                                for a in range(n):
                                    v += W[i * n + a] * C[j * n + a]
                                H[i * n + j] = v
                        for i in range(n):
                            for j in range(i + 1, n):
                                v = 0.5 * (H[i * n + j] + H[j * n + i])
                                H[i * n + j] = v
                                H[j * n + i] = v
                        _sym_eig_extremes(H, n, &lmin, &lmax)
                        k1 = sqrt(size * (lmax if lmax > 0 else 0.0))
                        _sym_eig_extremes(GJ, n, &lmin, &lmax)
                        k2 = sqrt(size / lmin)
                        if k1 > K1:
                            K1 = k1
                            best_size = size
                            for i in range(size):
                                best[i] = c[i]
                        if k2 > K2:
                            K2 = k2
                    if not _next_comb(c, size, N):
                        break
                size += 1
        J = tuple(int(best[i]) for i in range(best_size)) if best_size else None
        return float(K1), float(K2), J
    finally:
        free(c); free(best); free(A); free(GJ); free(W); free(GJi)
        free(E); free(E2); free(P); free(C); free(H)
