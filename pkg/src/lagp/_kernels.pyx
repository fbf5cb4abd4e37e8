# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: ALC candidate scoring and the fused dual reduction.

Candidates are the parallel work items.  Each item owns three j-vectors and
one p-vector of scratch (``batch_scratch_doubles``); items are grouped in
tiles of ``TILE`` so a row of K^-1 is reused across the tile while it is
still in cache.  Tiling never changes the summation order inside an item.
"""

import numpy as np

from cython.parallel cimport prange, threadid
from libc.math cimport exp, INFINITY

NAME = "compiled"

cdef enum:
    TILE = 8  # the serial kernel's unrolled chains assume 8

WORK_ITEMS_PER_TILE = TILE


cdef inline Py_ssize_t _next_pow2(Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t P = 1
    while P < n:
        P <<= 1
    return P


cdef inline void _lane_fold(double* v, Py_ssize_t n, Py_ssize_t L) noexcept nogil:
    cdef Py_ssize_t start, t, w
    start = L
    while start < n:
        w = n - start
        if w > L:
            w = L
        for t in range(w):
            v[t] += v[start + t]
        start += L


cdef inline double _tree(double* v, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t P = _next_pow2(n), half, m, t, s
    half = P >> 1
    m = n - half
    if m > half:
        m = half
    for t in range(m):
        v[t] += v[t + half]
    s = half >> 1
    while s > 0:
        for t in range(s):
            v[t] += v[t + s]
        s >>= 1
    return v[0]


cdef inline void _tree_pair(double* v1, double* v2, Py_ssize_t n,
                            double* s1, double* s2) noexcept nogil:
    # one halving pass over both arrays, then each half of the work goes to
    # one array in the power-of-two phase
    cdef Py_ssize_t P = _next_pow2(n), half, m, t, s
    half = P >> 1
    m = n - half
    if m > half:
        m = half
    for t in range(m):
        v1[t] += v1[t + half]
        v2[t] += v2[t + half]
    s = half >> 1
    while s > 0:
        for t in range(s):
            v1[t] += v1[t + s]
        for t in range(s):
            v2[t] += v2[t + s]
        s >>= 1
    s1[0] = v1[0]
    s2[0] = v2[0]


cdef inline double _lane_reduce(double* v, Py_ssize_t n, Py_ssize_t lanes) noexcept nogil:
    cdef Py_ssize_t L = lanes if lanes < n else n
    _lane_fold(v, n, L)
    return _tree(v, L)


cdef inline void _lane_reduce_pair(double* v1, double* v2, Py_ssize_t n, Py_ssize_t lanes,
                                   double* s1, double* s2) noexcept nogil:
    cdef Py_ssize_t L = lanes if lanes < n else n
    _lane_fold(v1, n, L)
    _lane_fold(v2, n, L)
    _tree_pair(v1, v2, L, s1, s2)


def batch_scratch_doubles(Py_ssize_t j, Py_ssize_t p):
    return 3 * j + p


def fused_dual_reduce(v1, v2):
    cdef double[::1] a = np.array(v1, dtype=np.float64).ravel()
    cdef double[::1] b = np.array(v2, dtype=np.float64).ravel()
    cdef double s1 = 0.0, s2 = 0.0
    cdef Py_ssize_t n = a.shape[0]
    if n > 0:
        _tree_pair(&a[0], &b[0], n, &s1, &s2)
    return s1, s2


def lane_reduce(double[:, ::1] V, Py_ssize_t lanes):
    cdef Py_ssize_t r, n = V.shape[1]
    out = np.zeros(V.shape[0])
    cdef double[::1] o = out
    if n == 0:
        return out
    for r in range(V.shape[0]):
        o[r] = _lane_reduce(&V[r, 0], n, lanes)
    return out


cdef inline double _corr(const double* a, const double* b, Py_ssize_t p,
                         double theta) noexcept nogil:
    cdef double acc = 0.0, d
    cdef Py_ssize_t i
    for i in range(p):
        d = a[i] - b[i]
        acc += d * d
    return exp(-acc / theta)


cdef void _batch_tile(const double[:, ::1] X, const double[:, ::1] Ki, const double[::1] h,
                      const double[:, ::1] Xc, const double[::1] xref,
                      double theta, double eta, Py_ssize_t lanes, double scale, double tol,
                      Py_ssize_t b0, Py_ssize_t b1, double* scratch,
                      double[::1] delta) noexcept nogil:
    cdef Py_ssize_t j = X.shape[0], p = X.shape[1]
    cdef Py_ssize_t stride = 3 * j + p
    cdef Py_ssize_t nt = b1 - b0, c, t, i
    cdef double *xb
    cdef double *k
    cdef double *g
    cdef double *l
    cdef const double *r0
    cdef const double *r1
    cdef const double *r2
    cdef const double *r3
    cdef double k0, k1, k2, k3, acc, s, minv, cval, gh, s1, s2

    for c in range(nt):
        xb = scratch + c * stride
        k = xb + p
        g = k + j
        # 1: stage the candidate row
        for i in range(p):
            xb[i] = Xc[b0 + c, i]
        # 2: k_j(x_b)
        for t in range(j):
            k[t] = _corr(xb, &X[t, 0], p, theta)
            g[t] = 0.0
    # 3: g_t = sum_i k[i] K^-1[i, t], column-wise access to K^-1.  Four rows
    # per pass keep g[t] in a register; the additions stay in order of i.
    i = 0
    while i + 4 <= j:
        r0 = &Ki[i, 0]
        r1 = &Ki[i + 1, 0]
        r2 = &Ki[i + 2, 0]
        r3 = &Ki[i + 3, 0]
        for c in range(nt):
            k = scratch + c * stride + p
            g = k + j
            k0 = k[i]
            k1 = k[i + 1]
            k2 = k[i + 2]
            k3 = k[i + 3]
            for t in range(j):
                acc = g[t]
                acc = acc + k0 * r0[t]
                acc = acc + k1 * r1[t]
                acc = acc + k2 * r2[t]
                acc = acc + k3 * r3[t]
                g[t] = acc
        i = i + 4
    while i < j:
        r0 = &Ki[i, 0]
        for c in range(nt):
            k = scratch + c * stride + p
            g = k + j
            k0 = k[i]
            for t in range(j):
                g[t] = g[t] + k0 * r0[t]
        i = i + 1
    for c in range(nt):
        xb = scratch + c * stride
        k = xb + p
        g = k + j
        l = g + j
        for t in range(j):
            l[t] = g[t] * k[t]
        # 4
        s = _lane_reduce(l, j, lanes)
        # 5
        minv = 1.0 + eta - s
        if not minv > tol:
            delta[b0 + c] = -INFINITY
            continue
        for t in range(j):
            g[t] = -g[t] / minv
        cval = _corr(xb, &xref[0], p, theta)
        # 6
        gh = 0.0
        for t in range(j):
            gh += g[t] * h[t]
        for t in range(j):
            k[t] = h[t] * g[t]
            l[t] = k[t] * (gh * minv)
        # 7
        _lane_reduce_pair(l, k, j, lanes, &s1, &s2)
        # 8-9
        delta[b0 + c] = (s1 + 2.0 * s2 * cval + cval * cval / minv) * scale


cdef void _serial_tile(const double[:, ::1] X, const double[:, ::1] Ki, const double[::1] h,
                       const double[:, ::1] Xc, const double[::1] xref,
                       double theta, double eta, double scale, double tol,
                       Py_ssize_t b0, Py_ssize_t b1, double* scratch,
                       double[::1] delta) noexcept nogil:
    cdef Py_ssize_t j = X.shape[0], p = X.shape[1]
    cdef Py_ssize_t stride = 2 * j
    cdef Py_ssize_t nt = b1 - b0, c, t, i
    cdef double *k
    cdef double *u
    cdef const double* row
    cdef double* kp[TILE]
    cdef double a[TILE]
    cdef double r, acc, ell, minv, cval, gh

    for c in range(nt):
        k = scratch + c * stride
        for t in range(j):
            k[t] = _corr(&Xc[b0 + c, 0], &X[t, 0], p, theta)
    # u = K^-1 k, one sequential row dot product per entry; a full tile runs
    # its TILE dot products as independent chains
    for t in range(j):
        row = &Ki[t, 0]
        if nt == TILE:
            for c in range(TILE):
                kp[c] = scratch + c * stride
                a[c] = 0.0
            for i in range(j):
                r = row[i]
                a[0] = a[0] + r * kp[0][i]
                a[1] = a[1] + r * kp[1][i]
                a[2] = a[2] + r * kp[2][i]
                a[3] = a[3] + r * kp[3][i]
                a[4] = a[4] + r * kp[4][i]
                a[5] = a[5] + r * kp[5][i]
                a[6] = a[6] + r * kp[6][i]
                a[7] = a[7] + r * kp[7][i]
            for c in range(TILE):
                kp[c][j + t] = a[c]
        else:
            for c in range(nt):
                k = scratch + c * stride
                acc = 0.0
                for i in range(j):
                    acc = acc + row[i] * k[i]
                k[j + t] = acc
    for c in range(nt):
        k = scratch + c * stride
        u = k + j
        ell = 0.0
        for t in range(j):
            ell += k[t] * u[t]
        minv = 1.0 + eta - ell
        if not minv > tol:
            delta[b0 + c] = -INFINITY
            continue
        gh = 0.0
        for t in range(j):
            gh += h[t] * (-u[t] / minv)
        cval = _corr(&Xc[b0 + c, 0], &xref[0], p, theta)
        delta[b0 + c] = (minv * gh * gh + 2.0 * cval * gh + cval * cval / minv) * scale


def alc_batch(const double[:, ::1] X, const double[:, ::1] Ki, const double[::1] h,
              const double[:, ::1] Xc, const double[::1] xref,
              double theta, double eta, Py_ssize_t lanes,
              double scale=1.0, double tol=1e-12, int threads=1):
    cdef Py_ssize_t j = X.shape[0], p = X.shape[1], nc = Xc.shape[0]
    cdef Py_ssize_t ntile = (nc + TILE - 1) // TILE, tile, b0, b1
    out = np.empty(nc)
    cdef double[::1] delta = out
    if nc == 0:
        return out
    if lanes < 1:
        lanes = 1
    if threads < 1:
        threads = 1
    cdef double[:, ::1] scratch = np.empty((threads, TILE * (3 * j + p)))
    for tile in prange(ntile, nogil=True, schedule="static", num_threads=threads):
        b0 = tile * TILE
        b1 = b0 + TILE
        if b1 > nc:
            b1 = nc
        _batch_tile(X, Ki, h, Xc, xref, theta, eta, lanes, scale, tol,
                    b0, b1, &scratch[threadid(), 0], delta)
    return out


def alc_serial(const double[:, ::1] X, const double[:, ::1] Ki, const double[::1] h,
               const double[:, ::1] Xc, const double[::1] xref,
               double theta, double eta, double scale=1.0, double tol=1e-12, int threads=1):
    cdef Py_ssize_t j = X.shape[0], nc = Xc.shape[0]
    cdef Py_ssize_t ntile = (nc + TILE - 1) // TILE, tile, b0, b1
    out = np.empty(nc)
    cdef double[::1] delta = out
    if nc == 0:
        return out
    if threads < 1:
        threads = 1
    cdef double[:, ::1] scratch = np.empty((threads, TILE * 2 * j + 1))
    for tile in prange(ntile, nogil=True, schedule="static", num_threads=threads):
        b0 = tile * TILE
        b1 = b0 + TILE
        if b1 > nc:
            b1 = nc
        _serial_tile(X, Ki, h, Xc, xref, theta, eta, scale, tol,
                     b0, b1, &scratch[threadid(), 0], delta)
    return out
