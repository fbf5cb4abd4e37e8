"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable or when
``LAGP_PURE_PYTHON`` is set.  Signatures match the extension exactly.
Candidates are processed in blocks so that the working set stays at three
j-vectors plus one p-vector per candidate in flight.
"""

import numpy as np

NAME = "pure"
TILE = 2048
WORK_ITEMS_PER_TILE = TILE


def next_pow2(n):
    P = 1
    while P < n:
        P <<= 1
    return P


def _tree(arrays, n):
    # halving pass then power-of-two pass, in place on column 0..n-1
    P = next_pow2(n)
    half = P >> 1
    m = min(half, n - half)
    if m > 0:
        for A in arrays:
            A[:, :m] += A[:, half:half + m]
    s = half >> 1
    while s > 0:
        for A in arrays:
            A[:, :s] += A[:, s:2 * s]
        s >>= 1
    return tuple(A[:, 0].copy() for A in arrays)


def _lane_fold(V, lanes):
    j = V.shape[1]
    L = min(lanes, j)
    for start in range(L, j, L):
        stop = min(start + L, j)
        V[:, :stop - start] += V[:, start:stop]
    return L


def lane_reduce(V, lanes):
    """Row sums of V (modified in place): strided per-lane sums, then a tree."""
    L = _lane_fold(V, lanes)
    return _tree((V,), L)[0]


def lane_reduce_pair(V1, V2, lanes):
    L = _lane_fold(V1, lanes)
    _lane_fold(V2, lanes)
    return _tree((V1, V2), L)


def fused_dual_reduce(v1, v2):
    a = np.array(v1, dtype=np.float64, ndmin=2)
    b = np.array(v2, dtype=np.float64, ndmin=2)
    s1, s2 = _tree((a, b), a.shape[1])
    return float(s1[0]), float(s2[0])


def _corr_block(A, B, theta, out=None, tmp=None):
    shape = (A.shape[0], B.shape[0])
    acc = np.zeros(shape) if out is None else out
    acc[...] = 0.0
    d = np.empty(shape) if tmp is None else tmp
    for i in range(A.shape[1]):
        np.subtract(A[:, i, None], B[None, :, i], out=d)
        d *= d
        acc += d
    acc /= -theta
    return np.exp(acc, out=acc)


def batch_scratch_doubles(j, p):
    return 3 * j + p


def alc_serial(X, Ki, h, Xc, xref, theta, eta, scale=1.0, tol=1e-12, threads=1):
    """Direct assembly of the reduction in variance for every candidate."""
    nc = Xc.shape[0]
    out = np.empty(nc)
    for b0 in range(0, nc, TILE):
        xb = Xc[b0:b0 + TILE]
        kb = _corr_block(xb, X, theta)
        u = kb @ Ki
        ell = np.einsum("ij,ij->i", kb, u)
        minv = 1.0 + eta - ell
        ok = minv > tol
        safe = np.where(ok, minv, 1.0)
        gh = -(u @ h) / safe
        c = _corr_block(xb, xref[None, :], theta)[:, 0]
        d = safe * gh * gh + 2.0 * c * gh + c * c / safe
        out[b0:b0 + TILE] = np.where(ok, d * scale, -np.inf)
    return out


def alc_batch(X, Ki, h, Xc, xref, theta, eta, lanes, scale=1.0, tol=1e-12, threads=1):
    """Staged evaluation mirroring the accelerator kernel, one block of
    candidates (work items) at a time."""
    nc, j = Xc.shape[0], X.shape[0]
    out = np.empty(nc)
    work = np.empty((3, min(TILE, nc), j))
    for b0 in range(0, nc, TILE):
        # 1-2: stage candidate rows, correlations to the local design
        xb = Xc[b0:b0 + TILE]
        nb = xb.shape[0]
        k, g, ell = work[0, :nb], work[1, :nb], work[2, :nb]
        _corr_block(xb, X, theta, out=k, tmp=g)
        # 3: K^-1 k_j(x_b), then the products for the first reduction
        np.matmul(k, Ki, out=g)
        np.multiply(g, k, out=ell)
        # 4
        s = lane_reduce(ell, lanes)
        # 5
        minv = 1.0 + eta - s
        ok = minv > tol
        safe = np.where(ok, minv, 1.0)
        g /= -safe[:, None]
        c = _corr_block(xb, xref[None, :], theta)[:, 0]
        # 6: product vectors for both dot products
        gh = g @ h
        np.multiply(g, h[None, :], out=k)
        np.multiply(k, (gh * safe)[:, None], out=ell)
        # 7
        s1, s2 = lane_reduce_pair(ell, k, lanes)
        # 8-9
        d = s1 + 2.0 * s2 * c + c * c / safe
        out[b0:b0 + TILE] = np.where(ok, d * scale, -np.inf)
    return out
