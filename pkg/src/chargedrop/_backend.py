"""Pairwise kernel loops, with a numba path and a pure-numpy fallback.

The backend is picked once at import time. Set ``CHARGEDROP_BACKEND=numpy``
to force the fallback (numba is also skipped automatically when it cannot be
imported). Both paths expose the same functions:

``pair_matrix(X, alpha, log_kernel)``
    dense kernel matrix with a zero diagonal, plus the smallest off-diagonal
    distance (so callers can detect coincident nodes).
``cross_matrix(X, Y, alpha, log_kernel)``
    rectangular kernel matrix between two node sets, plus the smallest distance.
``potential(P, X, w, alpha, log_kernel)``
    ``sum_j w_j k(p, x_j)`` at every row of ``P``, plus the smallest distance.
``quad_form(K, w)``
    ``w @ K @ w`` accumulated with compensated summation.
``neighbor_sums(X, A, labels, rho, alpha, log_kernel)``
    Gaussian-windowed near-field sums ``sum_j A_j exp(-(r_ij/rho_i)^2) k(r_ij)``
    over ``j != i`` with the same label; rows with a negative label get 0.

Reductions run in a fixed order in both paths, so results are reproducible
run to run. The two paths agree to a few ulps, not bit for bit.
"""

import math
import os

import numpy as np

__all__ = [
    "BACKEND",
    "pair_matrix",
    "cross_matrix",
    "potential",
    "quad_form",
    "neighbor_sums",
    "compensated_sum",
    "numpy_impl",
    "numba_impl",
    "set_threads",
]

_CHUNK = 256
# exp(-49) is below double rounding relative to the leading terms
_WINDOW = 7.0


# ---------------------------------------------------------------- numpy path


def _np_kernel_of_distance(r, alpha, log_kernel):
    if log_kernel:
        return -np.log(r)
    return r ** (-alpha)


def _np_pair_matrix(X, alpha, log_kernel):
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    K = np.empty((n, n))
    dmin = np.inf
    for i0 in range(0, n, _CHUNK):
        i1 = min(n, i0 + _CHUNK)
        diff = X[i0:i1, None, :] - X[None, :, :]
        r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        rows = np.arange(i0, i1)
        r[rows - i0, rows] = np.inf
        dmin = min(dmin, float(r.min()))
        with np.errstate(divide="ignore"):
            block = _np_kernel_of_distance(r, alpha, log_kernel)
        block[rows - i0, rows] = 0.0
        K[i0:i1] = block
    return K, dmin


def _np_cross_matrix(X, Y, alpha, log_kernel):
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    K = np.empty((X.shape[0], Y.shape[0]))
    dmin = np.inf
    for i0 in range(0, X.shape[0], _CHUNK):
        i1 = min(X.shape[0], i0 + _CHUNK)
        diff = X[i0:i1, None, :] - Y[None, :, :]
        r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        if r.size:
            dmin = min(dmin, float(r.min()))
        with np.errstate(divide="ignore"):
            K[i0:i1] = _np_kernel_of_distance(r, alpha, log_kernel)
    return K, dmin


def _np_potential(P, X, w, alpha, log_kernel):
    P = np.ascontiguousarray(P, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    out = np.empty(P.shape[0])
    dmin = np.inf
    for i0 in range(0, P.shape[0], _CHUNK):
        i1 = min(P.shape[0], i0 + _CHUNK)
        block, dm = _np_cross_matrix(P[i0:i1], X, alpha, log_kernel)
        dmin = min(dmin, dm)
        # numpy reduces a contiguous axis pairwise
        out[i0:i1] = (block * w[None, :]).sum(axis=1)
    return out, dmin


def _np_quad_form(K, w):
    w = np.ascontiguousarray(w, dtype=np.float64)
    rows = np.empty(K.shape[0])
    for i0 in range(0, K.shape[0], _CHUNK):
        i1 = min(K.shape[0], i0 + _CHUNK)
        rows[i0:i1] = (K[i0:i1] * w[None, :]).sum(axis=1)
    return math.fsum(w * rows)


def _np_neighbor_sums(X, A, labels, rho, alpha, log_kernel):
    X = np.ascontiguousarray(X, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    labels = np.asarray(labels)
    rho = np.asarray(rho, dtype=np.float64)
    n = X.shape[0]
    out = np.zeros(n)
    for i0 in range(0, n, _CHUNK):
        i1 = min(n, i0 + _CHUNK)
        diff = X[i0:i1, None, :] - X[None, :, :]
        r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        s = r / rho[i0:i1, None]
        keep = (labels[i0:i1, None] == labels[None, :]) & (s < _WINDOW) & (r > 0.0)
        keep &= labels[i0:i1, None] >= 0
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(keep, A[None, :] * np.exp(-s * s) * _np_kernel_of_distance(r, alpha, log_kernel), 0.0)
        out[i0:i1] = vals.sum(axis=1)
    return out


def _np_compensated_sum(a):
    return math.fsum(np.asarray(a, dtype=np.float64).ravel())


class _Impl:
    def __init__(self, name, pair_matrix, cross_matrix, potential, quad_form, compensated_sum, neighbor_sums):
        self.name = name
        self.neighbor_sums = neighbor_sums
        self.pair_matrix = pair_matrix
        self.cross_matrix = cross_matrix
        self.potential = potential
        self.quad_form = quad_form
        self.compensated_sum = compensated_sum


numpy_impl = _Impl(
    "numpy",
    _np_pair_matrix,
    _np_cross_matrix,
    _np_potential,
    _np_quad_form,
    _np_compensated_sum,
    _np_neighbor_sums,
)


# ---------------------------------------------------------------- numba path


def _build_numba():
    import numba
    from numba import njit, prange

    # try TBB last: older system TBB builds only produce a warning
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

    @njit(cache=True, inline="always")
    def _k(r, alpha, log_kernel):
        if log_kernel:
            return -math.log(r)
        return r ** (-alpha)

    @njit(cache=True, inline="always")
    def _k2(s, alpha, log_kernel):
        # kernel from the squared distance; skips the sqrt on the hot paths
        if log_kernel:
            return -0.5 * math.log(s)
        if alpha == 1.0:
            return 1.0 / math.sqrt(s)
        if alpha == 2.0:
            return 1.0 / s
        return s ** (-0.5 * alpha)

    @njit(cache=True, parallel=True)
    def pair_matrix(X, alpha, log_kernel):
        n, d = X.shape
        K = np.empty((n, n))
        rowmin = np.full(n, np.inf)
        # upper triangle only; each pair is owned by its smaller index
        for i in prange(n):
            K[i, i] = 0.0
            for j in range(i + 1, n):
                s = 0.0
                for c in range(d):
                    t = X[i, c] - X[j, c]
                    s += t * t
                if s < rowmin[i]:
                    rowmin[i] = s
                v = np.inf if s == 0.0 else _k2(s, alpha, log_kernel)
                K[i, j] = v
                K[j, i] = v
        dmin = np.inf
        for i in range(n):
            if rowmin[i] < dmin:
                dmin = rowmin[i]
        return K, math.sqrt(dmin)

    @njit(cache=True, parallel=True)
    def cross_matrix(X, Y, alpha, log_kernel):
        n, d = X.shape
        m = Y.shape[0]
        K = np.empty((n, m))
        rowmin = np.full(n, np.inf)
        for i in prange(n):
            for j in range(m):
                s = 0.0
                for c in range(d):
                    t = X[i, c] - Y[j, c]
                    s += t * t
                if s < rowmin[i]:
                    rowmin[i] = s
                K[i, j] = np.inf if s == 0.0 else _k2(s, alpha, log_kernel)
        dmin = np.inf
        for i in range(n):
            if rowmin[i] < dmin:
                dmin = rowmin[i]
        return K, math.sqrt(dmin)

    @njit(cache=True, parallel=True)
    def potential(P, X, w, alpha, log_kernel):
        n, d = P.shape
        m = X.shape[0]
        out = np.empty(n)
        rowmin = np.full(n, np.inf)
        for i in prange(n):
            acc = 0.0
            comp = 0.0
            for j in range(m):
                s = 0.0
                for c in range(d):
                    t = P[i, c] - X[j, c]
                    s += t * t
                if s < rowmin[i]:
                    rowmin[i] = s
                v = np.inf if s == 0.0 else w[j] * _k2(s, alpha, log_kernel)
                # Neumaier step
                t2 = acc + v
                if abs(acc) >= abs(v):
                    comp += (acc - t2) + v
                else:
                    comp += (v - t2) + acc
                acc = t2
            out[i] = acc + comp
        dmin = np.inf
        for i in range(n):
            if rowmin[i] < dmin:
                dmin = rowmin[i]
        return out, math.sqrt(dmin)

    @njit(cache=True)
    def compensated_sum(a):
        acc = 0.0
        comp = 0.0
        for v in a:
            t = acc + v
            if abs(acc) >= abs(v):
                comp += (acc - t) + v
            else:
                comp += (v - t) + acc
            acc = t
        return acc + comp

    @njit(cache=True, parallel=True)
    def _row_products(K, w):
        n = K.shape[0]
        rows = np.empty(n)
        for i in prange(n):
            acc = 0.0
            comp = 0.0
            for j in range(K.shape[1]):
                v = K[i, j] * w[j]
                t = acc + v
                if abs(acc) >= abs(v):
                    comp += (acc - t) + v
                else:
                    comp += (v - t) + acc
                acc = t
            rows[i] = w[i] * (acc + comp)
        return rows

    @njit(cache=True, parallel=True)
    def neighbor_sums(X, A, labels, rho, alpha, log_kernel, window):
        n, d = X.shape
        out = np.zeros(n)
        for i in prange(n):
            if labels[i] < 0:
                continue
            lim = window * rho[i]
            acc = 0.0
            for j in range(n):
                if j == i or labels[j] != labels[i]:
                    continue
                s = 0.0
                for c in range(d):
                    t = X[i, c] - X[j, c]
                    s += t * t
                r = math.sqrt(s)
                if r >= lim or r == 0.0:
                    continue
                q = r / rho[i]
                acc += A[j] * math.exp(-q * q) * _k(r, alpha, log_kernel)
            out[i] = acc
        return out

    def _neighbor_sums(X, A, labels, rho, alpha, log_kernel):
        return neighbor_sums(
            np.ascontiguousarray(X, dtype=np.float64),
            np.ascontiguousarray(A, dtype=np.float64),
            np.ascontiguousarray(labels, dtype=np.int64),
            np.ascontiguousarray(rho, dtype=np.float64),
            float(alpha),
            bool(log_kernel),
            _WINDOW,
        )

    def quad_form(K, w):
        w = np.ascontiguousarray(w, dtype=np.float64)
        return float(compensated_sum(_row_products(np.ascontiguousarray(K), w)))

    def _wrap2(fn):
        def call(X, alpha, log_kernel):
            K, dmin = fn(np.ascontiguousarray(X, dtype=np.float64), float(alpha), bool(log_kernel))
            return K, float(dmin)

        return call

    def _wrap3(fn):
        def call(X, Y, alpha, log_kernel):
            K, dmin = fn(
                np.ascontiguousarray(X, dtype=np.float64),
                np.ascontiguousarray(Y, dtype=np.float64),
                float(alpha),
                bool(log_kernel),
            )
            return K, float(dmin)

        return call

    def _potential(P, X, w, alpha, log_kernel):
        out, dmin = potential(
            np.ascontiguousarray(P, dtype=np.float64),
            np.ascontiguousarray(X, dtype=np.float64),
            np.ascontiguousarray(w, dtype=np.float64),
            float(alpha),
            bool(log_kernel),
        )
        return out, float(dmin)

    def _csum(a):
        return float(compensated_sum(np.ascontiguousarray(np.ravel(a), dtype=np.float64)))

    return _Impl(
        "numba", _wrap2(pair_matrix), _wrap3(cross_matrix), _potential, quad_form, _csum, _neighbor_sums
    )


numba_impl = None
if os.environ.get("CHARGEDROP_BACKEND", "numba").strip().lower() != "numpy":
    try:
        numba_impl = _build_numba()
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba_impl = None

_active = numba_impl if numba_impl is not None else numpy_impl
BACKEND = _active.name

pair_matrix = _active.pair_matrix
cross_matrix = _active.cross_matrix
potential = _active.potential
quad_form = _active.quad_form
neighbor_sums = _active.neighbor_sums
compensated_sum = _active.compensated_sum


def set_threads(n):
    """Cap the numba worker pool; a no-op on the numpy path."""
    if numba_impl is None or n is None:
        return
    import numba

    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
