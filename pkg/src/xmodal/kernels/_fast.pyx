# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend.

Same surface as `_numpy_backend`; matrix products go through BLAS dgemm
(row-major buffers mapped onto the column-major interface), everything else
is fused single-pass loops. Single-threaded on purpose: reductions keep a
fixed order so results are reproducible run to run.
"""

import numpy as np

from scipy.linalg.cython_blas cimport dgemm

NAME = "fast"

cdef double _EPS_DEFAULT = 1e-12


cdef inline void _dgemm(char ta, char tb, int m, int n, int k,
                        double alpha, double* a, int lda,
                        double* b, int ldb, double beta,
                        double* c, int ldc) noexcept nogil:
    dgemm(&ta, &tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


cdef void _mm_nn(double[:, ::1] a, double[:, ::1] b, double[:, ::1] out) noexcept:
    # out = a @ b, row-major
    cdef int m = a.shape[0], k = a.shape[1], n = b.shape[1]
    cdef Py_ssize_t i, j
    if m == 0 or n == 0:
        return
    if k == 0:
        for i in range(m):
            for j in range(n):
                out[i, j] = 0.0
        return
    _dgemm(b'N', b'N', n, m, k, 1.0, &b[0, 0], n, &a[0, 0], k, 0.0, &out[0, 0], n)


cdef void _mm_nt(double[:, ::1] a, double[:, ::1] b, double[:, ::1] out) noexcept:
    # out = a @ b.T, row-major; a is (m, k), b is (n, k)
    cdef int m = a.shape[0], k = a.shape[1], n = b.shape[0]
    cdef Py_ssize_t i, j
    if m == 0 or n == 0:
        return
    if k == 0:
        for i in range(m):
            for j in range(n):
                out[i, j] = 0.0
        return
    _dgemm(b'T', b'N', n, m, k, 1.0, &b[0, 0], k, &a[0, 0], k, 0.0, &out[0, 0], n)


cdef void _mm_tn(double[:, ::1] a, double[:, ::1] b, double[:, ::1] out) noexcept:
    # out = a.T @ b, row-major; a is (n, k), b is (n, m)
    cdef int n = a.shape[0], k = a.shape[1], m = b.shape[1]
    cdef Py_ssize_t i, j
    if k == 0 or m == 0:
        return
    if n == 0:
        for i in range(k):
            for j in range(m):
                out[i, j] = 0.0
        return
    _dgemm(b'N', b'T', m, k, n, 1.0, &b[0, 0], m, &a[0, 0], k, 0.0, &out[0, 0], m)


def affine_forward(double[:, ::1] x, double[:, ::1] w, double[::1] b):
    cdef Py_ssize_t n = x.shape[0], m = w.shape[1]
    cdef Py_ssize_t i, j
    z_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] z = z_arr
    _mm_nn(x, w, z)
    for i in range(n):
        for j in range(m):
            z[i, j] += b[j]
    return z_arr


def affine_backward(double[:, ::1] x, double[:, ::1] w, double[:, ::1] g):
    cdef Py_ssize_t n = x.shape[0], k = x.shape[1], m = w.shape[1]
    cdef Py_ssize_t i, j
    gx_arr = np.empty((n, k), dtype=np.float64)
    gw_arr = np.empty((k, m), dtype=np.float64)
    gb_arr = np.zeros(m, dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    cdef double[:, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    _mm_nt(g, w, gx)
    _mm_tn(x, g, gw)
    for i in range(n):
        for j in range(m):
            gb[j] += g[i, j]
    return gx_arr, gw_arr, gb_arr


def relu_forward(double[:, ::1] z):
    cdef Py_ssize_t n = z.shape[0], m = z.shape[1]
    cdef Py_ssize_t i, j
    a_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] a = a_arr
    for i in range(n):
        for j in range(m):
            a[i, j] = z[i, j] if z[i, j] > 0.0 else 0.0
    return a_arr


def relu_backward(double[:, ::1] g, double[:, ::1] a):
    cdef Py_ssize_t n = g.shape[0], m = g.shape[1]
    cdef Py_ssize_t i, j
    gz_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] gz = gz_arr
    for i in range(n):
        for j in range(m):
            gz[i, j] = g[i, j] if a[i, j] > 0.0 else 0.0
    return gz_arr


def l2norm_rows(double[:, ::1] x, double eps=_EPS_DEFAULT):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    cdef Py_ssize_t i, j
    cdef double s, nv
    y_arr = np.empty((n, m), dtype=np.float64)
    norms_arr = np.empty(n, dtype=np.float64)
    skipped_arr = np.zeros(n, dtype=np.uint8)
    cdef double[:, ::1] y = y_arr
    cdef double[::1] norms = norms_arr
    cdef unsigned char[::1] skipped = skipped_arr
    for i in range(n):
        s = 0.0
        for j in range(m):
            s += x[i, j] * x[i, j]
        nv = s ** 0.5
        norms[i] = nv
        if nv < eps:
            skipped[i] = 1
            for j in range(m):
                y[i, j] = x[i, j]
        else:
            for j in range(m):
                y[i, j] = x[i, j] / nv
    return y_arr, norms_arr, skipped_arr.view(np.bool_)


def l2norm_rows_backward(double[:, ::1] g, double[:, ::1] y,
                         double[::1] norms, skipped):
    cdef Py_ssize_t n = g.shape[0], m = g.shape[1]
    cdef Py_ssize_t i, j
    cdef double dot
    cdef const unsigned char[::1] sk = np.ascontiguousarray(skipped, dtype=np.uint8)
    gx_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    for i in range(n):
        if sk[i]:
            for j in range(m):
                gx[i, j] = g[i, j]
        else:
            dot = 0.0
            for j in range(m):
                dot += g[i, j] * y[i, j]
            for j in range(m):
                gx[i, j] = (g[i, j] - y[i, j] * dot) / norms[i]
    return gx_arr


def pairwise_cosine(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], k = a.shape[1]
    cdef Py_ssize_t i, j
    cdef double s, v
    na_arr = np.empty(n, dtype=np.float64)
    nb_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] na = na_arr
    cdef double[::1] nb = nb_arr
    for i in range(n):
        s = 0.0
        for j in range(k):
            s += a[i, j] * a[i, j]
        na[i] = s ** 0.5
    for i in range(m):
        s = 0.0
        for j in range(k):
            s += b[i, j] * b[i, j]
        nb[i] = s ** 0.5
    d_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] d = d_arr
    _mm_nt(a, b, d)
    for i in range(n):
        for j in range(m):
            v = 1.0 - d[i, j] / na[i] / nb[j]
            if v < 0.0:
                v = 0.0
            elif v > 2.0:
                v = 2.0
            d[i, j] = v
    return d_arr


def momentum_update(double[::1] param, double[::1] grad, double[::1] vel,
                    double lr, double m):
    cdef Py_ssize_t n = param.shape[0]
    cdef Py_ssize_t i
    for i in range(n):
        vel[i] = m * vel[i] - lr * grad[i]
        param[i] += vel[i]


def hinge_forward(double[::1] d_pos, double[::1] d_neg, double gamma):
    cdef Py_ssize_t n = d_pos.shape[0]
    cdef Py_ssize_t i
    cdef double raw
    loss_arr = np.empty(n, dtype=np.float64)
    active_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] loss = loss_arr
    cdef unsigned char[::1] active = active_arr
    for i in range(n):
        raw = gamma + d_pos[i] - d_neg[i]
        if raw > 0.0:
            loss[i] = raw
            active[i] = 1
        else:
            loss[i] = 0.0
    return loss_arr, active_arr.view(np.bool_)


def add_rows(double[:, ::1] acc, idx, double[:, ::1] rows):
    cdef const long long[::1] ix = np.ascontiguousarray(idx, dtype=np.int64)
    cdef Py_ssize_t n = rows.shape[0], m = rows.shape[1]
    cdef Py_ssize_t i, j, r
    for i in range(n):
        r = ix[i]
        for j in range(m):
            acc[r, j] += rows[i, j]
