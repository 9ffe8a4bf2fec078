# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the bottleneck MLP: same contract as _mlp_numpy.

Fuses the layer walk into one call (BLAS dgemm per block, bias add and SiLU
in tight C loops) to cut interpreter and temporary-array overhead on the
estimation hot path. Results match the NumPy kernels to rounding error.
"""

from libc.math cimport exp
from libc.string cimport memcpy

from scipy.linalg.cython_blas cimport dgemm

import numpy as np


cdef void _gemm_rm(const double[:, ::1] a, const double[:, ::1] b,
                   double[:, ::1] c, double beta) noexcept nogil:
    # Row-major C(m,n) = A(m,k) @ B(k,n) + beta * C, via column-major BLAS
    # with swapped operands.
    cdef int m = a.shape[0]
    cdef int k = a.shape[1]
    cdef int n = b.shape[1]
    cdef double alpha = 1.0
    if m == 0 or n == 0 or k == 0:
        return
    dgemm("N", "N", &n, &m, &k, &alpha, <double*> &b[0, 0], &n,
          <double*> &a[0, 0], &k, &beta, &c[0, 0], &n)


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef void _bias_silu(double[:, ::1] z, const double[::1] b) noexcept nogil:
    cdef Py_ssize_t i, o
    cdef double zz, s
    for i in range(z.shape[0]):
        for o in range(z.shape[1]):
            zz = z[i, o] + b[o]
            s = _sigmoid(zz)
            z[i, o] = zz * s


cdef void _bias_only(double[:, ::1] z, const double[::1] b) noexcept nogil:
    cdef Py_ssize_t i, o
    for i in range(z.shape[0]):
        for o in range(z.shape[1]):
            z[i, o] = z[i, o] + b[o]


cdef void _bias_silu_deriv(double[:, ::1] z, const double[::1] b,
                           double[:, ::1] dz) noexcept nogil:
    cdef Py_ssize_t i, o
    cdef double zz, s
    for i in range(z.shape[0]):
        for o in range(z.shape[1]):
            zz = z[i, o] + b[o]
            s = _sigmoid(zz)
            z[i, o] = zz * s
            dz[i, o] = s * (1.0 + zz * (1.0 - s))


cdef void _scale_tangent(double[:, :, ::1] t, const double[:, ::1] dz) noexcept nogil:
    cdef Py_ssize_t i, r, o
    for i in range(t.shape[0]):
        for r in range(t.shape[1]):
            for o in range(t.shape[2]):
                t[i, r, o] = t[i, r, o] * dz[i, o]


def forward(list weights, list biases, skips, a0):
    cdef int nt = len(weights)
    cdef int j, skip, p
    acts = [np.ascontiguousarray(a0, dtype=np.float64)]
    for j in range(nt):
        w = weights[j]
        skip = skips[j]
        prev = acts[j]
        p = prev.shape[1]
        z = np.empty((prev.shape[0], w.shape[1]), dtype=np.float64)
        _gemm_rm(prev, w[:p], z, 0.0)
        if skip >= 0:
            _gemm_rm(acts[skip], w[p:], z, 1.0)
        if j < nt - 1:
            _bias_silu(z, biases[j])
        else:
            _bias_only(z, biases[j])
        acts.append(z)
    return acts[nt]


cdef void _broadcast_rows(double[:, :, ::1] t, const double[:, ::1] w_rows,
                          bint accumulate) noexcept nogil:
    # t[i] = w_rows (or += w_rows) for every sample i
    cdef Py_ssize_t i, r, o
    if accumulate:
        for i in range(t.shape[0]):
            for r in range(t.shape[1]):
                for o in range(t.shape[2]):
                    t[i, r, o] = t[i, r, o] + w_rows[r, o]
    else:
        for i in range(t.shape[0]):
            memcpy(&t[i, 0, 0], &w_rows[0, 0], t.shape[1] * t.shape[2] * sizeof(double))


def forward_tangent(list weights, list biases, skips, a0, v, dx):
    cdef int nt = len(weights)
    cdef int j, skip, p
    cdef Py_ssize_t n = a0.shape[0]
    cdef bint identity = v is None
    cdef Py_ssize_t r = dx if identity else v.shape[1]

    a0 = np.ascontiguousarray(a0, dtype=np.float64)
    v2 = None if identity else np.ascontiguousarray(v, dtype=np.float64).reshape(n * r, dx)

    acts = [a0]
    tans = [None]
    for j in range(nt):
        w = weights[j]
        skip = skips[j]
        prev = acts[j]
        p = prev.shape[1]
        out = w.shape[1]
        z = np.empty((n, out), dtype=np.float64)
        t = np.empty((n, r, out), dtype=np.float64)
        t2 = t.reshape(n * r, out)
        _gemm_rm(prev, w[:p], z, 0.0)
        if j == 0:
            if identity:
                _broadcast_rows(t, w[:dx], False)
            else:
                _gemm_rm(v2, w[:dx], t2, 0.0)
        else:
            _gemm_rm(tans[j].reshape(n * r, p), w[:p], t2, 0.0)
        if skip >= 0:
            _gemm_rm(acts[skip], w[p:], z, 1.0)
            if skip == 0:
                if identity:
                    _broadcast_rows(t, w[p:p + dx], True)
                else:
                    _gemm_rm(v2, w[p:p + dx], t2, 1.0)
            else:
                _gemm_rm(tans[skip].reshape(n * r, -1), w[p:], t2, 1.0)
        if j < nt - 1:
            dz = np.empty((n, out), dtype=np.float64)
            _bias_silu_deriv(z, biases[j], dz)
            _scale_tangent(t, dz)
        else:
            _bias_only(z, biases[j])
        acts.append(z)
        tans.append(t)
    return acts[nt], tans[nt]
