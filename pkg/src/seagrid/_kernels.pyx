# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled accumulation kernels for the barrier solver's Newton assembly.

Mirrors _kernels_py exactly; see that module for the contracts.
"""

import numpy as np
cimport numpy as cnp

BACKEND = "compiled"


def accum_outer(double[:, ::1] H, double[::1] g, long[::1] idx, double w):
    cdef Py_ssize_t i, j, k = g.shape[0]
    cdef double gi
    for i in range(k):
        gi = w * g[i]
        for j in range(k):
            H[idx[i], idx[j]] += gi * g[j]


def accum_block(double[:, ::1] H, double[:, ::1] B, long[::1] idx, double w):
    cdef Py_ssize_t i, j, k = idx.shape[0]
    for i in range(k):
        for j in range(k):
            H[idx[i], idx[j]] += w * B[i, j]


def accum_vec(double[::1] out, double[::1] g, long[::1] idx, double w):
    cdef Py_ssize_t i, k = g.shape[0]
    for i in range(k):
        out[idx[i]] += w * g[i]


def scatter_rows(double[:, ::1] M, long[::1] rows, long[::1] idx_flat,
                 long[::1] idx_ptr, double[::1] contrib_flat):
    cdef Py_ssize_t t, c, lo, hi, r
    for t in range(rows.shape[0]):
        lo = idx_ptr[t]
        hi = idx_ptr[t + 1]
        r = rows[t]
        for c in range(lo, hi):
            M[r, idx_flat[c]] += contrib_flat[c]


def accum_blocks(double[:, ::1] H, double[::1] blocks_flat, long[::1] idx_flat,
                 long[::1] idx_ptr, double[::1] weights):
    cdef Py_ssize_t t, i, j, lo, hi, k, boff = 0
    cdef double w
    for t in range(weights.shape[0]):
        lo = idx_ptr[t]
        hi = idx_ptr[t + 1]
        k = hi - lo
        w = weights[t]
        for i in range(k):
            for j in range(k):
                H[idx_flat[lo + i], idx_flat[lo + j]] += w * blocks_flat[boff + i * k + j]
        boff += k * k
