# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the numpy kernels in ``scfem._kernels_np``."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"


def spmv(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
         double[::1] data, double[::1] x, out=None):
    """y = A @ x for a CSR matrix given by (indptr, indices, data)."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    if out is None:
        out = np.empty(n)
    cdef double[::1] y = out
    cdef Py_ssize_t i, k
    cdef double acc
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        y[i] = acc
    return out


def local_stiffness(double[:, :, ::1] grads, double[::1] warea):
    """Per-triangle 3x3 stiffness blocks; same contract as the numpy twin."""
    cdef Py_ssize_t nt = grads.shape[0]
    out = np.empty((nt, 3, 3))
    cdef double[:, :, ::1] k = out
    cdef Py_ssize_t t, i, j
    cdef double w, v
    for t in range(nt):
        w = warea[t]
        for i in range(3):
            for j in range(i, 3):
                v = w * (grads[t, i, 0] * grads[t, j, 0]
                         + grads[t, i, 1] * grads[t, j, 1])
                k[t, i, j] = v
                k[t, j, i] = v
    return out
