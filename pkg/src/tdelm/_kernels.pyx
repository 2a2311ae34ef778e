# cython: language_level=3
"""Compiled hidden-layer kernels.

``hidden_activations`` computes ``sigmoid(X @ W.T + b)`` with one BLAS
``dgemm`` call and a fused bias + sigmoid pass over the result, so the
pre-activation matrix is never materialised twice.
"""
import numpy as np

from libc.math cimport exp
from scipy.linalg.cython_blas cimport dgemm


cdef inline double _sigmoid(double v) nogil:
    cdef double e
    if v >= 0.0:
        return 1.0 / (1.0 + exp(-v))
    e = exp(v)
    return e / (1.0 + e)


def hidden_activations(const double[:, ::1] X, const double[:, ::1] W,
                       const double[::1] b):
    cdef int n = X.shape[0]
    cdef int p = X.shape[1]
    cdef int L = W.shape[0]
    if W.shape[1] != p:
        raise ValueError(f"feature mismatch: X has {p}, W has {W.shape[1]}")
    if b.shape[0] != L:
        raise ValueError(f"bias length {b.shape[0]} != hidden size {L}")

    H = np.empty((n, L), dtype=np.float64)
    cdef double[:, ::1] Hv = H
    cdef char transa = b'T'
    cdef char transb = b'N'
    cdef double alpha = 1.0
    cdef double beta = 0.0
    cdef Py_ssize_t i, j
    if n == 0 or L == 0:
        return H
    # Row-major H (n, L) is column-major H^T (L, n) = W X^T.
    with nogil:
        dgemm(&transa, &transb, &L, &n, &p, &alpha,
              <double*>&W[0, 0], &p, <double*>&X[0, 0], &p,
              &beta, &Hv[0, 0], &L)
        for i in range(n):
            for j in range(L):
                Hv[i, j] = _sigmoid(Hv[i, j] + b[j])
    return H


def sigmoid(x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    cdef double[::1] src = arr.reshape(-1)
    cdef double[::1] dst = out.reshape(-1)
    cdef Py_ssize_t i, n = src.shape[0]
    with nogil:
        for i in range(n):
            dst[i] = _sigmoid(src[i])
    return out
