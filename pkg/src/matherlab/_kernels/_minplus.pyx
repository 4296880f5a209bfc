# cython: language_level=3
"""Compiled min-plus kernels: matmul, Lax-Oleinik sweeps, Karp cycle mean.

Mirrors the API of ``_minplus_py``; see that module for the contracts.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def minplus_matmul(A, B):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] b = np.ascontiguousarray(B, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], p = b.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] c = np.empty((n, p))
    cdef Py_ssize_t i, j, k
    cdef double aik, v
    for i in range(n):
        for j in range(p):
            c[i, j] = INFINITY
        for k in range(m):
            aik = a[i, k]
            if aik == INFINITY:
                continue
            for j in range(p):
                v = aik + b[k, j]
                if v < c[i, j]:
                    c[i, j] = v
    return c


def minplus_matmul_argmin(A, B):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] b = np.ascontiguousarray(B, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], p = b.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] c = np.empty((n, p))
    cdef cnp.ndarray[cnp.int32_t, ndim=2, mode="c"] arg = np.zeros((n, p), dtype=np.int32)
    cdef Py_ssize_t i, j, k
    cdef double aik, v
    for i in range(n):
        for j in range(p):
            c[i, j] = INFINITY
        for k in range(m):
            aik = a[i, k]
            if aik == INFINITY:
                continue
            for j in range(p):
                v = aik + b[k, j]
                if v < c[i, j]:
                    c[i, j] = v
                    arg[i, j] = <int> k
    return c, arg


def sweep_backward(K, u):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] k2 = np.ascontiguousarray(K, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] u1 = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = k2.shape[0], p = k2.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] v = np.full(p, np.inf)
    cdef Py_ssize_t i, j
    cdef double ui, w
    for i in range(n):
        ui = u1[i]
        if ui == INFINITY:
            continue
        for j in range(p):
            w = ui + k2[i, j]
            if w < v[j]:
                v[j] = w
    return v


def sweep_backward_argmin(K, u):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] k2 = np.ascontiguousarray(K, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] u1 = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = k2.shape[0], p = k2.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] v = np.full(p, np.inf)
    cdef cnp.ndarray[cnp.int32_t, ndim=1, mode="c"] arg = np.zeros(p, dtype=np.int32)
    cdef Py_ssize_t i, j
    cdef double ui, w
    for i in range(n):
        ui = u1[i]
        if ui == INFINITY:
            continue
        for j in range(p):
            w = ui + k2[i, j]
            if w < v[j]:
                v[j] = w
                arg[j] = <int> i
    return v, arg


def sweep_forward(K, u):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] k2 = np.ascontiguousarray(K, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] u1 = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = k2.shape[0], p = k2.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] v = np.full(n, -np.inf)
    cdef Py_ssize_t i, j
    cdef double w
    for i in range(n):
        for j in range(p):
            w = u1[j] - k2[i, j]
            if w > v[i]:
                v[i] = w
    return v


def karp_mean(K):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] k2 = np.ascontiguousarray(K, dtype=np.float64)
    cdef Py_ssize_t n = k2.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] D = np.full((n + 1, n), np.inf)
    D[0, 0] = 0.0
    cdef Py_ssize_t k, i, j
    cdef double di, w
    for k in range(n):
        for i in range(n):
            di = D[k, i]
            if di == INFINITY:
                continue
            for j in range(n):
                w = di + k2[i, j]
                if w < D[k + 1, j]:
                    D[k + 1, j] = w
    cdef double best = INFINITY, worst, r
    for j in range(n):
        if D[n, j] == INFINITY:
            continue
        worst = -INFINITY
        for k in range(n):
            if D[k, j] == INFINITY:
                continue
            r = (D[n, j] - D[k, j]) / (n - k)
            if r > worst:
                worst = r
        if worst < best:
            best = worst
    return best


def sweep_local2d(u, W, off):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] u2 = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3, mode="c"] w3 = np.ascontiguousarray(W, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2, mode="c"] of = np.ascontiguousarray(off, dtype=np.int64)
    cdef Py_ssize_t n1 = u2.shape[0], n2 = u2.shape[1], no = of.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] out = np.full((n1, n2), np.inf)
    cdef Py_ssize_t o, i, j, ti, tj
    cdef double v
    for o in range(no):
        for i in range(n1):
            ti = (i + of[o, 0]) % n1
            if ti < 0:
                ti += n1
            for j in range(n2):
                tj = (j + of[o, 1]) % n2
                if tj < 0:
                    tj += n2
                v = u2[i, j] + w3[o, i, j]
                if v < out[ti, tj]:
                    out[ti, tj] = v
    return out
