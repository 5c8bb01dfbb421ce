# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: fused shifted-tanh step, column p-norms, Thompson max.

Semantics mirror ``_pure`` exactly (same float64 operations, no fast-math),
so either backend can serve every call site.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs, isfinite, log, pow, tanh

cnp.import_array()


def tanh_shift_add(cnp.ndarray pre, add, double shift):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p2, a2, o2
    cdef cnp.ndarray[cnp.float64_t, ndim=1] p1, a1, o1
    cdef Py_ssize_t i, j, n, b
    add_arr = np.asarray(add, dtype=np.float64)
    if pre.ndim == 1:
        p1 = np.ascontiguousarray(pre)
        n = p1.shape[0]
        o1 = np.empty(n, dtype=np.float64)
        if add_arr.ndim == 0:
            shift += float(add_arr)
            for i in range(n):
                o1[i] = tanh(p1[i]) + shift
        else:
            a1 = np.ascontiguousarray(add_arr)
            for i in range(n):
                o1[i] = tanh(p1[i]) + a1[i] + shift
        return o1
    p2 = np.ascontiguousarray(pre)
    n = p2.shape[0]
    b = p2.shape[1]
    o2 = np.empty((n, b), dtype=np.float64)
    if add_arr.ndim == 0:
        shift += float(add_arr)
        for i in range(n):
            for j in range(b):
                o2[i, j] = tanh(p2[i, j]) + shift
    elif add_arr.ndim == 1:
        a1 = np.ascontiguousarray(add_arr)
        for i in range(n):
            for j in range(b):
                o2[i, j] = tanh(p2[i, j]) + a1[i] + shift
    else:
        a2 = np.ascontiguousarray(add_arr)
        for i in range(n):
            for j in range(b):
                o2[i, j] = tanh(p2[i, j]) + a2[i, j] + shift
    return o2


cdef double _pnorm_1d(double[::1] a, double p) nogil:
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double m = 0.0, s = 0.0, v
    for i in range(n):
        v = fabs(a[i])
        if v > m:
            m = v
    if p == INFINITY or m == 0.0:
        return m
    if p == 1.0:
        for i in range(n):
            s += fabs(a[i])
        return s
    for i in range(n):
        s += pow(fabs(a[i]) / m, p)
    return m * pow(s, 1.0 / p)


def column_pnorms(cnp.ndarray z, double p):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] z2
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out
    cdef double[::1] col
    cdef Py_ssize_t j, b
    if z.ndim == 1:
        return _pnorm_1d(np.ascontiguousarray(z), p)
    z2 = np.asfortranarray(z)
    b = z2.shape[1]
    out = np.empty(b, dtype=np.float64)
    for j in range(b):
        col = np.ascontiguousarray(z2[:, j])
        out[j] = _pnorm_1d(col, p)
    return out


def thompson(cnp.ndarray x, cnp.ndarray y):
    cdef double[::1] a = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef double[::1] b = np.ascontiguousarray(y, dtype=np.float64).ravel()
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double d, best = 0.0
    for i in range(n):
        if a[i] <= 0.0 or b[i] <= 0.0 or not isfinite(a[i]) or not isfinite(b[i]):
            return float("nan")
        d = fabs(log(a[i]) - log(b[i]))
        if d > best:
            best = d
    return best
