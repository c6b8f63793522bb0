# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Mirrors ``vidiag._fallback`` exactly."""
import numpy as np

cimport numpy as cnp
from libc.math cimport log1p

cnp.import_array()


def zs_mean_log1p(const double[::1] b, const double[::1] x):
    """Return ``mean(log1p(-b[j] * x))`` for every grid point ``b[j]``."""
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, j
    cdef double acc, bj
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for j in range(m):
            bj = b[j]
            acc = 0.0
            for i in range(n):
                acc += log1p(-bj * x[i])
            o[j] = acc / n
    return out


def ks_sweep(const double[::1] x, const double[::1] y):
    """Signed sup-differences of two ECDFs; both inputs sorted ascending.

    Returns ``(d_plus, d_minus)`` with ``d_plus = max(F_x - F_y)`` and
    ``d_minus = max(F_y - F_x)``, evaluated after all ties at each pooled
    value have been absorbed.
    """
    cdef Py_ssize_t nx = x.shape[0]
    cdef Py_ssize_t ny = y.shape[0]
    cdef Py_ssize_t i = 0, j = 0
    cdef double v, diff
    cdef double d_plus = 0.0, d_minus = 0.0
    with nogil:
        while i < nx or j < ny:
            if j >= ny or (i < nx and x[i] <= y[j]):
                v = x[i]
            else:
                v = y[j]
            while i < nx and x[i] == v:
                i += 1
            while j < ny and y[j] == v:
                j += 1
            diff = <double>i / nx - <double>j / ny
            if diff > d_plus:
                d_plus = diff
            if -diff > d_minus:
                d_minus = -diff
    return d_plus, d_minus
