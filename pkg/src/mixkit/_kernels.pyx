# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused elementwise kernels for the hot inner loops (GELU, row softmax).

Semantics match the numpy fallbacks in ``mixkit.backend`` exactly; only the
number of memory passes differs.
"""

from libc.math cimport exp, tanh

import numpy as np

ctypedef fused floating:
    float
    double

DEF GELU_K = 0.7978845608028654   # sqrt(2/pi)
DEF GELU_C = 0.044715


def gelu_fwd(floating[::1] x, floating[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double v, u
    for i in range(n):
        v = <double> x[i]
        u = GELU_K * (v + GELU_C * v * v * v)
        out[i] = <floating> (0.5 * v * (1.0 + tanh(u)))


def gelu_bwd(floating[::1] x, floating[::1] dy, floating[::1] dx):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double v, u, t, du
    for i in range(n):
        v = <double> x[i]
        u = GELU_K * (v + GELU_C * v * v * v)
        t = tanh(u)
        du = GELU_K * (1.0 + 3.0 * GELU_C * v * v)
        dx[i] = <floating> ((<double> dy[i]) * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du))


def softmax_fwd(floating[:, ::1] x, floating[:, ::1] out):
    cdef Py_ssize_t i, j, rows = x.shape[0], cols = x.shape[1]
    cdef double m, s, e
    for i in range(rows):
        m = <double> x[i, 0]
        for j in range(1, cols):
            if (<double> x[i, j]) > m:
                m = <double> x[i, j]
        s = 0.0
        for j in range(cols):
            e = exp((<double> x[i, j]) - m)
            out[i, j] = <floating> e
            s += e
        for j in range(cols):
            out[i, j] = <floating> ((<double> out[i, j]) / s)


def softmax_bwd(floating[:, ::1] y, floating[:, ::1] dy, floating[:, ::1] dx):
    cdef Py_ssize_t i, j, rows = y.shape[0], cols = y.shape[1]
    cdef double dot
    for i in range(rows):
        dot = 0.0
        for j in range(cols):
            dot += (<double> dy[i, j]) * (<double> y[i, j])
        for j in range(cols):
            dx[i, j] = <floating> ((<double> y[i, j]) * ((<double> dy[i, j]) - dot))
