# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled recurrent-cell kernels.

Same gate convention and call contract as _kernels_py; see that module for
the math.  Loops are fused so one cell step costs a single Python call.
"""

import numpy as np

cimport cython
from libc.math cimport exp, tanh

COMPILED = True

ctypedef fused real:
    float
    double


cdef inline real _sig(real a) noexcept nogil:
    if a >= 0:
        return <real>(1.0 / (1.0 + exp(-a)))
    cdef real e = exp(a)
    return <real>(e / (1.0 + e))


def gru_cell_forward(real[::1] x, real[::1] h, real[:, ::1] W, real[:, ::1] U,
                     real[::1] b):
    """One cell step. Returns (h_new, r, u, c)."""
    cdef Py_ssize_t n = h.shape[0]
    cdef Py_ssize_t e = x.shape[0]
    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    h_new_a = np.empty(n, dtype=dtype)
    r_a = np.empty(n, dtype=dtype)
    u_a = np.empty(n, dtype=dtype)
    c_a = np.empty(n, dtype=dtype)
    ga = np.empty(3 * n, dtype=dtype)
    cdef real[::1] h_new = h_new_a
    cdef real[::1] r = r_a
    cdef real[::1] u = u_a
    cdef real[::1] c = c_a
    cdef real[::1] g = ga
    cdef Py_ssize_t i, j
    cdef real acc

    with nogil:
        for i in range(3 * n):
            acc = b[i]
            for j in range(e):
                acc += W[i, j] * x[j]
            g[i] = acc
        for i in range(2 * n):
            acc = g[i]
            for j in range(n):
                acc += U[i, j] * h[j]
            g[i] = acc
        for i in range(n):
            r[i] = _sig(g[i])
            u[i] = _sig(g[n + i])
        for i in range(n):
            acc = g[2 * n + i]
            for j in range(n):
                acc += U[2 * n + i, j] * (r[j] * h[j])
            c[i] = <real>tanh(acc)
            h_new[i] = (1.0 - u[i]) * h[i] + u[i] * c[i]
    return h_new_a, r_a, u_a, c_a


def gru_cell_backward(real[::1] g, real[::1] x, real[::1] h, real[:, ::1] W,
                      real[:, ::1] U, real[::1] r, real[::1] u, real[::1] c,
                      real[::1] dx, real[::1] dh, real[:, ::1] dW,
                      real[:, ::1] dU, real[::1] db):
    """Accumulate gradients of one cell step into dx, dh, dW, dU, db."""
    cdef Py_ssize_t n = h.shape[0]
    cdef Py_ssize_t e = x.shape[0]
    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    da_a = np.empty(3 * n, dtype=dtype)
    drh_a = np.empty(n, dtype=dtype)
    cdef real[::1] da = da_a
    cdef real[::1] drh = drh_a
    cdef Py_ssize_t i, j
    cdef real acc, dac_i, dau_i, dar_i

    with nogil:
        # candidate-gate preactivation gradient
        for i in range(n):
            da[2 * n + i] = (g[i] * u[i]) * (1.0 - c[i] * c[i])
        # pull back through U_c to r*h
        for j in range(n):
            acc = 0.0
            for i in range(n):
                acc += U[2 * n + i, j] * da[2 * n + i]
            drh[j] = acc
        for i in range(n):
            dau_i = (g[i] * (c[i] - h[i])) * u[i] * (1.0 - u[i])
            dar_i = (drh[i] * h[i]) * r[i] * (1.0 - r[i])
            da[i] = dar_i
            da[n + i] = dau_i
        # parameter gradients
        for i in range(n):
            dar_i = da[i]
            dau_i = da[n + i]
            dac_i = da[2 * n + i]
            for j in range(n):
                dU[i, j] += dar_i * h[j]
                dU[n + i, j] += dau_i * h[j]
                dU[2 * n + i, j] += dac_i * (r[j] * h[j])
        for i in range(3 * n):
            acc = da[i]
            db[i] += acc
            for j in range(e):
                dW[i, j] += acc * x[j]
        # input gradients
        for j in range(e):
            acc = 0.0
            for i in range(3 * n):
                acc += W[i, j] * da[i]
            dx[j] += acc
        for j in range(n):
            acc = g[j] * (1.0 - u[j]) + drh[j] * r[j]
            for i in range(n):
                acc += U[i, j] * da[i] + U[n + i, j] * da[n + i]
            dh[j] += acc
