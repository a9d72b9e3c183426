# Fused elementwise kernels for the training inner loop.
# Same contracts as `_pykernels`; arrays must be C-contiguous float64.

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, sqrt

BACKEND = "cython"


def silu_fwd(cnp.ndarray z_arr):
    cdef double[::1] z = z_arr.ravel()
    out_arr = np.empty_like(z_arr)
    cdef double[::1] out = out_arr.ravel()
    cdef Py_ssize_t i, n = z.shape[0]
    with nogil:
        for i in range(n):
            out[i] = z[i] / (1.0 + exp(-z[i]))
    return out_arr


def silu_bwd(cnp.ndarray z_arr, cnp.ndarray da_arr):
    cdef double[::1] z = z_arr.ravel()
    cdef double[::1] da = da_arr.ravel()
    out_arr = np.empty_like(z_arr)
    cdef double[::1] out = out_arr.ravel()
    cdef Py_ssize_t i, n = z.shape[0]
    cdef double s
    with nogil:
        for i in range(n):
            s = 1.0 / (1.0 + exp(-z[i]))
            out[i] = da[i] * (s * (1.0 + z[i] * (1.0 - s)))
    return out_arr


def relu_fwd(cnp.ndarray z_arr):
    cdef double[::1] z = z_arr.ravel()
    out_arr = np.empty_like(z_arr)
    cdef double[::1] out = out_arr.ravel()
    cdef Py_ssize_t i, n = z.shape[0]
    with nogil:
        for i in range(n):
            out[i] = z[i] if z[i] > 0.0 else 0.0
    return out_arr


def relu_bwd(cnp.ndarray z_arr, cnp.ndarray da_arr):
    cdef double[::1] z = z_arr.ravel()
    cdef double[::1] da = da_arr.ravel()
    out_arr = np.empty_like(z_arr)
    cdef double[::1] out = out_arr.ravel()
    cdef Py_ssize_t i, n = z.shape[0]
    with nogil:
        for i in range(n):
            out[i] = da[i] if z[i] > 0.0 else 0.0
    return out_arr


def clamp_fwd(cnp.ndarray y_arr, double limit):
    cdef double[::1] y = y_arr.ravel()
    out_arr = np.empty_like(y_arr)
    cdef double[::1] out = out_arr.ravel()
    cdef Py_ssize_t i, n = y.shape[0]
    with nogil:
        for i in range(n):
            if y[i] > limit:
                out[i] = limit
            elif y[i] < -limit:
                out[i] = -limit
            else:
                out[i] = y[i]
    return out_arr


def clamp_bwd(cnp.ndarray y_raw_arr, double limit, cnp.ndarray dy_arr):
    cdef double[::1] y = y_raw_arr.ravel()
    cdef double[::1] dy = dy_arr.ravel()
    out_arr = np.empty_like(dy_arr)
    cdef double[::1] out = out_arr.ravel()
    cdef Py_ssize_t i, n = y.shape[0]
    with nogil:
        for i in range(n):
            out[i] = dy[i] if fabs(y[i]) < limit else 0.0
    return out_arr


def adam_step(cnp.ndarray p_arr, cnp.ndarray g_arr, cnp.ndarray m_arr,
              cnp.ndarray v_arr, int t, double lr, double b1, double b2,
              double eps):
    cdef double[::1] p = p_arr.ravel()
    cdef double[::1] g = g_arr.ravel()
    cdef double[::1] m = m_arr.ravel()
    cdef double[::1] v = v_arr.ravel()
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double c1 = 1.0 - b1**t
    cdef double c2 = 1.0 - b2**t
    cdef double mhat, vhat
    with nogil:
        for i in range(n):
            m[i] = b1 * m[i] + (1.0 - b1) * g[i]
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i]
            mhat = m[i] / c1
            vhat = v[i] / c2
            p[i] -= lr * mhat / (sqrt(vhat) + eps)
