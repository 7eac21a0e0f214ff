# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for convolution and 2x2 max pooling (the training hot loop)."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def conv2d_forward(cnp.float64_t[:, :, ::1] x,
                   cnp.float64_t[:, :, :, ::1] kernel,
                   cnp.float64_t[::1] bias,
                   int stride):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t o = kernel.shape[0], kh = kernel.shape[2], kw = kernel.shape[3]
    cdef Py_ssize_t ho = (h - kh) // stride + 1
    cdef Py_ssize_t wo = (w - kw) // stride + 1
    out = np.empty((o, ho, wo), dtype=np.float64)
    cdef cnp.float64_t[:, :, ::1] y = out
    cdef Py_ssize_t oc, ic, i, j, u, v
    cdef double acc
    for oc in range(o):
        for i in range(ho):
            for j in range(wo):
                acc = bias[oc]
                for ic in range(c):
                    for u in range(kh):
                        for v in range(kw):
                            acc += kernel[oc, ic, u, v] * x[ic, i * stride + u, j * stride + v]
                y[oc, i, j] = acc
    return out


def conv2d_backward(cnp.float64_t[:, :, ::1] x,
                    cnp.float64_t[:, :, :, ::1] kernel,
                    int stride,
                    cnp.float64_t[:, :, ::1] dy):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t o = kernel.shape[0], kh = kernel.shape[2], kw = kernel.shape[3]
    cdef Py_ssize_t ho = dy.shape[1], wo = dy.shape[2]
    dx_arr = np.zeros((c, h, w), dtype=np.float64)
    dk_arr = np.zeros((o, c, kh, kw), dtype=np.float64)
    db_arr = np.zeros(o, dtype=np.float64)
    cdef cnp.float64_t[:, :, ::1] dx = dx_arr
    cdef cnp.float64_t[:, :, :, ::1] dk = dk_arr
    cdef cnp.float64_t[::1] db = db_arr
    cdef Py_ssize_t oc, ic, i, j, u, v
    cdef double g
    for oc in range(o):
        for i in range(ho):
            for j in range(wo):
                g = dy[oc, i, j]
                db[oc] += g
                for ic in range(c):
                    for u in range(kh):
                        for v in range(kw):
                            dk[oc, ic, u, v] += g * x[ic, i * stride + u, j * stride + v]
                            dx[ic, i * stride + u, j * stride + v] += g * kernel[oc, ic, u, v]
    return dx_arr, dk_arr, db_arr


def maxpool2_forward(cnp.float64_t[:, :, ::1] x):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t ho = h // 2, wo = w // 2
    y_arr = np.empty((c, ho, wo), dtype=np.float64)
    arg_arr = np.empty((c, ho, wo), dtype=np.int64)
    cdef cnp.float64_t[:, :, ::1] y = y_arr
    cdef cnp.int64_t[:, :, ::1] arg = arg_arr
    cdef Py_ssize_t ic, i, j, u, v, best
    cdef double val, cand
    for ic in range(c):
        for i in range(ho):
            for j in range(wo):
                best = 0
                val = x[ic, 2 * i, 2 * j]
                for u in range(2):
                    for v in range(2):
                        cand = x[ic, 2 * i + u, 2 * j + v]
                        if cand > val:
                            val = cand
                            best = 2 * u + v
                y[ic, i, j] = val
                arg[ic, i, j] = best
    return y_arr, arg_arr


def maxpool2_backward(x_shape, cnp.int64_t[:, :, ::1] arg, cnp.float64_t[:, :, ::1] dy):
    cdef Py_ssize_t c = x_shape[0], h = x_shape[1], w = x_shape[2]
    cdef Py_ssize_t ho = arg.shape[1], wo = arg.shape[2]
    dx_arr = np.zeros((c, h, w), dtype=np.float64)
    cdef cnp.float64_t[:, :, ::1] dx = dx_arr
    cdef Py_ssize_t ic, i, j, a
    for ic in range(c):
        for i in range(ho):
            for j in range(wo):
                a = arg[ic, i, j]
                dx[ic, 2 * i + a // 2, 2 * j + a % 2] += dy[ic, i, j]
    return dx_arr
