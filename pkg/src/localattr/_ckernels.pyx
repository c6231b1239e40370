# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels (conv2d and 2x2 maxpool).

Mirrors the interface of _pykernels. Loops use a fixed summation order per
output element, so results are deterministic and independent of batch size.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "cython"


def conv2d_forward(const double[:, :, :, ::1] x, const double[:, :, :, ::1] w):
    cdef Py_ssize_t b_n = x.shape[0], c_n = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t o_n = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = h - kh + 1, wo = wd - kw + 1
    out_arr = np.zeros((b_n, o_n, ho, wo), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, o, i, j, c, u, v
    cdef double wv
    # shift-accumulate: the inner j loop walks contiguous rows of x and out
    for b in range(b_n):
        for o in range(o_n):
            for c in range(c_n):
                for u in range(kh):
                    for v in range(kw):
                        wv = w[o, c, u, v]
                        if wv == 0.0:
                            continue
                        for i in range(ho):
                            for j in range(wo):
                                out[b, o, i, j] += wv * x[b, c, i + u, j + v]
    return out_arr


def conv2d_backward_input(const double[:, :, :, ::1] grad_out, const double[:, :, :, ::1] w,
                          Py_ssize_t in_h, Py_ssize_t in_w):
    cdef Py_ssize_t b_n = grad_out.shape[0], o_n = grad_out.shape[1]
    cdef Py_ssize_t ho = grad_out.shape[2], wo = grad_out.shape[3]
    cdef Py_ssize_t c_n = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    dx_arr = np.zeros((b_n, c_n, in_h, in_w), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, o, i, j, c, u, v
    cdef double wv
    for b in range(b_n):
        for o in range(o_n):
            for c in range(c_n):
                for u in range(kh):
                    for v in range(kw):
                        wv = w[o, c, u, v]
                        if wv == 0.0:
                            continue
                        for i in range(ho):
                            for j in range(wo):
                                dx[b, c, i + u, j + v] += wv * grad_out[b, o, i, j]
    return dx_arr


def conv2d_backward_weight(const double[:, :, :, ::1] x, const double[:, :, :, ::1] grad_out,
                           Py_ssize_t kh, Py_ssize_t kw):
    cdef Py_ssize_t b_n = x.shape[0], c_n = x.shape[1]
    cdef Py_ssize_t o_n = grad_out.shape[1], ho = grad_out.shape[2], wo = grad_out.shape[3]
    dw_arr = np.zeros((o_n, c_n, kh, kw), dtype=np.float64)
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef Py_ssize_t b, o, i, j, c, u, v
    cdef double acc
    for b in range(b_n):
        for o in range(o_n):
            for c in range(c_n):
                for u in range(kh):
                    for v in range(kw):
                        acc = 0.0
                        for i in range(ho):
                            for j in range(wo):
                                acc += x[b, c, i + u, j + v] * grad_out[b, o, i, j]
                        dw[o, c, u, v] += acc
    return dw_arr


def maxpool2_forward(const double[:, :, :, ::1] x):
    cdef Py_ssize_t b_n = x.shape[0], c_n = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t hh = h // 2, ww = w // 2
    out_arr = np.empty((b_n, c_n, hh, ww), dtype=np.float64)
    idx_arr = np.empty((b_n, c_n, hh, ww), dtype=np.uint8)
    cdef double[:, :, :, ::1] out = out_arr
    cdef unsigned char[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t b, c, i, j, u, v, k
    cdef double best, val
    cdef unsigned char best_k
    for b in range(b_n):
        for c in range(c_n):
            for i in range(hh):
                for j in range(ww):
                    best = x[b, c, 2 * i, 2 * j]
                    best_k = 0
                    for k in range(1, 4):
                        u = k // 2
                        v = k % 2
                        val = x[b, c, 2 * i + u, 2 * j + v]
                        if val > best:
                            best = val
                            best_k = <unsigned char> k
                    out[b, c, i, j] = best
                    idx[b, c, i, j] = best_k
    return out_arr, idx_arr


def maxpool2_backward(const double[:, :, :, ::1] grad_out, const unsigned char[:, :, :, ::1] idx,
                      Py_ssize_t in_h, Py_ssize_t in_w):
    cdef Py_ssize_t b_n = grad_out.shape[0], c_n = grad_out.shape[1]
    cdef Py_ssize_t hh = grad_out.shape[2], ww = grad_out.shape[3]
    dx_arr = np.zeros((b_n, c_n, in_h, in_w), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, c, i, j, k
    for b in range(b_n):
        for c in range(c_n):
            for i in range(hh):
                for j in range(ww):
                    k = idx[b, c, i, j]
                    dx[b, c, 2 * i + k // 2, 2 * j + k % 2] += grad_out[b, c, i, j]
    return dx_arr
