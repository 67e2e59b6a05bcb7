# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled conv2d kernels: C-loop im2col/col2im around BLAS matmuls.

Mirrors the interface of ssdgan._conv_numpy; selected at import by
ssdgan._backend when built.
"""

import numpy as np

cimport cython

ctypedef fused real:
    float
    double

NAME = "cython"


cdef void _im2col_fill(real[:, :, :, ::1] x, real[:, ::1] cols,
                       int k, int stride, int pad) noexcept nogil:
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t ho = (H + 2 * pad - k) // stride + 1
    cdef Py_ssize_t wo = (W + 2 * pad - k) // stride + 1
    cdef Py_ssize_t b, oh, ow, c, ki, kj, ih, iw, row, col
    for b in range(B):
        for oh in range(ho):
            for ow in range(wo):
                row = (b * ho + oh) * wo + ow
                for c in range(C):
                    for ki in range(k):
                        ih = oh * stride + ki - pad
                        for kj in range(k):
                            iw = ow * stride + kj - pad
                            col = (c * k + ki) * k + kj
                            if 0 <= ih < H and 0 <= iw < W:
                                cols[row, col] = x[b, c, ih, iw]
                            else:
                                cols[row, col] = 0


cdef void _col2im_add(real[:, ::1] gcols, real[:, :, :, ::1] gx,
                      int k, int stride, int pad) noexcept nogil:
    cdef Py_ssize_t B = gx.shape[0], C = gx.shape[1], H = gx.shape[2], W = gx.shape[3]
    cdef Py_ssize_t ho = (H + 2 * pad - k) // stride + 1
    cdef Py_ssize_t wo = (W + 2 * pad - k) // stride + 1
    cdef Py_ssize_t b, oh, ow, c, ki, kj, ih, iw, row, col
    for b in range(B):
        for oh in range(ho):
            for ow in range(wo):
                row = (b * ho + oh) * wo + ow
                for c in range(C):
                    for ki in range(k):
                        ih = oh * stride + ki - pad
                        if ih < 0 or ih >= H:
                            continue
                        for kj in range(k):
                            iw = ow * stride + kj - pad
                            if 0 <= iw < W:
                                col = (c * k + ki) * k + kj
                                gx[b, c, ih, iw] += gcols[row, col]


def _im2col(real[:, :, :, ::1] x, int k, int stride, int pad):
    B, C, H, W = x.shape[0], x.shape[1], x.shape[2], x.shape[3]
    ho = (H + 2 * pad - k) // stride + 1
    wo = (W + 2 * pad - k) // stride + 1
    dtype = np.float32 if real is float else np.float64
    cols = np.empty((B * ho * wo, C * k * k), dtype=dtype)
    cdef real[:, ::1] cv = cols
    with nogil:
        _im2col_fill(x, cv, k, stride, pad)
    return cols, ho, wo


def conv2d_forward(x, w, b, int stride, int pad):
    cout, cin, k, _ = w.shape
    B = x.shape[0]
    cols, ho, wo = _im2col(x, k, stride, pad)
    y = cols @ w.reshape(cout, cin * k * k).T
    if b is not None:
        y += b
    y = np.ascontiguousarray(y.reshape(B, ho, wo, cout).transpose(0, 3, 1, 2))
    return y, cols


def _col2im(gcols, shape, int k, int stride, int pad):
    gx = np.zeros(shape, dtype=gcols.dtype)
    cdef float[:, ::1] gcf
    cdef double[:, ::1] gcd
    cdef float[:, :, :, ::1] gxf
    cdef double[:, :, :, ::1] gxd
    if gcols.dtype == np.float32:
        gcf = gcols
        gxf = gx
        with nogil:
            _col2im_add(gcf, gxf, k, stride, pad)
    else:
        gcd = gcols
        gxd = gx
        with nogil:
            _col2im_add(gcd, gxd, k, stride, pad)
    return gx


def conv2d_backward(x, w, gy, int stride, int pad, cols, bint need_gx):
    B, C, H, W = x.shape
    cout, cin, k, _ = w.shape
    ho, wo = gy.shape[2], gy.shape[3]
    gy_mat = np.ascontiguousarray(gy.transpose(0, 2, 3, 1)).reshape(B * ho * wo, cout)
    gw = (gy_mat.T @ cols).reshape(w.shape)
    gb = gy.sum(axis=(0, 2, 3))
    gx = None
    if need_gx:
        gcols = np.ascontiguousarray(gy_mat @ w.reshape(cout, cin * k * k))
        gx = _col2im(gcols, x.shape, k, stride, pad)
    return gx, gw, gb
