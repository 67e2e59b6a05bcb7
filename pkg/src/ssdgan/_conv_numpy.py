"""Pure-numpy conv2d kernels (im2col + BLAS matmul).

Fallback path for machines where the compiled extension is unavailable;
selected by :mod:`ssdgan._backend`.
"""

import numpy as np

NAME = "numpy"


def _im2col(x, k, stride, pad):
    B, C, H, W = x.shape
    ho = (H + 2 * pad - k) // stride + 1
    wo = (W + 2 * pad - k) // stride + 1
    if pad:
        xp = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=x.dtype)
        xp[:, :, pad:pad + H, pad:pad + W] = x
    else:
        xp = x
    sB, sC, sH, sW = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(B, ho, wo, C, k, k),
        strides=(sB, sH * stride, sW * stride, sC, sH, sW),
        writeable=False,
    )
    return np.ascontiguousarray(view).reshape(B * ho * wo, C * k * k), ho, wo


def conv2d_forward(x, w, b, stride, pad):
    cout, cin, k, _ = w.shape
    B = x.shape[0]
    cols, ho, wo = _im2col(x, k, stride, pad)
    y = cols @ w.reshape(cout, cin * k * k).T
    if b is not None:
        y += b
    y = y.reshape(B, ho, wo, cout).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(y), cols


def conv2d_backward(x, w, gy, stride, pad, cols, need_gx):
    B, C, H, W = x.shape
    cout, cin, k, _ = w.shape
    ho, wo = gy.shape[2], gy.shape[3]
    gy_mat = np.ascontiguousarray(gy.transpose(0, 2, 3, 1)).reshape(B * ho * wo, cout)
    gw = (gy_mat.T @ cols).reshape(w.shape)
    gb = gy.sum(axis=(0, 2, 3))
    gx = None
    if need_gx:
        gcols = (gy_mat @ w.reshape(cout, cin * k * k)).reshape(B, ho, wo, C, k, k)
        hp, wp = H + 2 * pad, W + 2 * pad
        gxp = np.zeros((B, C, hp, wp), dtype=x.dtype)
        for ki in range(k):
            for kj in range(k):
                gxp[:, :, ki:ki + stride * ho:stride, kj:kj + stride * wo:stride] += (
                    gcols[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
                )
        gx = gxp[:, :, pad:pad + H, pad:pad + W] if pad else gxp
    return gx, gw, gb
