"""Reverse-mode automatic differentiation on dense numpy arrays.

A ``Var`` wraps an ndarray and remembers how it was produced; calling
``backward()`` on a scalar Var walks the recorded tape in reverse
topological order and accumulates gradients into every reachable Var
that has ``requires_grad`` set.  Only the operations needed by the
networks in this project are provided; this is not a general autodiff.
"""

from __future__ import annotations

import numpy as np

from . import _backend


class Var:
    """A node in the computation tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        # parents/backward are dropped for leaves so detached graphs get freed
        self._parents = tuple(parents) if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g):
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad += g

    def detach(self):
        """A new leaf sharing this Var's data; blocks gradient flow."""
        return Var(self.data, requires_grad=False)

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss, got shape %s" % (self.shape,))
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, as_var(other, self.dtype))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul_const(as_var(other, self.dtype), -1.0))

    def __rsub__(self, other):
        return add(as_var(other, self.dtype), mul_const(self, -1.0))

    def __mul__(self, other):
        if isinstance(other, Var):
            return mul(self, other)
        return mul_const(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul_const(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_var(x, dtype=None):
    if isinstance(x, Var):
        return x
    return Var(np.asarray(x, dtype=dtype))


def _unbroadcast(g, shape):
    """Sum a gradient back down to the broadcast-source shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise ---------------------------------------------------------


def add(a, b):
    out = Var(a.data + b.data, parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.shape))

    out._backward = bwd
    return out


def mul(a, b):
    out = Var(a.data * b.data, parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.shape))

    out._backward = bwd
    return out


def mul_const(a, c):
    c = a.data.dtype.type(c)
    out = Var(a.data * c, parents=(a,))

    def bwd(g):
        a.accumulate(g * c)

    out._backward = bwd
    return out


def add_const(a, c):
    c = a.data.dtype.type(c)
    out = Var(a.data + c, parents=(a,))

    def bwd(g):
        a.accumulate(g)

    out._backward = bwd
    return out


def log(a):
    out = Var(np.log(a.data), parents=(a,))

    def bwd(g):
        a.accumulate(g / a.data)

    out._backward = bwd
    return out


def clamp(a, lo, hi):
    """Clip to [lo, hi]; gradient is zero where the clip binds."""
    out = Var(np.clip(a.data, lo, hi), parents=(a,))
    mask = (a.data >= lo) & (a.data <= hi)

    def bwd(g):
        a.accumulate(g * mask)

    out._backward = bwd
    return out


def relu(a):
    mask = a.data > 0
    out = Var(np.where(mask, a.data, a.data.dtype.type(0)), parents=(a,))

    def bwd(g):
        a.accumulate(g * mask)

    out._backward = bwd
    return out


def tanh(a):
    y = np.tanh(a.data)
    out = Var(y, parents=(a,))

    def bwd(g):
        a.accumulate(g * (1.0 - y * y))

    out._backward = bwd
    return out


def sigmoid(a):
    # stable two-sided form
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Var(y, parents=(a,))

    def bwd(g):
        a.accumulate(g * (y * (1.0 - y)))

    out._backward = bwd
    return out


# -- shape / reduction ---------------------------------------------------


def reshape(a, shape):
    out = Var(a.data.reshape(shape), parents=(a,))

    def bwd(g):
        a.accumulate(g.reshape(a.shape))

    out._backward = bwd
    return out


def vsum(a):
    out = Var(np.asarray(a.data.sum(), dtype=a.dtype), parents=(a,))

    def bwd(g):
        a.accumulate(np.broadcast_to(g, a.shape))

    out._backward = bwd
    return out


def vmean(a):
    n = a.data.dtype.type(a.data.size)
    out = Var(np.asarray(a.data.mean(), dtype=a.dtype), parents=(a,))

    def bwd(g):
        a.accumulate(np.broadcast_to(g / n, a.shape))

    out._backward = bwd
    return out


def mean_axis(a, axis):
    n = a.data.dtype.type(np.prod([a.shape[ax] for ax in np.atleast_1d(axis)]))
    out = Var(a.data.mean(axis=axis), parents=(a,))

    def bwd(g):
        a.accumulate(np.broadcast_to(np.expand_dims(g, axis) / n, a.shape))

    out._backward = bwd
    return out


def sum_axis(a, axis):
    out = Var(a.data.sum(axis=axis), parents=(a,))

    def bwd(g):
        a.accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape))

    out._backward = bwd
    return out


def concat(vars_, axis=0):
    datas = [v.data for v in vars_]
    out = Var(np.concatenate(datas, axis=axis), parents=tuple(vars_))
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for v, lo, hi in zip(vars_, offsets[:-1], offsets[1:]):
            if v.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                v.accumulate(g[tuple(sl)])

    out._backward = bwd
    return out


def matmul(a, b):
    out = Var(a.data @ b.data, parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ g)

    out._backward = bwd
    return out


# -- structured ops ------------------------------------------------------


def conv2d(x, w, b, stride=1, pad=0):
    """Cross-correlation of NCHW input with OIKK kernels plus bias."""
    if x.shape[1] != w.shape[1]:
        raise ValueError(
            "conv2d channel mismatch: input has %d, kernel expects %d"
            % (x.shape[1], w.shape[1])
        )
    xd = np.ascontiguousarray(x.data)
    y, cols = _backend.conv2d_forward(xd, w.data, None if b is None else b.data, stride, pad)
    parents = (x, w) if b is None else (x, w, b)
    out = Var(y, parents=parents)

    def bwd(g):
        need_gx = x.requires_grad
        gx, gw, gb = _backend.conv2d_backward(x.data, w.data, g, stride, pad, cols, need_gx)
        if need_gx:
            x.accumulate(gx)
        if w.requires_grad:
            w.accumulate(gw)
        if b is not None and b.requires_grad:
            b.accumulate(gb)

    out._backward = bwd
    return out


def avgpool2(x):
    """Non-overlapping 2x2 mean pooling."""
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ValueError("avgpool2 requires even spatial dims, got %dx%d" % (H, W))
    y = x.data.reshape(B, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5))
    out = Var(y, parents=(x,))

    def bwd(g):
        q = x.data.dtype.type(0.25)
        gx = np.repeat(np.repeat(g * q, 2, axis=2), 2, axis=3)
        x.accumulate(gx)

    out._backward = bwd
    return out


_UP2_CACHE = {}


def _up2_matrix(n, dtype):
    """Dense (2n, n) matrix of 2x bilinear interpolation weights.

    Uses the half-pixel-center convention (align_corners=False): output
    sample i reads source coordinate i/2 - 1/4, clamped at the borders.
    """
    key = (n, np.dtype(dtype).str)
    m = _UP2_CACHE.get(key)
    if m is None:
        m = np.zeros((2 * n, n), dtype=dtype)
        for i in range(2 * n):
            s = i / 2.0 - 0.25
            lo = int(np.floor(s))
            t = s - lo
            lo_c = min(max(lo, 0), n - 1)
            hi_c = min(max(lo + 1, 0), n - 1)
            m[i, lo_c] += 1.0 - t
            m[i, hi_c] += t
        _UP2_CACHE[key] = m
    return m


def upsample_bilinear2(x):
    """2x bilinear upsampling of an NCHW tensor (align_corners=False)."""
    B, C, H, W = x.shape
    uh = _up2_matrix(H, x.dtype)
    uw = _up2_matrix(W, x.dtype)
    y = np.einsum("ph,bchw,qw->bcpq", uh, x.data, uw, optimize=True)
    out = Var(y, parents=(x,))

    def bwd(g):
        x.accumulate(np.einsum("ph,bcpq,qw->bchw", uh, g, uw, optimize=True))

    out._backward = bwd
    return out


def haar_dwt_downsample(x):
    """Orthonormal 2-D Haar analysis step.

    Each 2x2 block [a, b; c, d] maps to LL=(a+b+c+d)/2, LH=(a-b+c-d)/2,
    HL=(a+b-c-d)/2, HH=(a-b-c+d)/2.  Output channels are band-major:
    [LL | LH | HL | HH], each band holding all input channels in order.
    """
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ValueError("haar_dwt_downsample requires even spatial dims, got %dx%d" % (H, W))
    half = x.data.dtype.type(0.5)
    v = x.data.reshape(B, C, H // 2, 2, W // 2, 2)
    a = v[:, :, :, 0, :, 0]
    b = v[:, :, :, 0, :, 1]
    c = v[:, :, :, 1, :, 0]
    d = v[:, :, :, 1, :, 1]
    ll = (a + b + c + d) * half
    lh = (a - b + c - d) * half
    hl = (a + b - c - d) * half
    hh = (a - b - c + d) * half
    y = np.concatenate([ll, lh, hl, hh], axis=1)
    out = Var(y, parents=(x,))

    def bwd(g):
        gll, glh, ghl, ghh = np.split(g, 4, axis=1)
        gx = np.empty_like(x.data).reshape(B, C, H // 2, 2, W // 2, 2)
        gx[:, :, :, 0, :, 0] = (gll + glh + ghl + ghh) * half
        gx[:, :, :, 0, :, 1] = (gll - glh + ghl - ghh) * half
        gx[:, :, :, 1, :, 0] = (gll + glh - ghl - ghh) * half
        gx[:, :, :, 1, :, 1] = (gll - glh - ghl + ghh) * half
        x.accumulate(gx.reshape(B, C, H, W))

    out._backward = bwd
    return out
