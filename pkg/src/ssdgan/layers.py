"""Network layers built on the autodiff core.

Layers own their parameters as ``Var`` objects plus any non-trainable
buffers (batchnorm running statistics, the persistent power-iteration
vector of spectral normalization).  ``named_parameters`` yields the
trainable Vars in a fixed order; ``named_buffers`` yields everything
else that belongs in a checkpoint.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Var


def xavier_uniform(rng, shape, fan_in, fan_out, dtype):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    def named_parameters(self):
        for name, child in self._children():
            for sub, p in child.named_parameters():
                yield ("%s/%s" % (name, sub)) if sub else name, p

    def named_buffers(self):
        for name, child in self._children():
            for sub, b in child.named_buffers():
                yield ("%s/%s" % (name, sub)) if sub else name, b

    def _children(self):
        for name, obj in vars(self).items():
            if isinstance(obj, Module):
                yield name, obj

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


class Conv2d(Module):
    def __init__(self, cin, cout, k, stride=1, pad=0, rng=None, dtype=np.float32):
        if k not in (1, 3):
            raise ValueError("only 1x1 and 3x3 kernels are supported, got k=%d" % k)
        self.cin, self.cout, self.k = cin, cout, k
        self.stride, self.pad = stride, pad
        fan_in = cin * k * k
        fan_out = cout * k * k
        self.w = Var(xavier_uniform(rng, (cout, cin, k, k), fan_in, fan_out, dtype), requires_grad=True)
        self.b = Var(np.zeros(cout, dtype=dtype), requires_grad=True)

    def forward(self, x):
        return ag.conv2d(x, self.w, self.b, self.stride, self.pad)

    def named_parameters(self):
        yield "w", self.w
        yield "b", self.b

    def named_buffers(self):
        return iter(())


class Linear(Module):
    def __init__(self, din, dout, rng=None, dtype=np.float32):
        self.din, self.dout = din, dout
        self.w = Var(xavier_uniform(rng, (dout, din), din, dout, dtype), requires_grad=True)
        self.b = Var(np.zeros(dout, dtype=dtype), requires_grad=True)

    def forward(self, x):
        if x.shape[-1] != self.din:
            raise ValueError("linear input dim %d != expected %d" % (x.shape[-1], self.din))
        return ag.matmul(x, _transpose(self.w)) + self.b

    def named_parameters(self):
        yield "w", self.w
        yield "b", self.b

    def named_buffers(self):
        return iter(())


def _transpose(v):
    out = Var(v.data.T, parents=(v,))

    def bwd(g):
        v.accumulate(g.T)

    out._backward = bwd
    return out


class BatchNorm2d(Module):
    """Per-channel batchnorm over (B, H, W) with running statistics.

    momentum 0.1, eps 1e-5; running variance uses the unbiased batch
    estimate, normalization uses the biased one.
    """

    def __init__(self, c, momentum=0.1, eps=1e-5, dtype=np.float32):
        self.c = c
        self.momentum = momentum
        self.eps = eps
        self.gamma = Var(np.ones(c, dtype=dtype), requires_grad=True)
        self.beta = Var(np.zeros(c, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(c, dtype=dtype)
        self.running_var = np.ones(c, dtype=dtype)

    def forward(self, x, training):
        B, C, H, W = x.shape
        dt = x.data.dtype
        if training:
            n = B * H * W
            mean = x.data.mean(axis=(0, 2, 3))
            var = x.data.var(axis=(0, 2, 3))
            m = dt.type(self.momentum)
            self.running_mean = ((1 - m) * self.running_mean + m * mean).astype(dt)
            if n > 1:
                unbiased = var * (n / (n - 1))
            else:
                unbiased = var
            self.running_var = ((1 - m) * self.running_var + m * unbiased).astype(dt)
            inv = 1.0 / np.sqrt(var + dt.type(self.eps))
            xhat_data = (x.data - mean[:, None, None]) * inv[:, None, None]
            xhat = Var(xhat_data, parents=(x,))

            def bwd(g):
                # standard batchnorm backward for xhat = (x - mu) * inv
                gm = g.mean(axis=(0, 2, 3))
                gxm = (g * xhat_data).mean(axis=(0, 2, 3))
                x.accumulate(
                    inv[:, None, None]
                    * (g - gm[:, None, None] - xhat_data * gxm[:, None, None])
                )

            xhat._backward = bwd
        else:
            inv = (1.0 / np.sqrt(self.running_var + dt.type(self.eps))).astype(dt)
            mean = self.running_mean
            xhat = Var((x.data - mean[:, None, None]) * inv[:, None, None], parents=(x,))

            def bwd(g):
                x.accumulate(g * inv[:, None, None])

            xhat._backward = bwd
        g4 = ag.reshape(self.gamma, (1, C, 1, 1))
        b4 = ag.reshape(self.beta, (1, C, 1, 1))
        return ag.add(ag.mul(xhat, g4), b4)

    def named_parameters(self):
        yield "gamma", self.gamma
        yield "beta", self.beta

    def named_buffers(self):
        yield "running_mean", self.running_mean
        yield "running_var", self.running_var


def power_iteration(w2d, u, n_iters, eps=1e-12):
    """Estimate the top singular value of a 2-D matrix.

    Returns (sigma, u_new, v); u is the left vector (len = rows).
    """
    v = None
    for _ in range(max(n_iters, 1)):
        v = w2d.T @ u
        v = v / max(np.linalg.norm(v), eps)
        u = w2d @ v
        u = u / max(np.linalg.norm(u), eps)
    sigma = float(u @ w2d @ v)
    return sigma, u, v


def spectral_normalize(w, u, n_iters=1, eps=1e-12):
    """W / sigma_hat with sigma_hat from power iteration; updates u in place.

    A zero matrix comes back unchanged (the denominator is floored)."""
    w2d = w.reshape(w.shape[0], -1)
    sigma, u_new, _ = power_iteration(w2d, u, n_iters, eps)
    u[...] = u_new
    return w / max(sigma, eps)


class SpectralNormLinear(Module):
    """Linear layer whose weight is divided by its top singular value.

    One persistent-u power iteration per training forward (the SNGAN
    convention); u is frozen in eval mode so that inference is pure.
    Gradients flow through the division with u and v held constant.
    """

    def __init__(self, din, dout, rng=None, dtype=np.float32, eps=1e-12):
        self.din, self.dout = din, dout
        self.eps = eps
        self.w = Var(xavier_uniform(rng, (dout, din), din, dout, dtype), requires_grad=True)
        self.b = Var(np.zeros(dout, dtype=dtype), requires_grad=True)
        u = rng.standard_normal(dout).astype(dtype)
        self.u = u / max(np.linalg.norm(u), eps)

    def forward(self, x, training):
        if training:
            _, u, v = power_iteration(self.w.data, self.u, 1, self.eps)
            self.u = u.astype(self.w.dtype)
        else:
            v = self.w.data.T @ self.u
            v = v / max(np.linalg.norm(v), self.eps)
            u = self.u
        uc = Var(u.astype(self.w.dtype))
        vc = Var(v.astype(self.w.dtype))
        # sigma = u^T W v as a tape node so the quotient rule applies to W
        sigma = ag.vsum(ag.mul(ag.matmul(ag.reshape(uc, (1, self.dout)), self.w), ag.reshape(vc, (1, self.din))))
        inv_sigma = _reciprocal_floored(sigma, self.eps)
        w_sn = ag.mul(self.w, ag.reshape(inv_sigma, (1, 1)))
        return ag.matmul(x, _transpose(w_sn)) + self.b

    def named_parameters(self):
        yield "w", self.w
        yield "b", self.b

    def named_buffers(self):
        yield "u", self.u


def _reciprocal_floored(s, eps):
    denom = max(float(s.data), eps)
    out = Var(np.asarray(1.0 / denom, dtype=s.dtype), parents=(s,))
    floored = float(s.data) < eps

    def bwd(g):
        if not floored:
            s.accumulate(np.asarray(-g / (denom * denom), dtype=s.dtype))

    out._backward = bwd
    return out


def global_sum_pool(x):
    return ag.sum_axis(ag.sum_axis(x, 3), 2)
