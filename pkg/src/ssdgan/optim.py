"""Adam with bias correction.

With beta1 = 0 (the configuration used for every network here) the
first moment reduces to the raw gradient.
"""

import numpy as np


class Adam:
    def __init__(self, params, lr=2e-4, beta1=0.0, beta2=0.9, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.s = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, s in zip(self.params, self.m, self.s):
            if p.grad is None:
                continue
            g = p.grad
            dt = p.data.dtype
            m *= b1
            m += (1.0 - b1) * g
            s *= b2
            s += (1.0 - b2) * (g * g)
            update = (self.lr / c1) * m / (np.sqrt(s / c2) + self.eps)
            p.data -= update.astype(dt, copy=False)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def state_tensors(self, prefix):
        """Named state for checkpointing, including the step counter."""
        out = {"%s/t" % prefix: np.asarray([self.t], dtype=np.float32)}
        for i, (m, s) in enumerate(zip(self.m, self.s)):
            out["%s/m%d" % (prefix, i)] = m
            out["%s/s%d" % (prefix, i)] = s
        return out

    def load_state_tensors(self, prefix, table):
        self.t = int(table["%s/t" % prefix][0])
        for i in range(len(self.params)):
            self.m[i][...] = table["%s/m%d" % (prefix, i)]
            self.s[i][...] = table["%s/s%d" % (prefix, i)]
