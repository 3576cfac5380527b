"""AdamW over the trainable subset of a ParamStore."""
from __future__ import annotations

import numpy as np


def _decays(name: str) -> bool:
    # norm gains/biases are exempt from weight decay
    return ".norm" not in name and not name.startswith("norm")


class AdamW:
    def __init__(self, params: dict, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = dict(params)
        self.lr = np.float32(lr)
        self.b1, self.b2 = np.float32(betas[0]), np.float32(betas[1])
        self.eps = np.float32(eps)
        self.weight_decay = np.float32(weight_decay)
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in self.params.items()}

    def step(self):
        self.t += 1
        c1 = np.float32(1.0 - float(self.b1) ** self.t)
        c2 = np.float32(1.0 - float(self.b2) ** self.t)
        one = np.float32(1.0)
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad.astype(np.float32)
            m = self.b1 * self.m[name] + (one - self.b1) * g
            v = self.b2 * self.v[name] + (one - self.b2) * (g * g)
            self.m[name], self.v[name] = m, v
            data = p.data
            if self.weight_decay and _decays(name):
                data = data * (one - self.lr * self.weight_decay)
            p.data = (data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(np.float32)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None
