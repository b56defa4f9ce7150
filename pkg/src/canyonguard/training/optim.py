"""Adam over flat name->array parameter dicts."""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        """Update params in place; keys are visited in sorted order."""
        if self.lr == 0.0:
            return
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for key in sorted(grads):
            g = grads[key].astype(np.float64)
            if key not in self.m:
                self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
            self.m[key] = self.beta1 * self.m[key] + (1 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1 - self.beta2) * g * g
            mhat = self.m[key] / b1t
            vhat = self.v[key] / b2t
            params[key] = (params[key] - self.lr * mhat / (np.sqrt(vhat) + self.eps)
                           ).astype(params[key].dtype)
