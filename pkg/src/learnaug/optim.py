from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AdamWConfig:
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0


class AdamW:
    """AdamW with decoupled weight decay over a dict of numpy arrays (updated in place)."""

    def __init__(self, params: dict[str, np.ndarray], cfg: AdamWConfig = AdamWConfig(),
                 names=None):
        self.params = params
        self.cfg = cfg
        self.names = list(names) if names is not None else list(params)
        self.t = 0
        self.m = {k: np.zeros_like(params[k]) for k in self.names}
        self.v = {k: np.zeros_like(params[k]) for k in self.names}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        lr = self.cfg.lr
        if lr == 0.0:
            return
        b1, b2 = self.cfg.betas
        self.t += 1
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for k in self.names:
            g = grads.get(k)
            if g is None:
                continue
            p = self.params[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            if self.cfg.weight_decay:
                p -= lr * self.cfg.weight_decay * p
            p -= lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.cfg.eps)
