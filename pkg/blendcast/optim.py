import math
from typing import Dict, Optional

import numpy as np

from .schemas import OptimizerKind

Params = Dict[str, np.ndarray]


def global_norm(grads: Params) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_global_norm(grads: Params, max_norm: Optional[float]) -> float:
    """Rescales ``grads`` in place when their joint L2 norm exceeds ``max_norm``; returns the pre-clip norm"""
    norm = global_norm(grads)
    if max_norm is not None and norm > max_norm:
        factor = max_norm / norm
        for g in grads.values():
            g *= factor
    return norm


class Sgd:
    def __init__(self, lr: float) -> None:
        self.lr = lr

    def step(self, params: Params, grads: Params) -> None:
        for name, p in params.items():
            p -= self.lr * grads[name]


class Adam:
    """Adam with bias correction; updates the arrays in ``params`` in place"""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Params = {}
        self.v: Params = {}

    def step(self, params: Params, grads: Params) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


def make_optimizer(kind: OptimizerKind, lr: float):
    if OptimizerKind(kind) == OptimizerKind.adam:
        return Adam(lr=lr)
    return Sgd(lr=lr)
