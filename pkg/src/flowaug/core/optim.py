"""Adam optimizer, gradient clipping, and the warm-up/polynomial-decay
learning-rate schedule."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .tensor import Parameter

__all__ = ["Adam", "clip_grad_norm", "warmup_polynomial_lr"]


class Adam:
    """Standard Adam with bias correction; moment state persists across steps."""

    def __init__(self, parameters: Sequence[Parameter], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.parameters = list(parameters)
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate parameter names: {dupes}")
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = {p.name: np.zeros_like(p.data) for p in self.parameters}
        self._v = {p.name: np.zeros_like(p.data) for p in self.parameters}
        self._t = 0

    def step(self, learning_rate: float) -> None:
        # validate every gradient before touching any state, so a bad step
        # leaves parameters and moments untouched
        for p in self.parameters:
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise ArithmeticError(f"non-finite gradient for parameter '{p.name}'; step aborted")
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self._t
        c2 = 1.0 - b2**self._t
        for p in self.parameters:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self._m[p.name]
            v = self._v[p.name]
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            p.data = p.data - learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.parameters:
            p.grad = None


def clip_grad_norm(parameters: Sequence[Parameter], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most `max_norm`.

    Returns the pre-clipping norm.
    """
    total = 0.0
    for p in parameters:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in parameters:
            if p.grad is not None:
                p.grad *= scale
    return norm


def warmup_polynomial_lr(step: int, warmup_steps: int, max_lr: float, total_steps: int, power: float = 1.0) -> float:
    """Linear ramp 0 -> max_lr over `warmup_steps`, then polynomial decay
    max_lr * ((total - step) / (total - warmup)) ** power, floored at 0."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    if warmup_steps >= total_steps:
        raise ValueError(f"warmup_steps ({warmup_steps}) must be < total_steps ({total_steps})")
    if step < warmup_steps:
        return max_lr * step / warmup_steps
    if step >= total_steps:
        return 0.0
    return max_lr * ((total_steps - step) / (total_steps - warmup_steps)) ** power
