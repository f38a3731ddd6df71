"""Adam with bias correction and the cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import InvalidArgument, ShapeError


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray],
             lr: Optional[float] = None) -> None:
        """Update ``params`` in place.  Parameters without a gradient are skipped."""
        lr = self.lr if lr is None else lr
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name, g in grads.items():
            if name not in params:
                continue
            p = params[name]
            if g.shape != p.shape:
                raise ShapeError(f"{name}: gradient shape {g.shape} vs parameter {p.shape}")
            if self.weight_decay:
                g = g + self.weight_decay * p
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def cosine_lr(base_lr: float, step: int, total_steps: int) -> float:
    if total_steps <= 0 or not 0 <= step <= total_steps:
        raise InvalidArgument(f"step {step} outside 0..{total_steps}")
    if step == total_steps:
        return 0.0
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
