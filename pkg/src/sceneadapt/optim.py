"""Parameter update rules: SGD with momentum, Adam, and a polynomial decay
learning-rate schedule.

Optimizers hold their own per-parameter state keyed by parameter name and
read gradients from each tensor's grad buffer. Updates mutate parameter
arrays in place and are bit-deterministic for identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import Tensor
from .errors import ConfigurationError, UsageError


@dataclass(frozen=True)
class PolySchedule:
    """Multiplier (1 - i / total) ** power, clamped to 0 past the horizon."""

    total_iterations: int = 3750
    power: float = 0.9

    def __post_init__(self):
        if self.total_iterations < 1:
            raise ConfigurationError(f"schedule horizon must be >= 1, got {self.total_iterations}")
        if self.power <= 0:
            raise ConfigurationError(f"schedule power must be > 0, got {self.power}")

    def multiplier(self, iteration: int) -> float:
        i = min(max(int(iteration), 0), self.total_iterations)
        return (1.0 - i / self.total_iterations) ** self.power


def poly_multiplier(iteration: int, schedule: PolySchedule) -> float:
    return schedule.multiplier(iteration)


def _checked_grad(name: str, p: Tensor) -> np.ndarray:
    if p.grad is None:
        raise UsageError(f"parameter {name!r} has no gradient; run backward first")
    return p.grad


class SgdMomentum:
    """v <- momentum * v + grad; p <- p - lr * multiplier * v."""

    def __init__(self, lr: float = 0.007, momentum: float = 0.9, weight_decay: float = 0.0):
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self._velocity: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Tensor], lr_multiplier: float = 1.0) -> None:
        for name, p in params.items():
            g = _checked_grad(name, p)
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            v = self._velocity.get(name)
            if v is None:
                v = np.zeros_like(p.data)
                self._velocity[name] = v
            v *= self.momentum
            v += g
            p.data -= (self.lr * lr_multiplier) * v


class Adam:
    """Bias-corrected Adam with the usual (0.9, 0.999, 1e-8) defaults."""

    def __init__(self, lr: float = 2e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t = 0

    def step(self, params: dict[str, Tensor]) -> None:
        self._t += 1
        c1 = 1.0 - self.beta1 ** self._t
        c2 = 1.0 - self.beta2 ** self._t
        for name, p in params.items():
            g = _checked_grad(name, p)
            m = self._m.setdefault(name, np.zeros_like(p.data))
            v = self._v.setdefault(name, np.zeros_like(p.data))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None
