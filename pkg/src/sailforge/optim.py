"""Adaptive-moment optimizer over flat parameter vectors (decoupled weight decay)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass
class OptimizerConfig:
    step_size: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    batch_size: int = 128
    max_steps: int = 100
    beta_dpo: float = 5000.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        checks = {
            "step_size": self.step_size > 0,
            "beta1": 0 < self.beta1 < 1,
            "beta2": 0 < self.beta2 < 1,
            "epsilon": self.epsilon > 0,
            "weight_decay": self.weight_decay >= 0,
            "batch_size": self.batch_size >= 1,
            "max_steps": self.max_steps >= 0,
            "beta_dpo": self.beta_dpo > 0,
        }
        for name, ok in checks.items():
            value = getattr(self, name)
            if not ok or not math.isfinite(value):
                raise ConfigError(f"optimizer field {name}={value!r} out of range", field=name)


class Adam:
    def __init__(self, cfg: OptimizerConfig):
        self.cfg = cfg
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Return updated parameters; ``params`` itself is left untouched."""
        c = self.cfg
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = c.beta1 * self.m + (1.0 - c.beta1) * grad
        self.v = c.beta2 * self.v + (1.0 - c.beta2) * (grad * grad)
        m_hat = self.m / (1.0 - c.beta1**self.t)
        v_hat = self.v / (1.0 - c.beta2**self.t)
        out = params - c.step_size * m_hat / (np.sqrt(v_hat) + c.epsilon)
        if c.weight_decay:
            out -= c.step_size * c.weight_decay * params
        return out
