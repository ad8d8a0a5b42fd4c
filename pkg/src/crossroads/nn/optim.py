"""RMSprop with a running mean of squared gradients (no momentum/centering)."""

from __future__ import annotations

import numpy as np


class RMSprop:
    def __init__(self, params: dict[str, np.ndarray], learning_rate: float = 1e-4,
                 smoothing: float = 0.99, epsilon: float = 1e-8):
        if learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        self.learning_rate = learning_rate
        self.smoothing = smoothing
        self.epsilon = epsilon
        self.acc = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray],
             grads: dict[str, np.ndarray]) -> None:
        rho = params[next(iter(params))].dtype.type(self.smoothing)
        for key, p in params.items():
            g = grads[key].astype(p.dtype)
            acc = self.acc[key]
            acc *= rho
            acc += (1 - rho) * g * g
            p -= self.learning_rate * g / (np.sqrt(acc) + self.epsilon)
