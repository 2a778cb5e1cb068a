"""RMSprop with the two-stage learning-rate schedule."""

import numpy as np


def rmsprop_step(param, grad, acc, lr: float, decay: float = 0.9,
                 eps: float = 1e-8) -> None:
    """In-place update: acc <- decay*acc + (1-decay)*grad^2;
    param <- param - lr * grad / sqrt(acc + eps)."""
    acc *= decay
    acc += (1.0 - decay) * grad * grad
    param -= lr * grad / np.sqrt(acc + eps)


class RmsProp:
    """Optimizer state over a list of (name, param, grad) triples."""

    def __init__(self, params, lr: float = 1e-5, decay: float = 0.9,
                 eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.acc = [np.zeros_like(p) for _, p, _ in self.params]

    def step(self) -> None:
        for (_, p, g), acc in zip(self.params, self.acc):
            rmsprop_step(p, g, acc, self.lr, self.decay, self.eps)


def schedule_lr(iteration: int, total: int, base_lr: float = 1e-5,
                final_lr: float = 1e-6, switch_fraction: float = 0.8) -> float:
    """Two-stage schedule: base_lr, dropping to final_lr at 80% of the run."""
    if total <= 0:
        return base_lr
    return base_lr if iteration < switch_fraction * total else final_lr
