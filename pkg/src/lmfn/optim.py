"""Adam with coupled L2 weight decay, plus the step-decay schedule."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

__all__ = ["Adam", "lr_schedule"]

BASE_LR = 1e-4
DECAY_EVERY = 500_000


def lr_schedule(iteration: int, base_lr: float = BASE_LR) -> float:
    """base_lr divided by 10 for every 5e5 iterations completed."""
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0; got {iteration}")
    return base_lr * 10.0 ** (-(iteration // DECAY_EVERY))


class Adam:
    """Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8, bias-corrected).

    Weight decay is the classical coupled form: lambda * param joins the
    gradient before the moment updates.
    """

    def __init__(self, params, lr: float = BASE_LR, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 1e-4):
        self.params: list[Tensor] = list(params)
        if not self.params:
            raise ValueError("optimizer needs at least one parameter")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr: float | None = None) -> None:
        """One update over all parameters; requires populated gradients."""
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ValueError(f"parameter {i} has no gradient; "
                                 "run backward before stepping")
        if lr is None:
            lr = self.lr
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if self.weight_decay:
                g = g + np.float32(self.weight_decay) * p.data
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data -= np.float32(lr) * update

    # -- persistence -----------------------------------------------------

    def state_arrays(self):
        """(t, first moments, second moments), aligned with ``params``."""
        return self.t, self.m, self.v

    def load_state_arrays(self, t: int, m, v) -> None:
        if len(m) != len(self.params) or len(v) != len(self.params):
            raise ValueError(f"optimizer state holds {len(m)} moment pairs for "
                             f"{len(self.params)} parameters")
        for p, a, b in zip(self.params, m, v):
            if a.shape != p.data.shape or b.shape != p.data.shape:
                raise ValueError(f"moment shape {a.shape} does not match "
                                 f"parameter shape {p.data.shape}")
        self.t = int(t)
        self.m = [a.astype(np.float32).copy() for a in m]
        self.v = [b.astype(np.float32).copy() for b in v]
