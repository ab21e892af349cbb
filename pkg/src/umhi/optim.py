from __future__ import annotations

import numpy as np

PAPER_BETAS = (0.1, 0.001)
STANDARD_BETAS = (0.9, 0.999)


class Adam:
    """Adaptive-moment updates applied in place to a dict of arrays."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 0.001,
                 betas: tuple[float, float] = PAPER_BETAS, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
