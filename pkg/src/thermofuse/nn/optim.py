"""Adaptive-moment optimizer with bias-corrected moving averages.

beta1 = 0.9 and beta2 = 0.999 weight the first/second moment averages;
both are stored directly in bias-corrected form through the equivalent
recurrence

    m <- m + c_t * (g - m),      c_t = (1 - beta1) / (1 - beta1^t)

whose mixing weights sum to one by construction (same real value as
dividing the plain moving average by 1 - beta1^t, but the step-1
correction is exact: c_1 == 1.0, so the corrected first moment equals the
gradient bit-for-bit). The parameter step is lr * m / (sqrt(v) + eps).
"""

from __future__ import annotations

import numpy as np

from ..errors import ThermofuseError


class NonFiniteGradientError(ThermofuseError):
    """Raised when an update is rejected because gradients contain NaN/inf."""

    def __init__(self, blocks: list[str]):
        self.blocks = blocks
        super().__init__(
            "update rejected, non-finite gradient in: " + ", ".join(blocks)
        )


class Adam:
    def __init__(
        self,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update `params` in place from `grads` (matching keys required).

        The whole update is rejected, with the offending parameter blocks
        named, if any gradient contains a non-finite value; no state
        changes in that case.
        """
        bad = [name for name, g in grads.items() if not np.all(np.isfinite(g))]
        if bad:
            raise NonFiniteGradientError(bad)
        self.step_count += 1
        t = self.step_count
        c1 = (1.0 - self.beta1) / (1.0 - self.beta1**t)
        c2 = (1.0 - self.beta2) / (1.0 - self.beta2**t)
        for name, p in params.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m += c1 * (g - m)
            v += c2 * (g * g - v)
            p -= self.lr * m / (np.sqrt(v) + self.eps)
