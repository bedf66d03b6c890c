"""Adam with decoupled weight decay and global-norm gradient clipping.

Update order per step: clip all gradients by their joint L2 norm, apply
weight decay directly to the parameter (decoupled, not through the moments),
then the bias-corrected Adam delta. Steps with any non-finite gradient are
skipped entirely (parameters and moments untouched) with a warning, so one
bad batch cannot poison the moment estimates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class OptimConfig:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    weight_decay: float = 0.01
    clip_norm: float = 5.0
    warmup_steps: int = 0      # 0 disables the linear warm-up
    epochs: int = 200
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")


class Adam:
    """Holds first/second moment state for a fixed list of parameters."""

    def __init__(self, params, cfg: OptimConfig):
        self.params = list(params)
        self.cfg = cfg
        self.step_count = 0
        self.skipped = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def global_grad_norm(self) -> float:
        total = 0.0
        for p in self.params:
            if p.grad is not None:
                total += float(np.sum(np.square(p.grad, dtype=np.float64)))
        return float(np.sqrt(total))

    def step(self) -> bool:
        """Apply one update. Returns False when skipped on non-finite grads."""
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data)
                 for p in self.params]
        if not all(np.all(np.isfinite(g)) for g in grads):
            self.skipped += 1
            logger.warning("skipping optimizer step %d: non-finite gradient",
                           self.step_count + 1)
            return False

        norm = self.global_grad_norm()
        scale = 1.0
        if norm > self.cfg.clip_norm:
            scale = self.cfg.clip_norm / norm

        self.step_count += 1
        c = self.cfg
        lr = c.lr
        if c.warmup_steps > 0:
            lr *= min(1.0, self.step_count / c.warmup_steps)
        bc1 = 1.0 - c.beta1 ** self.step_count
        bc2 = 1.0 - c.beta2 ** self.step_count
        for p, g, m, v in zip(self.params, grads, self._m, self._v):
            g = g * scale
            if c.weight_decay > 0:
                p.data -= (lr * c.weight_decay) * p.data
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * np.square(g)
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)
        return True
