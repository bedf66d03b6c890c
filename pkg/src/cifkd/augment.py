"""SpecAugment-style masking on feature matrices, deterministic per seed."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AugmentConfig:
    freq_width: int = 27
    freq_masks: int = 2
    time_width: int = 50
    time_masks: int = 2
    probability: float = 1.0

    def __post_init__(self):
        if not 0 <= self.probability <= 1:
            raise ValueError("probability must be in [0, 1]")
        for name in ("freq_width", "freq_masks", "time_width", "time_masks"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def spec_augment(X: np.ndarray, cfg: AugmentConfig, rng) -> np.ndarray:
    """Zero random frequency and time bands of X (T x F); X is not modified.

    Band widths are drawn up to the configured maxima and clipped to the
    utterance, matching the usual SpecAugment policy.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    if cfg.probability == 0 or rng.uniform() >= cfg.probability:
        return X
    out = X.copy()
    T, F = out.shape
    for _ in range(cfg.freq_masks):
        width = int(rng.integers(0, min(cfg.freq_width, F) + 1))
        if width:
            start = int(rng.integers(0, F - width + 1))
            out[:, start:start + width] = 0.0
    for _ in range(cfg.time_masks):
        width = int(rng.integers(0, min(cfg.time_width, T) + 1))
        if width:
            start = int(rng.integers(0, T - width + 1))
            out[start:start + width, :] = 0.0
    return out
