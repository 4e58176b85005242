"""Bounded trigonometric embedding of event timestamps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EmbeddingConfig:
    d_in: int
    base: float = 10000.0
    time_scale: float = 1.0

    def __post_init__(self):
        if self.d_in < 2 or self.d_in % 2 != 0:
            raise ValueError(f"d_in must be even and >= 2, got {self.d_in}")
        if self.base <= 1:
            raise ValueError(f"base must be > 1, got {self.base}")
        if self.time_scale <= 0:
            raise ValueError(f"time_scale must be > 0, got {self.time_scale}")


def embed_time(t, cfg):
    """x[2k] = sin(t' / base^(2k/d_in)), x[2k+1] = cos(...), t' = t/time_scale.

    Deterministic, every component in [-1, 1]."""
    if t < 0:
        raise ValueError(f"timestamp must be non-negative, got {t}")
    tp = t / cfg.time_scale
    k = np.arange(0, cfg.d_in, 2, dtype=np.float64)
    freq = cfg.base ** (k / cfg.d_in)
    angles = tp / freq
    out = np.empty(cfg.d_in, dtype=np.float64)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return out
