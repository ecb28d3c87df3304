"""SGD with heavy-ball momentum, coupled L2 weight decay and a cosine schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from evolved_sampling.errors import NumericError

SCHEDULES = ("constant", "cosine")


@dataclass(frozen=True)
class SgdConfig:
    base_lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    schedule: str = "cosine"

    def __post_init__(self):
        if not self.base_lr > 0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr!r}")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum!r}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay!r}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r} (expected one of {SCHEDULES})")


def lr_at(cfg: SgdConfig, step: int, total_steps: int) -> float:
    if not (0 <= step < total_steps):
        raise ValueError(f"step {step} outside [0, {total_steps})")
    if cfg.schedule == "constant":
        return cfg.base_lr
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


def sgd_step(params, grad, velocity, cfg: SgdConfig, lr_now: float):
    """Return ``(params, velocity)`` after one momentum step; inputs are not mutated."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    velocity = np.asarray(velocity, dtype=np.float64)
    if not (params.shape == grad.shape == velocity.shape):
        raise ValueError("params, grad and velocity must share one shape")
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient passed to sgd_step")
    with np.errstate(over="ignore", invalid="ignore"):
        velocity = cfg.momentum * velocity + (grad + cfg.weight_decay * params)
        params = params - lr_now * velocity
    if not (np.all(np.isfinite(params)) and np.all(np.isfinite(velocity))):
        raise NumericError("parameters diverged to a non-finite value")
    return params, velocity
