"""Weighted sampling without replacement, mini-batch selection, pruning and annealing.

Sampling uses exponential keys: item ``i`` draws ``E_i = -log(U_i) / p_i`` and
the ``k`` smallest keys win. This is the same distribution as drawing items one
at a time with probabilities renormalized after each draw, but it needs a
single pass and one uniform per item. Keys sorted ascending give the draw
order; equal keys go to the lower index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from evolved_sampling.sampler import DEFAULT_FLOOR, SamplerState, probability_snapshot


@dataclass(frozen=True)
class AnnealWindow:
    start_epochs: int
    end_epochs: int
    total_epochs: int

    def __post_init__(self):
        if self.total_epochs < 1:
            raise ValueError(f"total_epochs must be positive, got {self.total_epochs}")
        if self.start_epochs < 0 or self.end_epochs < 0:
            raise ValueError("annealing epoch counts must be non-negative")
        if self.start_epochs + self.end_epochs > self.total_epochs:
            raise ValueError(
                f"annealing window {self.start_epochs}+{self.end_epochs} "
                f"exceeds total epochs {self.total_epochs}"
            )

    @classmethod
    def from_ratio(cls, ratio: float, total_epochs: int) -> "AnnealWindow":
        """Same number of annealing epochs at each end: ``floor(ratio * E)``."""
        if not (0.0 <= ratio <= 0.5):
            raise ValueError(f"anneal ratio must lie in [0, 0.5], got {ratio!r}")
        k = math.floor(ratio * total_epochs + 1e-9)
        return cls(k, k, total_epochs)


@dataclass(frozen=True)
class PruneConfig:
    ratio: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.ratio < 1.0):
            raise ValueError(f"prune ratio must lie in [0, 1), got {self.ratio!r}")

    def retained(self, n: int) -> int:
        return math.floor((1.0 - self.ratio) * n + 1e-9)


def _check_distribution(p: np.ndarray) -> None:
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probabilities must be a non-empty 1-d vector")
    if not np.all(np.isfinite(p)) or (p < 0).any():
        raise ValueError("probabilities must be finite and non-negative")
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"probabilities must sum to 1, got {total!r}")


def weighted_sample_without_replacement(
    probabilities, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``k`` distinct positions of ``probabilities``, returned in draw order.

    Zero-probability items get an infinite key, so they are only drawn once
    every positive-probability item is exhausted (lowest index first).
    """
    p = np.asarray(probabilities, dtype=np.float64)
    _check_distribution(p)
    m = p.size
    if int(k) != k or k < 0 or k > m:
        raise ValueError(f"cannot draw k={k} distinct items out of {m}")
    k = int(k)
    u = rng.random(m)
    # -log(1-U) is Exp(1) and finite since 1-U lies in (0, 1]
    expo = -np.log1p(-u)
    positive = p > 0
    keys = np.full(m, np.inf)
    with np.errstate(over="ignore"):  # subnormal p: key is inf, same as p = 0
        keys[positive] = expo[positive] / p[positive]
    return np.argsort(keys, kind="stable")[:k]


def select_minibatch(
    state: SamplerState,
    meta_ids,
    b: int,
    rng: np.random.Generator,
    floor: float = DEFAULT_FLOOR,
) -> np.ndarray:
    """Pick ``b`` ids out of the meta-batch with probability proportional to weight."""
    meta_ids = np.asarray(meta_ids, dtype=np.int64)
    if b > meta_ids.size:
        raise ValueError(f"mini-batch size {b} exceeds meta-batch size {meta_ids.size}")
    if b == meta_ids.size:
        return meta_ids.copy()
    p = probability_snapshot(state, meta_ids, floor)
    return meta_ids[weighted_sample_without_replacement(p, b, rng)]


def prune_epoch(
    state: SamplerState,
    all_ids,
    cfg: PruneConfig,
    rng: np.random.Generator,
    floor: float = DEFAULT_FLOOR,
    uniform: bool = False,
) -> np.ndarray:
    """Retain ``floor((1 - r) * n)`` ids drawn proportionally to the current weights.

    ``uniform=True`` ignores the weights (random pruning baseline). The result
    is sorted ascending; presentation order is decided later by the epoch shuffle.
    """
    all_ids = np.asarray(all_ids, dtype=np.int64)
    if cfg.ratio == 0.0:
        return all_ids.copy()
    keep = cfg.retained(all_ids.size)
    if uniform:
        p = np.full(all_ids.size, 1.0 / all_ids.size)
    else:
        p = probability_snapshot(state, all_ids, floor)
    chosen = all_ids[weighted_sample_without_replacement(p, keep, rng)]
    return np.sort(chosen)


def annealing_active(epoch: int, window: AnnealWindow) -> bool:
    """True on the leading/trailing epochs where selection is switched off."""
    if not (0 <= epoch < window.total_epochs):
        raise ValueError(f"epoch {epoch} outside [0, {window.total_epochs})")
    return epoch < window.start_epochs or epoch >= window.total_epochs - window.end_epochs
