"""Per-sample score/weight state and the two-EMA weight update.

Each sample carries a slow score ``s`` (an EMA of its losses) and a selection
weight ``w`` that mixes the *previous* score with the current loss::

    w_new = beta1 * s_old + (1 - beta1) * loss
    s_new = beta2 * s_old + (1 - beta2) * loss

Unrolling the recursion shows that ``w`` is an EMA of the losses plus an EMA of
their step-to-step differences, so the pair ``(beta1, beta2)`` tunes how much
high-frequency loss variation leaks into the sampling weights (see
:mod:`evolved_sampling.analysis`). ``beta1 = beta2 = 0`` gives plain
loss-proportional sampling and ``beta1 = beta2 = 1`` freezes the weights at
their uniform initial value.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from evolved_sampling.errors import NumericError

DEFAULT_FLOOR = 1e-12


@dataclass(frozen=True)
class BetaParams:
    beta1: float
    beta2: float

    def __post_init__(self):
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")

    def require_expandable(self) -> None:
        """Raise unless the explicit loss/difference expansion exists (beta2 != 1)."""
        if self.beta2 == 1.0:
            raise ValueError("the expansion of the weight recursion needs beta2 != 1")


class StrategyKind(str, enum.Enum):
    UNIFORM = "Uniform"
    LOSS = "Loss"
    ORDER = "Order"
    ES = "ES"
    ESWP = "ESWP"
    NONDIF = "NonDif"
    RANDOM_PRUNE = "RandomPrune"

    @classmethod
    def parse(cls, text: str) -> "StrategyKind":
        for kind in cls:
            if kind.value.lower() == str(text).lower():
                return kind
        choices = ", ".join(k.value for k in cls)
        raise ValueError(f"unknown strategy {text!r} (expected one of: {choices})")


DEFAULT_BETAS = {
    StrategyKind.ES: BetaParams(0.2, 0.9),
    StrategyKind.ESWP: BetaParams(0.2, 0.8),
    StrategyKind.NONDIF: BetaParams(0.9, 0.9),
    StrategyKind.LOSS: BetaParams(0.0, 0.0),
}


@dataclass(frozen=True)
class Strategy:
    kind: StrategyKind
    betas: BetaParams | None = None

    def __post_init__(self):
        kind = StrategyKind.parse(self.kind) if not isinstance(self.kind, StrategyKind) else self.kind
        object.__setattr__(self, "kind", kind)
        if self.betas is None:
            object.__setattr__(self, "betas", DEFAULT_BETAS.get(kind, BetaParams(0.0, 0.0)))
        if kind is StrategyKind.NONDIF and self.betas.beta1 != self.betas.beta2:
            raise ValueError(
                f"NonDif requires beta1 == beta2, got ({self.betas.beta1}, {self.betas.beta2})"
            )

    @property
    def uses_sampler(self) -> bool:
        """True when per-sample weights are tracked and drive selection."""
        return self.kind in (
            StrategyKind.LOSS,
            StrategyKind.ORDER,
            StrategyKind.ES,
            StrategyKind.ESWP,
            StrategyKind.NONDIF,
        )

    @property
    def selects_minibatch(self) -> bool:
        return self.uses_sampler

    @property
    def prunes(self) -> bool:
        return self.kind in (StrategyKind.ESWP, StrategyKind.RANDOM_PRUNE)


@dataclass
class SamplerState:
    """Evolving per-sample memory: scores, weights and the step each was last touched.

    Only samples that appear in a scored meta-batch are updated; the rest keep
    stale values. All arrays are float64 so the recursion can be checked
    against its closed-form expansion to ~1e-10.
    """

    n: int
    scores: np.ndarray
    weights: np.ndarray
    last_update_step: np.ndarray = field(default=None)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.last_update_step is None:
            self.last_update_step = np.zeros(self.n, dtype=np.int64)
        else:
            self.last_update_step = np.asarray(self.last_update_step, dtype=np.int64)
        for name in ("scores", "weights", "last_update_step"):
            if getattr(self, name).shape != (self.n,):
                raise ValueError(f"{name} must have shape ({self.n},)")

    def copy(self) -> "SamplerState":
        return SamplerState(
            self.n, self.scores.copy(), self.weights.copy(), self.last_update_step.copy()
        )


def init_state(n: int) -> SamplerState:
    if int(n) != n or n < 1:
        raise ValueError(f"dataset size must be a positive integer, got {n!r}")
    n = int(n)
    fill = np.full(n, 1.0 / n)
    return SamplerState(n, fill.copy(), fill.copy(), np.zeros(n, dtype=np.int64))


def _check_id(state: SamplerState, idx) -> int:
    if not (0 <= idx < state.n):
        raise ValueError(f"sample id {idx} out of range [0, {state.n})")
    return int(idx)


def update_sample(
    state: SamplerState, idx: int, loss: float, betas: BetaParams, step: int = 0
) -> tuple[float, float]:
    """Apply one two-EMA update to sample ``idx``; returns ``(w_new, s_new)``.

    The weight reads the score *before* it is overwritten.
    """
    idx = _check_id(state, idx)
    loss = float(loss)
    if not math.isfinite(loss):
        raise NumericError(f"non-finite loss {loss!r} for sample {idx}")
    if loss < 0:
        raise ValueError(f"loss must be non-negative, got {loss!r} for sample {idx}")
    s_old = state.scores[idx]
    w_new = betas.beta1 * s_old + (1.0 - betas.beta1) * loss
    s_new = betas.beta2 * s_old + (1.0 - betas.beta2) * loss
    state.weights[idx] = w_new
    state.scores[idx] = s_new
    state.last_update_step[idx] = step
    return float(w_new), float(s_new)


def _validate_batch(state: SamplerState, ids, losses) -> tuple[np.ndarray, np.ndarray]:
    ids = np.asarray(ids, dtype=np.int64)
    losses = np.asarray(losses, dtype=np.float64)
    if ids.shape != losses.shape or ids.ndim != 1:
        raise ValueError("ids and losses must be 1-d arrays of equal length")
    if ids.size and (ids.min() < 0 or ids.max() >= state.n):
        raise ValueError(f"sample ids out of range [0, {state.n})")
    bad = ~np.isfinite(losses)
    if bad.any():
        raise NumericError(f"non-finite loss for sample {int(ids[np.argmax(bad)])}")
    if (losses < 0).any():
        raise ValueError(f"negative loss for sample {int(ids[np.argmax(losses < 0)])}")
    return ids, losses


def update_samples(
    state: SamplerState, ids, losses, betas: BetaParams, step: int = 0
) -> None:
    """Vectorized :func:`update_sample` over a meta-batch (ids must be distinct)."""
    ids, losses = _validate_batch(state, ids, losses)
    s_old = state.scores[ids]
    state.weights[ids] = betas.beta1 * s_old + (1.0 - betas.beta1) * losses
    state.scores[ids] = betas.beta2 * s_old + (1.0 - betas.beta2) * losses
    state.last_update_step[ids] = step


def set_current_losses(state: SamplerState, ids, losses, step: int = 0) -> None:
    """Loss-proportional scheme: the weight *is* the latest loss."""
    ids, losses = _validate_batch(state, ids, losses)
    state.weights[ids] = losses
    state.scores[ids] = losses
    state.last_update_step[ids] = step


def probability_snapshot(
    state: SamplerState, ids, floor: float = DEFAULT_FLOOR
) -> np.ndarray:
    """Normalized selection probabilities over ``ids``, each weight floored at ``floor``."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("probability snapshot needs at least one id")
    if not floor > 0:
        raise ValueError(f"floor must be positive, got {floor!r}")
    w = np.maximum(state.weights[ids], floor)
    return w / w.sum()
