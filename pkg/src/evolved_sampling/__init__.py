"""Evolved Sampling (ES) and ES with pruning (ESWP) for dynamic data selection."""

from evolved_sampling.errors import FormatError, NumericError
from evolved_sampling.sampler import (
    BetaParams,
    SamplerState,
    Strategy,
    StrategyKind,
    init_state,
    probability_snapshot,
    update_sample,
    update_samples,
)
from evolved_sampling.selection import (
    AnnealWindow,
    PruneConfig,
    annealing_active,
    prune_epoch,
    select_minibatch,
    weighted_sample_without_replacement,
)

__all__ = [
    "AnnealWindow",
    "BetaParams",
    "FormatError",
    "NumericError",
    "PruneConfig",
    "SamplerState",
    "Strategy",
    "StrategyKind",
    "annealing_active",
    "init_state",
    "probability_snapshot",
    "prune_epoch",
    "select_minibatch",
    "update_sample",
    "update_samples",
    "weighted_sample_without_replacement",
]

__version__ = "0.1.0"
