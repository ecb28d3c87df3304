"""Desk-scale comparison of Uniform, ES and ESWP on a 10-class logistic regression.

Uses MNIST when ``ESWP_MNIST_DIR`` points at the four standard IDX files,
otherwise a seeded 10-class Gaussian mixture of the same train/test sizes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from evolved_sampling.data import IndexedDataset, gen_gaussian_mixture, load_idx, split
from evolved_sampling.models import ModelSpec
from evolved_sampling.optim import SgdConfig
from evolved_sampling.sampler import StrategyKind
from evolved_sampling.trainer import RunMetrics, TrainConfig, run_training

MNIST_FILES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)
N_TRAIN, N_TEST = 10_000, 2_000
DESK_STRATEGIES = (StrategyKind.UNIFORM, StrategyKind.ES, StrategyKind.ESWP)


def desk_datasets(mnist_dir: str | None = None) -> tuple[IndexedDataset, IndexedDataset, str]:
    """``(train, test, source)`` where source is ``"mnist"`` or ``"gaussian_mixture"``."""
    mnist_dir = mnist_dir if mnist_dir is not None else os.environ.get("ESWP_MNIST_DIR", "")
    if mnist_dir:
        root = Path(mnist_dir)
        paths = [root / name for name in MNIST_FILES]
        if all(p.exists() for p in paths):
            train = load_idx(paths[0], paths[1], limit=N_TRAIN)
            test = load_idx(paths[2], paths[3], limit=N_TEST)
            return train, test, "mnist"
    full = gen_gaussian_mixture(N_TRAIN + N_TEST, d=50, classes=10, separation=3.0, seed=0)
    train, test = split(full, N_TEST / (N_TRAIN + N_TEST), seed=0)
    return train, test, "gaussian_mixture"


def desk_config(kind: StrategyKind, train: IndexedDataset, seed: int, epochs: int = 20) -> TrainConfig:
    spec = ModelSpec("logistic", train.d, max(train.classes, 2))
    opt = SgdConfig(base_lr=0.05, momentum=0.9, weight_decay=5e-4, schedule="cosine")
    return TrainConfig.for_strategy(kind, spec, epochs=epochs, meta_batch=128, optimizer=opt, seed=seed)


@dataclass
class DeskRun:
    run_id: str
    strategy: str
    config: TrainConfig
    metrics: RunMetrics


def desk_benchmark(train, test, seeds=(0, 1, 2), strategies=DESK_STRATEGIES, epochs: int = 20) -> list[DeskRun]:
    runs = []
    for kind in strategies:
        for seed in seeds:
            cfg = desk_config(kind, train, seed, epochs)
            metrics = run_training(cfg, train, test).metrics
            runs.append(DeskRun(f"{kind.value.lower()}-s{seed}", kind.value, cfg, metrics))
    return runs


def summarize(runs: list[DeskRun]) -> dict[str, dict[str, float]]:
    """Per strategy: mean final accuracy (%) and BP samples relative to Uniform."""
    by_kind: dict[str, list[DeskRun]] = {}
    for run in runs:
        by_kind.setdefault(run.strategy, []).append(run)
    base = by_kind.get(StrategyKind.UNIFORM.value)
    base_bp = sum(r.metrics.bp_samples for r in base) / len(base) if base else float("nan")
    out = {}
    for kind, group in by_kind.items():
        acc = 100.0 * sum(r.metrics.final_test_acc for r in group) / len(group)
        bp = sum(r.metrics.bp_samples for r in group) / len(group)
        out[kind] = {"accuracy": acc, "bp_ratio": bp / base_bp, "bp_samples": bp}
    return out
