"""Training loop for every selection strategy, with metrics and checkpoints.

Per epoch ``e``:

1. If the strategy prunes and ``e`` is outside the annealing window, keep a
   weighted random ``floor((1-r) n)`` subset of the data (uniform subset for
   ``RandomPrune``); otherwise use everything.
2. Shuffle that pool and cut it into meta-batches of ``B`` (the last one may
   be short).
3. For each meta-batch: score it with a forward pass, update the per-sample
   state, then back-propagate either the whole meta-batch (annealing epochs,
   non-selecting strategies) or a mini-batch of ``min(b, |meta|)`` ids drawn
   in proportion to the weights (``Order`` takes the top losses instead).
   One optimizer step per meta-batch.

Mini-batch gradients are plain means over the selected samples; no
importance re-weighting is applied.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import struct
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from evolved_sampling.data import IndexedDataset
from evolved_sampling.errors import FormatError
from evolved_sampling.models import ModelSpec, accuracy, backward, forward_losses, init_params
from evolved_sampling.optim import SgdConfig, lr_at, sgd_step
from evolved_sampling.sampler import (
    DEFAULT_FLOOR,
    SamplerState,
    Strategy,
    StrategyKind,
    init_state,
    set_current_losses,
    update_samples,
)
from evolved_sampling.selection import (
    AnnealWindow,
    PruneConfig,
    annealing_active,
    prune_epoch,
    select_minibatch,
)

METRICS_COLUMNS = (
    "run_id",
    "strategy",
    "epoch",
    "train_loss",
    "test_acc",
    "epoch_seconds",
    "cum_fp_samples",
    "cum_bp_samples",
    "cum_updates",
)


@dataclass(frozen=True)
class TrainConfig:
    strategy: Strategy
    model: ModelSpec
    epochs: int = 20
    meta_batch: int = 128
    mini_batch: int = 32
    prune: PruneConfig = PruneConfig(0.0)
    anneal_ratio: float = 0.05
    optimizer: SgdConfig = SgdConfig()
    seed: int = 0
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be positive, got {self.epochs}")
        if self.meta_batch < 1:
            raise ValueError(f"meta_batch must be positive, got {self.meta_batch}")
        if self.mini_batch < 1:
            raise ValueError(f"mini_batch must be positive, got {self.mini_batch}")
        if self.mini_batch > self.meta_batch:
            raise ValueError(
                f"mini_batch ({self.mini_batch}) must not exceed meta_batch ({self.meta_batch})"
            )
        if not self.floor > 0:
            raise ValueError("floor must be positive")
        AnnealWindow.from_ratio(self.anneal_ratio, self.epochs)

    @classmethod
    def for_strategy(cls, kind, model: ModelSpec, **overrides) -> "TrainConfig":
        """Defaults per strategy: ES betas (0.2, 0.9), ESWP (0.2, 0.8) with r=0.2, b/B=25%."""
        kind = StrategyKind.parse(kind) if not isinstance(kind, StrategyKind) else kind
        betas = overrides.pop("betas", None)
        if "prune" not in overrides and kind in (StrategyKind.ESWP, StrategyKind.RANDOM_PRUNE):
            overrides["prune"] = PruneConfig(0.2)
        if "anneal_ratio" not in overrides and kind is StrategyKind.UNIFORM:
            overrides["anneal_ratio"] = 0.0
        if "mini_batch" not in overrides:
            meta = overrides.get("meta_batch", 128)
            overrides["mini_batch"] = max(1, meta // 4)
        return cls(strategy=Strategy(kind, betas), model=model, **overrides)

    @property
    def anneal(self) -> AnnealWindow:
        return AnnealWindow.from_ratio(self.anneal_ratio, self.epochs)

    def validate_for(self, dataset: IndexedDataset) -> None:
        if self.meta_batch > dataset.n:
            raise ValueError(f"meta_batch ({self.meta_batch}) exceeds dataset size ({dataset.n})")
        if dataset.d != self.model.d:
            raise ValueError(f"model expects d={self.model.d}, dataset has d={dataset.d}")
        if self.model.is_classifier and dataset.classes > self.model.classes:
            raise ValueError(
                f"dataset has {dataset.classes} classes, model only {self.model.classes}"
            )

    def pool_size(self, epoch: int, n: int) -> int:
        if self.strategy.prunes and not annealing_active(epoch, self.anneal):
            return self.prune.retained(n)
        return n

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["strategy"] = {"kind": self.strategy.kind.value, **dataclasses.asdict(self.strategy.betas)}
        return out


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    test_acc: float
    test_loss: float
    epoch_seconds: float
    cum_fp_samples: int
    cum_bp_samples: int
    cum_updates: int
    annealing: bool
    pool_size: int


@dataclass
class RunMetrics:
    records: list[EpochRecord] = field(default_factory=list)

    @property
    def fp_samples(self) -> int:
        return self.records[-1].cum_fp_samples if self.records else 0

    @property
    def bp_samples(self) -> int:
        return self.records[-1].cum_bp_samples if self.records else 0

    @property
    def updates(self) -> int:
        return self.records[-1].cum_updates if self.records else 0

    @property
    def final_test_acc(self) -> float:
        return self.records[-1].test_acc if self.records else math.nan

    @property
    def total_seconds(self) -> float:
        return float(sum(r.epoch_seconds for r in self.records))

    def csv_rows(self, run_id: str, strategy: str, timing: bool = True) -> list[list[str]]:
        rows = []
        for r in self.records:
            rows.append(
                [
                    run_id,
                    strategy,
                    str(r.epoch),
                    repr(float(r.train_loss)),
                    repr(float(r.test_acc)),
                    repr(float(r.epoch_seconds)) if timing else "nan",
                    str(r.cum_fp_samples),
                    str(r.cum_bp_samples),
                    str(r.cum_updates),
                ]
            )
        return rows


def metrics_csv_text(runs, timing: bool = True) -> str:
    """CSV text for ``[(run_id, strategy_name, RunMetrics), ...]``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    for run_id, strategy, metrics in runs:
        writer.writerows(metrics.csv_rows(run_id, strategy, timing))
    return buf.getvalue()


def write_metrics_csv(path, runs, timing: bool = True) -> None:
    Path(path).write_text(metrics_csv_text(runs, timing), encoding="utf-8", newline="")


@dataclass
class TrainResult:
    metrics: RunMetrics
    params: np.ndarray
    sampler: SamplerState
    selections: list[np.ndarray] | None = None


def evaluate(spec: ModelSpec, params, dataset: IndexedDataset) -> tuple[float, float]:
    """``(accuracy, mean loss)`` over the whole dataset; accuracy is NaN for regression."""
    losses = forward_losses(spec, params, dataset.features, dataset.labels, dataset.ids)
    mean_loss = float(losses.mean()) if losses.size else math.nan
    if not spec.is_classifier:
        return math.nan, mean_loss
    return accuracy(spec, params, dataset.features, dataset.labels), mean_loss


def bp_pass_count(B: int, b: int, b_micro: int) -> tuple[int, int]:
    """Backward passes per update with gradient accumulation: full batch vs selected batch."""
    for name, value in (("B", B), ("b", b), ("b_micro", b_micro)):
        if int(value) != value or value < 1:
            raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return -(-B // b_micro), -(-b // b_micro)


def expected_bp_samples(cfg: TrainConfig, n: int) -> int:
    """Closed-form back-propagated sample count for a full run of ``cfg`` on ``n`` samples."""
    total = 0
    window = cfg.anneal
    for e in range(cfg.epochs):
        pool = cfg.pool_size(e, n)
        if annealing_active(e, window) or not cfg.strategy.selects_minibatch:
            total += pool
            continue
        full, rest = divmod(pool, cfg.meta_batch)
        total += full * cfg.mini_batch + min(cfg.mini_batch, rest)
    return total


def planned_steps(cfg: TrainConfig, n: int) -> int:
    return sum(-(-cfg.pool_size(e, n) // cfg.meta_batch) for e in range(cfg.epochs))


class Trainer:
    """Stateful runner; one :meth:`run_epoch` call per epoch, checkpointable between epochs."""

    def __init__(self, cfg: TrainConfig, train: IndexedDataset, test: IndexedDataset | None = None,
                 record_selections: bool = False):
        cfg.validate_for(train)
        self.cfg = cfg
        self.train = train
        self.test = test if test is not None else train
        init_seq, train_seq = np.random.SeedSequence(cfg.seed).spawn(2)
        self.params = init_params(cfg.model, np.random.Generator(np.random.PCG64(init_seq)))
        self.rng = np.random.Generator(np.random.PCG64(train_seq))
        self.velocity = np.zeros_like(self.params)
        self.sampler = init_state(train.n)
        self.epoch = 0
        self.step = 0
        self.fp_samples = 0
        self.bp_samples = 0
        self.updates = 0
        self.metrics = RunMetrics()
        self.total_steps = planned_steps(cfg, train.n)
        self.selections: list[np.ndarray] | None = [] if record_selections else None

    @property
    def done(self) -> bool:
        return self.epoch >= self.cfg.epochs

    def _score(self, meta: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        X, y = self.train.features[meta], self.train.labels[meta]
        losses = forward_losses(cfg.model, self.params, X, y, meta)
        self.fp_samples += meta.size
        kind = cfg.strategy.kind
        if kind in (StrategyKind.LOSS, StrategyKind.ORDER):
            set_current_losses(self.sampler, meta, losses, self.step)
        elif cfg.strategy.uses_sampler:
            update_samples(self.sampler, meta, losses, cfg.strategy.betas, self.step)
        return losses

    def _choose(self, meta: np.ndarray, losses: np.ndarray, annealing: bool) -> np.ndarray:
        cfg = self.cfg
        if annealing or not cfg.strategy.selects_minibatch:
            return meta
        size = min(cfg.mini_batch, meta.size)
        if cfg.strategy.kind is StrategyKind.ORDER:
            top = np.lexsort((meta, -losses))[:size]
            return meta[top]
        return select_minibatch(self.sampler, meta, size, self.rng, cfg.floor)

    def run_epoch(self, on_step: Callable | None = None) -> EpochRecord:
        if self.done:
            raise RuntimeError("training already finished")
        cfg = self.cfg
        e = self.epoch
        annealing = annealing_active(e, cfg.anneal)
        started = time.perf_counter()
        ids = self.train.ids
        if cfg.strategy.prunes and not annealing:
            uniform = cfg.strategy.kind is StrategyKind.RANDOM_PRUNE
            pool = prune_epoch(self.sampler, ids, cfg.prune, self.rng, cfg.floor, uniform=uniform)
        else:
            pool = ids
        order = self.rng.permutation(pool)
        loss_sum = 0.0
        for start in range(0, order.size, cfg.meta_batch):
            meta = order[start : start + cfg.meta_batch]
            losses = self._score(meta)
            loss_sum += float(losses.sum())
            batch = self._choose(meta, losses, annealing)
            if self.selections is not None:
                self.selections.append(batch.copy())
            grad = backward(
                cfg.model, self.params, self.train.features[batch], self.train.labels[batch], batch
            )
            self.bp_samples += batch.size
            lr = lr_at(cfg.optimizer, self.step, self.total_steps)
            self.params, self.velocity = sgd_step(self.params, grad, self.velocity, cfg.optimizer, lr)
            self.step += 1
            self.updates += 1
            if on_step is not None:
                on_step(self, meta, batch)
        seconds = time.perf_counter() - started
        test_acc, test_loss = evaluate(cfg.model, self.params, self.test)
        record = EpochRecord(
            epoch=e,
            train_loss=loss_sum / order.size,
            test_acc=test_acc,
            test_loss=test_loss,
            epoch_seconds=seconds,
            cum_fp_samples=self.fp_samples,
            cum_bp_samples=self.bp_samples,
            cum_updates=self.updates,
            annealing=annealing,
            pool_size=int(order.size),
        )
        self.metrics.records.append(record)
        self.epoch += 1
        return record

    def run(self, until_epoch: int | None = None, on_step: Callable | None = None) -> TrainResult:
        stop = self.cfg.epochs if until_epoch is None else min(until_epoch, self.cfg.epochs)
        while self.epoch < stop:
            self.run_epoch(on_step)
        return TrainResult(self.metrics, self.params.copy(), self.sampler.copy(), self.selections)

    # -- checkpoints ---------------------------------------------------------

    def save_checkpoint(self, path) -> None:
        Path(path).write_bytes(encode_checkpoint(self))

    @classmethod
    def from_checkpoint(cls, path, cfg: TrainConfig, train: IndexedDataset,
                        test: IndexedDataset | None = None) -> "Trainer":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"no checkpoint at {path}")
        trainer = cls(cfg, train, test)
        decode_checkpoint(path.read_bytes(), trainer)
        return trainer


def run_training(cfg: TrainConfig, train: IndexedDataset, test: IndexedDataset | None = None,
                 record_selections: bool = False, on_step: Callable | None = None) -> TrainResult:
    return Trainer(cfg, train, test, record_selections).run(on_step=on_step)


# Checkpoint container:
#   b"ESWP1" | u32 section count | sections | u32 crc32 of all preceding bytes
#   section = u16 name length | name (utf-8) | u64 payload length | payload
# Arrays are little-endian float64/int64; "meta" is sorted-key JSON.
CHECKPOINT_MAGIC = b"ESWP1"


def _section(name: str, payload: bytes) -> bytes:
    raw = name.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw + struct.pack("<Q", len(payload)) + payload


def encode_checkpoint(trainer: Trainer) -> bytes:
    meta = {
        "config": trainer.cfg.to_dict(),
        "epoch": trainer.epoch,
        "step": trainer.step,
        "fp_samples": trainer.fp_samples,
        "bp_samples": trainer.bp_samples,
        "updates": trainer.updates,
        "rng": trainer.rng.bit_generator.state,
        "history": [dataclasses.asdict(r) for r in trainer.metrics.records],
    }
    sections = [
        ("meta", json.dumps(meta, sort_keys=True).encode("utf-8")),
        ("params", trainer.params.astype("<f8").tobytes()),
        ("velocity", trainer.velocity.astype("<f8").tobytes()),
        ("scores", trainer.sampler.scores.astype("<f8").tobytes()),
        ("weights", trainer.sampler.weights.astype("<f8").tobytes()),
        ("last_update_step", trainer.sampler.last_update_step.astype("<i8").tobytes()),
    ]
    body = CHECKPOINT_MAGIC + struct.pack("<I", len(sections))
    body += b"".join(_section(name, payload) for name, payload in sections)
    return body + struct.pack("<I", zlib.crc32(body))


def _parse_sections(blob: bytes) -> dict[str, bytes]:
    if blob[:4] == CHECKPOINT_MAGIC[:4] and blob[:5] != CHECKPOINT_MAGIC:
        raise FormatError(f"unsupported checkpoint version {blob[4:5]!r}")
    if blob[:5] != CHECKPOINT_MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    if len(blob) < 13:
        raise FormatError("checkpoint truncated")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise FormatError("checkpoint corrupt (checksum mismatch)")
    (count,) = struct.unpack_from("<I", body, 5)
    pos = 9
    sections = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = body[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (size,) = struct.unpack_from("<Q", body, pos)
            pos += 8
            if pos + size > len(body):
                raise FormatError(f"checkpoint section {name!r} truncated")
            sections[name] = body[pos : pos + size]
            pos += size
    except struct.error as exc:
        raise FormatError(f"checkpoint truncated: {exc}") from None
    return sections


def _array(sections, name, dtype, size) -> np.ndarray:
    if name not in sections:
        raise FormatError(f"checkpoint lacks section {name!r}")
    arr = np.frombuffer(sections[name], dtype=dtype).astype(dtype[1:]).copy()
    if arr.size != size:
        raise FormatError(f"checkpoint section {name!r} has {arr.size} entries, expected {size}")
    return arr


def decode_checkpoint(blob: bytes, trainer: Trainer) -> None:
    """Restore ``trainer`` in place from checkpoint bytes written for the same config."""
    sections = _parse_sections(blob)
    try:
        meta = json.loads(sections["meta"].decode("utf-8"))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"checkpoint metadata unreadable: {exc}") from None
    if meta["config"] != json.loads(json.dumps(trainer.cfg.to_dict())):
        raise ValueError("checkpoint was written for a different training configuration")
    n = trainer.train.n
    trainer.params = _array(sections, "params", "<f8", trainer.params.size)
    trainer.velocity = _array(sections, "velocity", "<f8", trainer.params.size)
    trainer.sampler = SamplerState(
        n,
        _array(sections, "scores", "<f8", n),
        _array(sections, "weights", "<f8", n),
        _array(sections, "last_update_step", "<i8", n),
    )
    trainer.epoch = meta["epoch"]
    trainer.step = meta["step"]
    trainer.fp_samples = meta["fp_samples"]
    trainer.bp_samples = meta["bp_samples"]
    trainer.updates = meta["updates"]
    trainer.rng.bit_generator.state = meta["rng"]
    trainer.metrics = RunMetrics([EpochRecord(**r) for r in meta["history"]])
