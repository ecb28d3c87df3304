"""Experiment files: a TOML document describing a dataset, a model and named runs.

Layout (``schema = "eswp-experiment/1"``)::

    schema = "eswp-experiment/1"

    [dataset]            # kind = "gaussian_mixture" | "idx"
    kind = "gaussian_mixture"
    n = 12000
    d = 50
    classes = 10
    separation = 3.0
    seed = 0
    test_fraction = 0.1666666667

    [model]
    kind = "logistic"    # linear | logistic | mlp
    hidden = 0

    [output]
    metrics_csv = "metrics.csv"
    checkpoint_dir = ""  # empty: no checkpoints
    timing = true        # false writes epoch_seconds as nan (byte-stable CSVs)

    [defaults]           # any run key; applies to every run
    epochs = 20

    [runs.es]
    strategy = "ES"
    seeds = [0, 1, 2]

Run keys and their defaults are listed in ``RUN_DEFAULTS``. Unknown keys are
rejected with their dotted name.
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field
from pathlib import Path

from evolved_sampling.data import IndexedDataset, gen_gaussian_mixture, load_idx, split
from evolved_sampling.models import ModelSpec
from evolved_sampling.optim import SgdConfig
from evolved_sampling.sampler import DEFAULT_BETAS, BetaParams, Strategy, StrategyKind
from evolved_sampling.selection import PruneConfig
from evolved_sampling.trainer import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA = "eswp-experiment/1"

DATASET_DEFAULTS = {
    "kind": "gaussian_mixture",
    "n": 12000,
    "d": 50,
    "classes": 10,
    "separation": 3.0,
    "seed": 0,
    "test_fraction": 2000 / 12000,
    "train_images": "",
    "train_labels": "",
    "test_images": "",
    "test_labels": "",
    "train_limit": 0,
    "test_limit": 0,
}
MODEL_DEFAULTS = {"kind": "logistic", "hidden": 0}
OUTPUT_DEFAULTS = {"metrics_csv": "metrics.csv", "checkpoint_dir": "", "timing": True}
RUN_DEFAULTS = {
    "strategy": "Uniform",
    "beta1": None,  # None: strategy default
    "beta2": None,
    "epochs": 20,
    "meta_batch": 128,
    "mini_batch": None,  # None: b_over_B * meta_batch
    "b_over_B": 0.25,
    "prune_ratio": None,  # None: 0.2 for ESWP/RandomPrune, else 0
    "anneal_ratio": None,  # None: 0 for Uniform, else 0.05
    "lr": 0.05,
    "momentum": 0.9,
    "weight_decay": 5e-4,
    "schedule": "cosine",
    "seed": 0,
    "seeds": None,  # list overrides seed
    "floor": 1e-12,
}
SWEEP_AXES = ("beta1", "beta2", "b_over_B", "prune_ratio", "anneal_ratio")


class ConfigError(ValueError):
    """Invalid experiment file or override; the message names the offending key."""


@dataclass
class RunSpec:
    name: str
    run_id: str
    config: TrainConfig


@dataclass
class Experiment:
    dataset: dict
    model: dict
    output: dict
    runs: dict[str, dict]
    source: Path | None = None
    _data: tuple | None = field(default=None, repr=False)

    def load_data(self) -> tuple[IndexedDataset, IndexedDataset]:
        if self._data is None:
            self._data = build_datasets(self.dataset, self.source)
        return self._data

    def model_spec(self, train: IndexedDataset) -> ModelSpec:
        kind = self.model["kind"]
        classes = 1 if kind == "linear" else max(train.classes, 2)
        try:
            return ModelSpec(kind, train.d, classes, int(self.model["hidden"]))
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from None

    def run_specs(self, names=None) -> list[RunSpec]:
        train, _ = self.load_data()
        spec = self.model_spec(train)
        out = []
        for name, settings in self.runs.items():
            if names and name not in names:
                continue
            seeds = settings["seeds"] if settings["seeds"] is not None else [settings["seed"]]
            for seed in seeds:
                cfg = build_train_config(settings, spec, seed, where=f"runs.{name}")
                run_id = name if len(seeds) == 1 else f"{name}-s{seed}"
                out.append(RunSpec(name, run_id, cfg))
        return out


def _check_keys(section: dict, allowed, where: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {where}.{key}" if where else f"unknown key {key}")


def _merged(defaults: dict, given: dict, where: str) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"{where} must be a table")
    _check_keys(given, defaults, where)
    out = dict(defaults)
    out.update(given)
    return out


def parse_override(text: str) -> tuple[list[str], object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key.split("."), value


def apply_overrides(doc: dict, overrides) -> dict:
    """``seed=7`` sets a run key on defaults *and* every run; dotted keys address a table."""
    doc = copy.deepcopy(doc)
    for text in overrides or ():
        path, value = parse_override(text)
        if len(path) == 1:
            key = path[0]
            if key not in RUN_DEFAULTS:
                raise ConfigError(f"unknown key {key}")
            doc.setdefault("defaults", {})[key] = value
            for run in doc.get("runs", {}).values():
                run[key] = value
            continue
        node = doc
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {text!r} does not address a table")
        node[path[-1]] = value
    return doc


def parse_experiment(doc: dict, source: Path | None = None) -> Experiment:
    _check_keys(doc, ("schema", "dataset", "model", "output", "defaults", "runs"), "")
    schema = doc.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ConfigError(f"schema: unsupported {schema!r} (expected {SCHEMA!r})")
    dataset = _merged(DATASET_DEFAULTS, doc.get("dataset", {}), "dataset")
    model = _merged(MODEL_DEFAULTS, doc.get("model", {}), "model")
    output = _merged(OUTPUT_DEFAULTS, doc.get("output", {}), "output")
    defaults = _merged(RUN_DEFAULTS, doc.get("defaults", {}), "defaults")
    runs_doc = doc.get("runs", {})
    if not isinstance(runs_doc, dict):
        raise ConfigError("runs must be a table of named runs")
    if not runs_doc:
        runs_doc = {"default": {}}
    runs = {name: _merged(defaults, settings, f"runs.{name}") for name, settings in runs_doc.items()}
    if dataset["kind"] not in ("gaussian_mixture", "idx"):
        raise ConfigError(f"dataset.kind: unknown {dataset['kind']!r}")
    return Experiment(dataset, model, output, runs, source)


def load_experiment(path, overrides=()) -> Experiment:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_experiment(apply_overrides(doc, overrides), path)


def build_train_config(settings: dict, spec: ModelSpec, seed: int, where: str = "run") -> TrainConfig:
    try:
        kind = StrategyKind.parse(settings["strategy"])
    except ValueError as exc:
        raise ConfigError(f"{where}.strategy: {exc}") from None
    default_betas = DEFAULT_BETAS.get(kind, BetaParams(0.0, 0.0))
    b1 = settings["beta1"] if settings["beta1"] is not None else default_betas.beta1
    b2 = settings["beta2"] if settings["beta2"] is not None else default_betas.beta2
    meta = int(settings["meta_batch"])
    mini = settings["mini_batch"]
    if mini is None:
        mini = max(1, int(round(settings["b_over_B"] * meta)))
    prune = settings["prune_ratio"]
    if prune is None:
        prune = 0.2 if kind in (StrategyKind.ESWP, StrategyKind.RANDOM_PRUNE) else 0.0
    anneal = settings["anneal_ratio"]
    if anneal is None:
        anneal = 0.0 if kind is StrategyKind.UNIFORM else 0.05
    step = "strategy"
    try:
        strategy = Strategy(kind, BetaParams(float(b1), float(b2)))
        step = "prune_ratio"
        prune_cfg = PruneConfig(float(prune))
        step = "optimizer (lr/momentum/weight_decay/schedule)"
        opt = SgdConfig(
            float(settings["lr"]),
            float(settings["momentum"]),
            float(settings["weight_decay"]),
            str(settings["schedule"]),
        )
        step = "epochs/meta_batch/mini_batch/anneal_ratio/floor"
        return TrainConfig(
            strategy=strategy,
            model=spec,
            epochs=int(settings["epochs"]),
            meta_batch=meta,
            mini_batch=int(mini),
            prune=prune_cfg,
            anneal_ratio=float(anneal),
            optimizer=opt,
            seed=int(seed),
            floor=float(settings["floor"]),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where} ({step}): {exc}") from None


def build_datasets(ds: dict, source: Path | None = None) -> tuple[IndexedDataset, IndexedDataset]:
    base = source.parent if source is not None else Path(".")
    try:
        if ds["kind"] == "idx":
            paths = {k: ds[k] for k in ("train_images", "train_labels", "test_images", "test_labels")}
            for key, value in paths.items():
                if not value:
                    raise ConfigError(f"dataset.{key} is required for kind='idx'")
            resolve = lambda p: Path(p) if Path(p).is_absolute() else base / p  # noqa: E731
            train = load_idx(resolve(paths["train_images"]), resolve(paths["train_labels"]),
                             ds["train_limit"] or None)
            test = load_idx(resolve(paths["test_images"]), resolve(paths["test_labels"]),
                            ds["test_limit"] or None)
            return train, test
        full = gen_gaussian_mixture(
            int(ds["n"]), int(ds["d"]), int(ds["classes"]), float(ds["separation"]), int(ds["seed"])
        )
        return split(full, float(ds["test_fraction"]), int(ds["seed"]))
    except ConfigError:
        raise
    except (ValueError, TypeError, OSError) as exc:
        raise ConfigError(f"dataset: {exc}") from None


def sweep_settings(settings: dict, axis: str, value: float) -> dict:
    """Copy of one run's settings with the sweep axis set to ``value``."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r} (expected one of {', '.join(SWEEP_AXES)})")
    out = dict(settings)
    if axis in ("beta1", "beta2") and StrategyKind.parse(out["strategy"]) is StrategyKind.NONDIF:
        out["beta1"] = out["beta2"] = value
    elif axis == "b_over_B":
        out["b_over_B"] = value
        out["mini_batch"] = None
    else:
        out[axis] = value
    return out
