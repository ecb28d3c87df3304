"""Datasets with stable integer sample ids: IDX ingestion and seeded synthetic tasks."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from evolved_sampling.errors import FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class IndexedDataset:
    """Immutable ``n x d`` features with labels; sample ``i`` is row ``i``.

    ``origin`` maps each row back to its id in the dataset this one was split
    from (identity for freshly built datasets).
    """

    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    classes: int = 1
    origin: np.ndarray = field(default=None)

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if X.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if self.classes > 1 and y.size and (y.min() < 0 or y.max() >= self.classes):
            raise ValueError(f"labels must lie in [0, {self.classes})")
        origin = np.arange(X.shape[0]) if self.origin is None else np.asarray(self.origin)
        for arr in (X, y, origin):
            arr.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "origin", origin)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.n)

    def subset(self, rows, name: str | None = None) -> "IndexedDataset":
        """Re-indexed copy holding ``rows``; origin ids are carried through."""
        rows = np.asarray(rows, dtype=np.int64)
        return IndexedDataset(
            self.features[rows],
            self.labels[rows],
            name=name or self.name,
            classes=self.classes,
            origin=self.origin[rows],
        )


def _read_header(raw: bytes, path, magic: int, ndims: int) -> tuple[int, ...]:
    size = 4 + 4 * ndims
    if len(raw) < size:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    observed = struct.unpack(">I", raw[:4])[0]
    if observed != magic:
        raise FormatError(
            f"{path}: bad magic 0x{observed:08x} (expected 0x{magic:08x})"
        )
    return struct.unpack(f">{ndims}I", raw[4:size])


def load_idx(images_path, labels_path, limit: int | None = None) -> IndexedDataset:
    """Load an IDX image/label pair (MNIST layout), scaling pixels to [0, 1]."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    img_raw = images_path.read_bytes()
    lab_raw = labels_path.read_bytes()
    count, rows, cols = _read_header(img_raw, images_path, IDX_IMAGES_MAGIC, 3)
    (lab_count,) = _read_header(lab_raw, labels_path, IDX_LABELS_MAGIC, 1)
    if count != lab_count:
        raise FormatError(f"{count} images but {lab_count} labels")
    d = rows * cols
    if len(img_raw) < 16 + count * d:
        raise FormatError(f"{images_path}: truncated pixel data")
    if len(lab_raw) < 8 + count:
        raise FormatError(f"{labels_path}: truncated label data")
    take = count if limit is None else min(int(limit), count)
    pixels = np.frombuffer(img_raw, dtype=np.uint8, count=take * d, offset=16)
    labels = np.frombuffer(lab_raw, dtype=np.uint8, count=take, offset=8).astype(np.int64)
    features = pixels.reshape(take, d).astype(np.float64) / 255.0
    classes = max(int(labels.max()) + 1, 10) if take else 10
    return IndexedDataset(features, labels, name=images_path.stem, classes=classes)


def write_idx(dataset: IndexedDataset, images_path, labels_path, shape=None) -> None:
    """Write features (quantized to bytes) and labels as an IDX pair."""
    n, d = dataset.features.shape
    rows, cols = shape or (1, d)
    if rows * cols != d:
        raise ValueError(f"image shape {rows}x{cols} does not match d={d}")
    pixels = np.clip(np.rint(dataset.features * 255.0), 0, 255).astype(np.uint8)
    labels = np.asarray(dataset.labels).astype(np.uint8)
    Path(images_path).write_bytes(
        struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + pixels.tobytes()
    )
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, n) + labels.tobytes())


def gen_gaussian_mixture(
    n: int, d: int, classes: int, separation: float, seed: int
) -> IndexedDataset:
    """Balanced isotropic Gaussian classes with means on a sphere of radius ``separation``."""
    if not (n >= classes >= 2) or d < 1:
        raise ValueError(f"need n >= classes >= 2 and d >= 1, got n={n}, classes={classes}, d={d}")
    if separation < 0:
        raise ValueError("separation must be non-negative")
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((classes, d))
    means = separation * directions / np.linalg.norm(directions, axis=1, keepdims=True)
    labels = rng.permutation(np.arange(n) % classes)
    features = means[labels] + rng.standard_normal((n, d))
    return IndexedDataset(
        features, labels, name=f"gmm-{classes}c-{d}d", classes=classes
    )


def split(dataset: IndexedDataset, test_fraction: float, seed: int):
    """Seeded shuffle then split into ``(train, test)``; rows are re-indexed from 0."""
    if not (0.0 < test_fraction < 1.0):
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction!r}")
    order = np.random.default_rng(seed).permutation(dataset.n)
    n_test = int(round(test_fraction * dataset.n))
    test_rows, train_rows = order[:n_test], order[n_test:]
    return (
        dataset.subset(train_rows, f"{dataset.name}-train"),
        dataset.subset(test_rows, f"{dataset.name}-test"),
    )
