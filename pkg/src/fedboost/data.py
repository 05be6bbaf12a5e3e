"""Dataset ingestion, train/test and IID splitting, synthetic generators.

CSV contract: a header row, numeric feature columns, the last column is the
label. Raw label strings map to dense class ids by lexicographic order, so
every node ingesting the same label set agrees on the mapping.
"""
from __future__ import annotations

import csv

import numpy as np

from .core import DatasetShard, validate_shard
from .errors import EmptyFile, NonNumericFeature, RaggedRow, ShapeMismatch, TooManyParts


def ingest_csv(path) -> DatasetShard:
    with open(path, newline="", encoding="utf-8") as f:
        rows = [row for row in csv.reader(f) if row]
    if len(rows) < 2:
        raise EmptyFile(f"{path}: need a header row and at least one data row")
    width = len(rows[0])
    if width < 2:
        raise ShapeMismatch(f"{path}: need at least one feature column plus the label")

    features = np.empty((len(rows) - 1, width - 1), dtype=np.float64)
    raw_labels: list[str] = []
    for i, row in enumerate(rows[1:]):
        if len(row) != width:
            raise RaggedRow(i + 2)  # 1-based physical line, header is line 1
        for j, cell in enumerate(row[:-1]):
            try:
                features[i, j] = float(cell)
            except ValueError:
                raise NonNumericFeature(i, j, cell) from None
        raw_labels.append(row[-1])

    classes = sorted(set(raw_labels))
    ids = {label: k for k, label in enumerate(classes)}
    labels = np.array([ids[label] for label in raw_labels], dtype=np.int64)
    shard = DatasetShard(features, labels, len(classes))
    validate_shard(shard)
    return shard


def split_train_test(shard: DatasetShard, test_fraction: float, seed: int):
    """Deterministic held-out split; both sides keep the parent class count."""
    n = shard.shard_size
    n_test = min(max(int(round(n * test_fraction)), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    make = lambda idx: DatasetShard(shard.features[idx], shard.labels[idx], shard.num_classes)
    return make(train_idx), make(test_idx)


def split_iid(shard: DatasetShard, n: int, seed: int) -> list[DatasetShard]:
    """Random partition into n shards with sizes differing by at most one.

    n=1 returns the shard itself, so a one-collaborator federation trains on
    exactly the rows (and row order) a sequential run would see.
    """
    if n < 1:
        raise TooManyParts(f"cannot split into {n} parts")
    if n > shard.shard_size:
        raise TooManyParts(f"cannot split {shard.shard_size} samples into {n} parts")
    if n == 1:
        return [shard]
    perm = np.random.default_rng(seed).permutation(shard.shard_size)
    base, extra = divmod(shard.shard_size, n)
    parts = []
    start = 0
    for i in range(n):
        size = base + (1 if i < extra else 0)
        idx = perm[start:start + size]
        parts.append(DatasetShard(shard.features[idx], shard.labels[idx], shard.num_classes))
        start += size
    return parts


# --- synthetic datasets ----------------------------------------------------------


def make_blobs(
    n_samples: int,
    num_classes: int,
    n_features: int,
    *,
    separation: float = 3.0,
    spread: float = 1.0,
    seed: int = 0,
) -> DatasetShard:
    """Balanced gaussian blobs, one per class."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, separation, size=(num_classes, n_features))
    labels = rng.permutation(np.arange(n_samples) % num_classes)
    features = centers[labels] + rng.normal(0.0, spread, size=(n_samples, n_features))
    return DatasetShard(features, labels, num_classes)


def make_vowel_like(n_samples: int = 1000, seed: int = 0) -> DatasetShard:
    """A 10-class task with overlapping clusters; learnable but not trivial."""
    return make_blobs(n_samples, 10, 10, separation=2.0, spread=1.0, seed=seed)


def make_xor(n_per_cluster: int = 50, noise: float = 0.3, seed: int = 0) -> DatasetShard:
    """Four 2-D clusters at (+-1, +-1); label = sign(x) XOR sign(y)."""
    rng = np.random.default_rng(seed)
    points = []
    labels = []
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            points.append(rng.normal(0.0, noise, size=(n_per_cluster, 2)) + [sx, sy])
            labels.append(np.full(n_per_cluster, int(sx * sy < 0), dtype=np.int64))
    return DatasetShard(np.vstack(points), np.concatenate(labels), 2)


def make_separable_1d(n_samples: int = 100, gap: float = 0.5, seed: int = 0) -> DatasetShard:
    """1-D data with class 0 strictly below 0 and class 1 at or above `gap`."""
    rng = np.random.default_rng(seed)
    half = n_samples // 2
    neg = -gap - rng.uniform(0.0, 2.0, size=half)
    pos = gap + rng.uniform(0.0, 2.0, size=n_samples - half)
    features = np.concatenate([neg, pos])[:, None]
    labels = np.concatenate([np.zeros(half, np.int64), np.ones(n_samples - half, np.int64)])
    perm = rng.permutation(n_samples)
    return DatasetShard(features[perm], labels[perm], 2)
