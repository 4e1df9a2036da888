"""Dataset ingestion, synthetic generators, and seeded one-at-a-time
sample streams.

All generators and streams are pure functions of their arguments and
seed: the same (dataset, seed, policy) triple always yields the same
observation sequence. Datasets are immutable after load; a stream is a
single-consumer iterator.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, UsageError

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049

POLICIES = ("replacement", "epoch", "as-is")


@dataclass
class Dataset:
    """Feature vectors (N, d) or images (N, H, W), with optional labels."""

    samples: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape[0] != self.samples.shape[0]:
                raise DataError("labels do not align one-to-one with samples")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def feature_shape(self) -> tuple:
        return self.samples.shape[1:]

    @property
    def class_set(self) -> tuple:
        if self.labels is None:
            return ()
        return tuple(sorted(set(self.labels.tolist())))


def _coerce_labels(raw: list):
    try:
        return np.array([int(v) for v in raw])
    except (TypeError, ValueError):
        return np.array(raw, dtype=object)


def load_csv(path, label_column: str | None = None) -> Dataset:
    """Parse a CSV of numeric features with an optional header row and an
    optional categorical label column. A file with a header but no data
    rows loads as an empty dataset."""
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = None
    if any(not _is_float(cell) for cell in rows[0]):
        header = [cell.strip() for cell in rows[0]]
        rows = rows[1:]
    if label_column is not None:
        if header is None:
            raise DataError(f"{path}: label column {label_column!r} requires a header row")
        if label_column not in header:
            raise DataError(f"{path}: missing label column {label_column!r}")
        label_idx = header.index(label_column)
    else:
        label_idx = None
    width = len(header) if header is not None else len(rows[0])
    features = []
    labels = []
    for lineno, row in enumerate(rows, start=2 if header is not None else 1):
        if len(row) != width:
            raise DataError(f"{path}: row {lineno}: expected {width} fields, got {len(row)}")
        try:
            feats = [float(cell) for i, cell in enumerate(row) if i != label_idx]
        except ValueError as exc:
            raise DataError(f"{path}: row {lineno}: non-numeric feature ({exc})") from None
        features.append(feats)
        if label_idx is not None:
            labels.append(row[label_idx].strip())
    n_feat = width - (1 if label_idx is not None else 0)
    samples = np.array(features, dtype=np.float64).reshape(len(features), n_feat)
    return Dataset(samples, _coerce_labels(labels) if label_idx is not None else None)


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def save_csv(dataset: Dataset, path) -> None:
    """Write a dataset with header f0..f{d-1}[,label]; floats use their
    shortest round-trip representation, so load_csv(save_csv(x)) == x."""
    samples = dataset.samples.reshape(len(dataset), -1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = [f"f{i}" for i in range(samples.shape[1])]
        if dataset.labels is not None:
            header.append("label")
        writer.writerow(header)
        for i in range(len(dataset)):
            row = [repr(float(v)) for v in samples[i]]
            if dataset.labels is not None:
                row.append(str(dataset.labels[i]))
            writer.writerow(row)


def _read_be32(fh, path) -> int:
    data = fh.read(4)
    if len(data) != 4:
        raise DataError(f"{path}: truncated header")
    return struct.unpack(">i", data)[0]


def load_idx(images_path, labels_path) -> Dataset:
    """Load an image/label pair in the big-endian IDX encoding; pixel
    values are scaled to [0, 1] as value/255."""
    with open(images_path, "rb") as fh:
        magic = _read_be32(fh, images_path)
        if magic != IDX_IMAGE_MAGIC:
            raise DataError(f"{images_path}: bad magic {magic} (expected {IDX_IMAGE_MAGIC})")
        count = _read_be32(fh, images_path)
        rows = _read_be32(fh, images_path)
        cols = _read_be32(fh, images_path)
        raw = fh.read(count * rows * cols)
        if len(raw) != count * rows * cols:
            raise DataError(f"{images_path}: truncated pixel data")
        images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)
    with open(labels_path, "rb") as fh:
        magic = _read_be32(fh, labels_path)
        if magic != IDX_LABEL_MAGIC:
            raise DataError(f"{labels_path}: bad magic {magic} (expected {IDX_LABEL_MAGIC})")
        n = _read_be32(fh, labels_path)
        if n != count:
            raise DataError(f"{labels_path}: {n} labels for {count} images")
        raw = fh.read(n)
        if len(raw) != n:
            raise DataError(f"{labels_path}: truncated label data")
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    return Dataset(images.astype(np.float64) / 255.0, labels)


def gen_gaussians(seed: int, n_per_class: int, centers, std: float) -> Dataset:
    """Isotropic Gaussian blob per center; label = center index."""
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    rng = np.random.default_rng(seed)
    parts, labels = [], []
    for ci, center in enumerate(centers):
        parts.append(center + std * rng.standard_normal((n_per_class, centers.shape[1])))
        labels.append(np.full(n_per_class, ci))
    return Dataset(np.vstack(parts), np.concatenate(labels))


def gen_circles(seed: int, n_per_class: int, radii, noise_std: float) -> Dataset:
    """Concentric noisy circles in 2D; label = ring index."""
    radii = list(radii)
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise UsageError("radii must be strictly increasing")
    rng = np.random.default_rng(seed)
    parts, labels = [], []
    for ci, radius in enumerate(radii):
        theta = rng.uniform(0.0, 2.0 * np.pi, n_per_class)
        r = radius + noise_std * rng.standard_normal(n_per_class)
        parts.append(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))
        labels.append(np.full(n_per_class, ci))
    return Dataset(np.vstack(parts), np.concatenate(labels))


class SampleStream:
    """Deterministic observation source over a dataset.

    Policies: "replacement" draws i.i.d. uniform indices forever, "epoch"
    reshuffles and replays the dataset each pass forever, "as-is" yields
    the dataset once in stored order. Iterating twice restarts the same
    sequence.
    """

    def __init__(self, dataset: Dataset, seed: int = 0, policy: str = "replacement"):
        if len(dataset) == 0:
            raise UsageError("cannot stream an empty dataset")
        if policy not in POLICIES:
            raise UsageError(f"unknown stream policy {policy!r}; choose from {POLICIES}")
        self.dataset = dataset
        self.seed = seed
        self.policy = policy

    def indices(self):
        n = len(self.dataset)
        if self.policy == "as-is":
            yield from range(n)
            return
        rng = np.random.default_rng(self.seed)
        if self.policy == "epoch":
            while True:
                yield from rng.permutation(n).tolist()
        else:
            while True:
                yield from rng.integers(0, n, size=4096).tolist()

    def __iter__(self):
        samples = self.dataset.samples
        labels = self.dataset.labels
        for i in self.indices():
            yield samples[i], (labels[i] if labels is not None else None)


def stream(dataset: Dataset, seed: int = 0, policy: str = "replacement") -> SampleStream:
    return SampleStream(dataset, seed, policy)
