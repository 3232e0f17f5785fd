"""Dataset loading (IDX and CSV), normalization, and stratified splitting."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Raised when an IDX file is malformed (bad magic, truncation, count mismatch)."""


class CsvFormatError(ValueError):
    """Raised when a CSV table is malformed (ragged row, non-numeric cell, empty file)."""


@dataclass
class Dataset:
    """Labeled feature vectors.

    features: (n, H) float64 matrix, labels: length-n int64 vector with values
    in {0..class_count-1}. Label ids produced by ``load_csv`` keep their
    original names in ``label_names``.
    """

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    label_names: list[str] | None = field(default=None)

    def __post_init__(self) -> None:
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels disagree on sample count")
        if self.features.shape[0] < 1:
            raise ValueError("dataset must contain at least one sample")
        if not np.isfinite(self.features).all():
            raise ValueError("features contain non-finite entries")
        if self.class_count < 1:
            raise ValueError("class_count must be at least 1")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError("labels must lie in {0..class_count-1}")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices],
                       self.class_count, self.label_names)


@dataclass(frozen=True)
class NormStats:
    """Per-feature affine normalization: x -> (x - offset) / scale."""

    mode: str
    offset: np.ndarray
    scale: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.offset) / self.scale

    def invert(self, X: np.ndarray) -> np.ndarray:
        return X * self.scale + self.offset


@dataclass(frozen=True)
class Split:
    train_indices: np.ndarray
    val_indices: np.ndarray
    holdout_frac: float


def _read_exact(f, n: int, path: str, what: str) -> bytes:
    offset = f.tell()
    buf = f.read(n)
    if len(buf) != n:
        raise IdxFormatError(
            f"{path}: truncated while reading {what} at byte offset {offset} "
            f"(wanted {n} bytes, got {len(buf)})")
    return buf


def _read_idx_header(f, path: str, expected_magic: int, n_dims: int) -> tuple[int, ...]:
    magic = struct.unpack(">I", _read_exact(f, 4, path, "magic"))[0]
    if magic != expected_magic:
        raise IdxFormatError(
            f"{path}: bad magic 0x{magic:08x} at byte offset 0 "
            f"(expected 0x{expected_magic:08x})")
    dims = struct.unpack(f">{n_dims}I", _read_exact(f, 4 * n_dims, path, "dimensions"))
    return dims


def load_idx(image_path: str, label_path: str) -> Dataset:
    """Load an IDX image/label file pair (MNIST distribution format).

    Pixel bytes are mapped to [0, 1] by dividing by 255. Images are
    flattened row-major to length rows*cols feature vectors.
    """
    with open(image_path, "rb") as f:
        count, rows, cols = _read_idx_header(f, str(image_path), IDX_IMAGE_MAGIC, 3)
        raw = _read_exact(f, count * rows * cols, str(image_path), "pixel data")
    images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)

    with open(label_path, "rb") as f:
        (label_count,) = _read_idx_header(f, str(label_path), IDX_LABEL_MAGIC, 1)
        raw = _read_exact(f, label_count, str(label_path), "label data")
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    if label_count != count:
        raise IdxFormatError(
            f"{image_path} has {count} images but {label_path} has "
            f"{label_count} labels")
    class_count = int(labels.max()) + 1 if labels.size else 0
    if class_count < 2:
        raise ValueError("dataset must contain at least 2 classes")
    features = images.astype(np.float64) / 255.0
    return Dataset(features, labels, class_count)


def load_csv(path: str, label_column: str | int, has_header: bool = True) -> Dataset:
    """Load a rectangular numeric CSV with one categorical/integer label column.

    Labels are re-coded to contiguous {0..c-1} in first-appearance order;
    the original label strings are kept in ``Dataset.label_names``.
    """
    with open(path, newline="") as f:
        reader = csv.reader(f)
        rows = list(reader)
    if not rows:
        raise CsvFormatError(f"{path}: empty file")

    header: list[str] | None = None
    if has_header:
        header = rows[0]
        rows = rows[1:]
        if not rows:
            raise CsvFormatError(f"{path}: no data rows after header")

    width = len(rows[0])
    if isinstance(label_column, int) or (isinstance(label_column, str) and label_column.lstrip("-").isdigit() and header is None):
        label_idx = int(label_column)
        if label_idx < 0:
            label_idx += width
    else:
        if header is None:
            raise CsvFormatError(f"{path}: label column {label_column!r} given by name but file has no header")
        try:
            label_idx = header.index(str(label_column))
        except ValueError:
            raise CsvFormatError(f"{path}: no column named {label_column!r} in header") from None
    if not 0 <= label_idx < width:
        raise CsvFormatError(f"{path}: label column index {label_idx} out of range for {width} columns")

    first_line = 2 if has_header else 1
    feature_cols = [j for j in range(width) if j != label_idx]
    features = np.empty((len(rows), len(feature_cols)), dtype=np.float64)
    label_strings: list[str] = []
    for i, row in enumerate(rows):
        line_no = first_line + i
        if len(row) != width:
            raise CsvFormatError(
                f"{path}: ragged row at line {line_no} "
                f"({len(row)} fields in a {width}-column file)")
        for out_j, j in enumerate(feature_cols):
            try:
                features[i, out_j] = float(row[j])
            except ValueError:
                raise CsvFormatError(
                    f"{path}: non-numeric feature cell {row[j]!r} at line {line_no}, "
                    f"column {j}") from None
        label_strings.append(row[label_idx])

    names: list[str] = []
    coding: dict[str, int] = {}
    labels = np.empty(len(rows), dtype=np.int64)
    for i, s in enumerate(label_strings):
        if s not in coding:
            coding[s] = len(names)
            names.append(s)
        labels[i] = coding[s]
    if len(names) < 2:
        raise ValueError("dataset must contain at least 2 classes")
    return Dataset(features, labels, len(names), names)


def save_csv(ds: Dataset, path: str, header: bool = True) -> None:
    """Write a Dataset as CSV; float repr round-trips features bit-exactly."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        if header:
            writer.writerow([f"f{j}" for j in range(ds.feature_dim)] + ["label"])
        for i in range(ds.n):
            name = ds.label_names[ds.labels[i]] if ds.label_names else str(int(ds.labels[i]))
            writer.writerow([repr(float(v)) for v in ds.features[i]] + [name])


def normalize(ds: Dataset, mode: str) -> tuple[Dataset, NormStats]:
    """Compute per-feature normalization stats on ``ds`` and apply them.

    Constant features keep scale 1 so they pass through unchanged (shifted
    to 0 for minmax01/zscore).
    """
    X = ds.features
    if mode == "none":
        offset = np.zeros(ds.feature_dim)
        scale = np.ones(ds.feature_dim)
    elif mode == "minmax01":
        lo = X.min(axis=0)
        hi = X.max(axis=0)
        offset = lo
        scale = hi - lo
        scale[scale == 0.0] = 1.0
    elif mode == "zscore":
        offset = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0.0] = 1.0
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    stats = NormStats(mode, offset, scale)
    out = Dataset(stats.apply(X), ds.labels, ds.class_count, ds.label_names)
    return out, stats


def stratified_split(ds: Dataset, holdout_frac: float, seed: int) -> Split:
    """Hold out round(frac * class size) samples per class, at least 1 when
    the class has >= 2 samples. Deterministic under ``seed``."""
    if not 0.0 < holdout_frac < 1.0:
        raise ValueError("holdout_frac must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    val_parts = []
    train_parts = []
    for c in range(ds.class_count):
        members = np.flatnonzero(ds.labels == c)
        size = members.size
        if size < 2:
            raise ValueError(
                f"class {c} has {size} sample(s); need at least 2 to hold out")
        k = int(round(holdout_frac * size))
        k = min(max(k, 1), size - 1)
        perm = rng.permutation(size)
        val_parts.append(members[perm[:k]])
        train_parts.append(members[perm[k:]])
    val = np.sort(np.concatenate(val_parts))
    train = np.sort(np.concatenate(train_parts))
    return Split(train, val, holdout_frac)
