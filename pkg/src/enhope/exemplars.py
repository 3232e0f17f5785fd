"""Exemplar selection: class-proportional allocation, supervised per-class
k-means, and per-class random sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset


@dataclass(frozen=True)
class ExemplarSet:
    """z exemplar vectors with designated class labels.

    Vectors live in the same (normalized) input space as the training data
    they were derived from.
    """

    vectors: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "vectors",
                           np.ascontiguousarray(self.vectors, dtype=np.float64))
        object.__setattr__(self, "labels",
                           np.ascontiguousarray(self.labels, dtype=np.int64))
        if self.vectors.ndim != 2 or self.vectors.shape[0] != self.labels.shape[0]:
            raise ValueError("exemplar vectors and labels disagree on count")

    @property
    def z(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class ExemplarConfig:
    z: int = 20
    mode: str = "kmeans"  # kmeans | random | learned_init_kmeans | learned_init_random
    seed: int = 0
    kmeans_max_iters: int = 50
    kmeans_tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.mode not in ("kmeans", "random", "learned_init_kmeans",
                             "learned_init_random"):
            raise ValueError(f"unknown exemplar mode {self.mode!r}")
        if self.kmeans_max_iters < 1 or self.kmeans_tol <= 0:
            raise ValueError("kmeans_max_iters must be >= 1 and kmeans_tol > 0")

    @property
    def trainable(self) -> bool:
        return self.mode.startswith("learned")


def allocate_per_class(labels: np.ndarray, z: int) -> np.ndarray:
    """Split z exemplar slots across classes proportionally to class
    frequencies (largest-remainder rounding), at least 1 per class."""
    labels = np.asarray(labels)
    class_sizes = np.bincount(labels)
    c = class_sizes.size
    if z < c:
        raise ValueError(f"z={z} is smaller than the class count {c}")
    if (class_sizes == 0).any():
        raise ValueError("every class id in {0..c-1} must occur at least once")
    quota = z * class_sizes / class_sizes.sum()
    counts = np.floor(quota).astype(np.int64)
    remainder = quota - counts
    # hand out leftover slots by largest remainder, ties to the lower class id
    order = np.lexsort((np.arange(c), -remainder))
    for j in order[: z - counts.sum()]:
        counts[j] += 1
    # repair zero-count classes from the currently largest allocation
    while (counts == 0).any():
        counts[int(np.flatnonzero(counts == 0)[0])] += 1
        counts[int(np.argmax(counts))] -= 1
    return counts


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.einsum("ij,ij->i", X - centers[0], X - centers[0])
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[j] = X[rng.integers(n)]
            continue
        centers[j] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", X - centers[j], X - centers[j]))
    return centers


def kmeans_lloyd(X: np.ndarray, k: int, rng: np.random.Generator,
                 max_iters: int = 50, tol: float = 1e-6
                 ) -> tuple[np.ndarray, list[float]]:
    """Lloyd's algorithm with k-means++ seeding.

    Empty clusters are re-seeded from the point farthest from its own
    center. Returns the centers and the per-iteration inertia history
    (non-increasing).
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if k > n:
        raise ValueError(f"cannot place {k} centers on {n} points")
    centers = _kmeans_pp_init(X, k, rng)
    history: list[float] = []
    prev = np.inf
    for _ in range(max_iters):
        sq_x = np.einsum("ij,ij->i", X, X)
        sq_c = np.einsum("ij,ij->i", centers, centers)
        D = np.maximum(sq_x[:, None] + sq_c[None, :] - 2.0 * (X @ centers.T), 0.0)
        assign = D.argmin(axis=1)
        for _ in range(k):  # repair may cascade, but at most k times
            empty = np.setdiff1d(np.arange(k), assign)
            if empty.size == 0:
                break
            own = D[np.arange(n), assign]
            far = int(own.argmax())
            j = int(empty[0])
            centers[j] = X[far]
            D[:, j] = np.einsum("ij,ij->i", X - centers[j], X - centers[j])
            assign = D.argmin(axis=1)
        inertia = float(np.einsum("ij,ij->i", X - centers[assign], X - centers[assign]).sum())
        history.append(inertia)
        if np.isfinite(prev) and prev - inertia <= tol * max(prev, 1e-300):
            break
        prev = inertia
        for j in range(k):
            members = assign == j
            if members.any():
                centers[j] = X[members].mean(axis=0)
    return centers, history


def kmeans_per_class(ds: Dataset, counts: np.ndarray, seed: int = 0,
                     max_iters: int = 50, tol: float = 1e-6) -> ExemplarSet:
    """Run k-means separately within each class; exemplar = center, labeled
    by its class. Each class is seeded independently (seed + class id)."""
    counts = np.asarray(counts, dtype=np.int64)
    vectors = []
    labels = []
    for c in range(ds.class_count):
        members = np.flatnonzero(ds.labels == c)
        if members.size < counts[c]:
            raise ValueError(
                f"class {c} has {members.size} samples, fewer than the "
                f"requested {counts[c]} exemplars")
        if counts[c] == 0:
            continue
        rng = np.random.default_rng(seed + c)
        centers, _ = kmeans_lloyd(ds.features[members], int(counts[c]), rng,
                                  max_iters=max_iters, tol=tol)
        vectors.append(centers)
        labels.append(np.full(int(counts[c]), c, dtype=np.int64))
    return ExemplarSet(np.vstack(vectors), np.concatenate(labels))


def sample_random(ds: Dataset, counts: np.ndarray, seed: int = 0) -> ExemplarSet:
    """Sample exemplars per class without replacement, deterministic under seed."""
    counts = np.asarray(counts, dtype=np.int64)
    vectors = []
    labels = []
    for c in range(ds.class_count):
        members = np.flatnonzero(ds.labels == c)
        if members.size < counts[c]:
            raise ValueError(
                f"class {c} has {members.size} samples, fewer than the "
                f"requested {counts[c]} exemplars")
        if counts[c] == 0:
            continue
        rng = np.random.default_rng(seed + c)
        chosen = np.sort(rng.choice(members, size=int(counts[c]), replace=False))
        vectors.append(ds.features[chosen])
        labels.append(np.full(int(counts[c]), c, dtype=np.int64))
    return ExemplarSet(np.vstack(vectors), np.concatenate(labels))


def build_exemplars(ds: Dataset, cfg: ExemplarConfig) -> ExemplarSet:
    """Allocate cfg.z slots across classes and fill them per cfg.mode."""
    counts = allocate_per_class(ds.labels, cfg.z)
    if cfg.mode in ("kmeans", "learned_init_kmeans"):
        return kmeans_per_class(ds, counts, seed=cfg.seed,
                                max_iters=cfg.kmeans_max_iters, tol=cfg.kmeans_tol)
    return sample_random(ds, counts, seed=cfg.seed)
