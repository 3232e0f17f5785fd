"""Exact brute-force kNN classification and the exemplar-vs-full benchmark."""

from __future__ import annotations

import time
from dataclasses import dataclass, asdict

import numpy as np

from . import embedding
from .counting import OpCounter
from .data import Dataset
from .embedding import EmbeddingModel
from .exemplars import ExemplarSet

DISTANCE_EVALS = OpCounter()


def auto_k(z: int) -> int:
    """Neighbor count rule: k=1 for small exemplar sets (z <= 10), else k=5."""
    return 1 if z <= 10 else min(5, z)


def _sq_distances(queries: np.ndarray, references: np.ndarray) -> np.ndarray:
    sq_q = np.einsum("ij,ij->i", queries, queries)
    sq_r = np.einsum("ij,ij->i", references, references)
    D = sq_q[:, None] + sq_r[None, :] - 2.0 * (queries @ references.T)
    np.maximum(D, 0.0, out=D)
    DISTANCE_EVALS.add(queries.shape[0] * references.shape[0])
    return D


def _select_k(D: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest references per row, ordered by (distance,
    reference index); distance ties always resolve to the lower index."""
    q, p = D.shape
    if k == p:
        return np.argsort(D, axis=1, kind="stable")
    part = np.argpartition(D, k - 1, axis=1)[:, :k]
    part.sort(axis=1)
    pd = np.take_along_axis(D, part, axis=1)
    order = np.argsort(pd, axis=1, kind="stable")
    sel = np.take_along_axis(part, order, axis=1)
    # rows where the k-th distance ties with excluded references need an
    # exact re-selection so the lower index wins
    kth = np.take_along_axis(pd, order[:, -1:], axis=1)
    suspect = np.flatnonzero((D <= kth).sum(axis=1) > k)
    for r in suspect:
        cand = np.flatnonzero(D[r] <= kth[r, 0])
        cand = cand[np.argsort(D[r][cand], kind="stable")]
        sel[r] = cand[:k]
    return sel


def knn_classify(references: np.ndarray, ref_labels: np.ndarray,
                 queries: np.ndarray, k: int, chunk: int = 2048) -> np.ndarray:
    """Exact kNN majority vote by squared Euclidean distance.

    Distance ties break to the lower reference index; vote ties go to the
    class of the nearest neighbor belonging to a tied class.
    """
    references = np.asarray(references, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    ref_labels = np.asarray(ref_labels, dtype=np.int64)
    p = references.shape[0]
    if queries.ndim != 2 or references.ndim != 2 or queries.shape[1] != references.shape[1]:
        raise ValueError("queries and references disagree on dimension")
    if not 1 <= k <= p:
        raise ValueError(f"k={k} must lie in [1, {p}]")
    n_class = int(ref_labels.max()) + 1 if p else 0
    preds = np.empty(queries.shape[0], dtype=np.int64)
    for start in range(0, queries.shape[0], chunk):
        block = slice(start, min(start + chunk, queries.shape[0]))
        D = _sq_distances(queries[block], references)
        sel = _select_k(D, k)
        sel_labels = ref_labels[sel]
        rows = np.arange(sel.shape[0])
        counts = np.zeros((sel.shape[0], n_class), dtype=np.int64)
        np.add.at(counts, (np.repeat(rows, k), sel_labels.ravel()), 1)
        best = counts.max(axis=1)
        # first selected neighbor whose class reaches the top vote count
        is_top = counts[rows[:, None], sel_labels] == best[:, None]
        preds[block] = sel_labels[rows, is_top.argmax(axis=1)]
    return preds


def classify_with_model(model: EmbeddingModel, exemplars: ExemplarSet,
                        test: Dataset, k: int | None = None
                        ) -> tuple[np.ndarray, float]:
    """Embed raw test points (applying the model's stored normalization) and
    classify them against the embedded exemplars."""
    if test.feature_dim != model.input_dim:
        raise ValueError(
            f"test data has {test.feature_dim} features, model expects {model.input_dim}")
    if k is None:
        k = auto_k(exemplars.z)
    X = test.features if model.norm is None else model.norm.apply(test.features)
    Yq = embedding.forward(model, X)
    Yr = embedding.forward(model, exemplars.vectors)
    preds = knn_classify(Yr, exemplars.labels, Yq, k)
    error = float(np.mean(preds != test.labels))
    return preds, error


@dataclass
class BenchmarkReport:
    exemplar_error: float
    exemplar_seconds: float
    full_error: float
    full_seconds: float
    speedup: float
    n_test: int
    n_train: int
    z: int
    input_dim: int
    embed_dim: int
    k_full: int
    k_exemplar: int

    def to_text(self) -> str:
        return "\n".join(f"{key}={value}" for key, value in asdict(self).items())

    def to_dict(self) -> dict:
        return asdict(self)


def benchmark(model: EmbeddingModel, exemplars: ExemplarSet, train: Dataset,
              test: Dataset, k_full: int = 5, k_exemplar: int | None = None,
              repeats: int = 3) -> BenchmarkReport:
    """Time exemplar-space kNN (including the test-embedding computation)
    against brute-force kNN in the original input space.

    Median wall-clock over ``repeats`` timed runs after one untimed warm-up;
    both arms classify the identical test set.
    """
    if repeats < 3:
        raise ValueError("repeats must be at least 3")
    if k_exemplar is None:
        k_exemplar = auto_k(exemplars.z)

    X_test = test.features if model.norm is None else model.norm.apply(test.features)

    def run_exemplar() -> np.ndarray:
        Ye = embedding.forward(model, exemplars.vectors)
        Yq = embedding.forward(model, X_test)
        return knn_classify(Ye, exemplars.labels, Yq, k_exemplar)

    def run_full() -> np.ndarray:
        return knn_classify(train.features, train.labels, test.features, k_full)

    ex_pred = run_exemplar()  # warm-up, also yields the (deterministic) predictions
    full_pred = run_full()
    ex_times = []
    full_times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        run_exemplar()
        ex_times.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        run_full()
        full_times.append(time.perf_counter() - t0)
    ex_sec = float(np.median(ex_times))
    full_sec = float(np.median(full_times))
    return BenchmarkReport(
        exemplar_error=float(np.mean(ex_pred != test.labels)),
        exemplar_seconds=ex_sec,
        full_error=float(np.mean(full_pred != test.labels)),
        full_seconds=full_sec,
        speedup=full_sec / ex_sec,
        n_test=test.n,
        n_train=train.n,
        z=exemplars.z,
        input_dim=test.feature_dim,
        embed_dim=model.embed_dim,
        k_full=k_full,
        k_exemplar=k_exemplar,
    )
