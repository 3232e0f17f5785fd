"""Collapsing-classes losses and their exact gradients.

Two families: pairwise losses over all ordered point pairs (Gaussian
conditional neighbor probabilities, or a globally normalized heavy-tailed
Student-t density), and the exemplar-centered loss that compares the n
training points only against z exemplars, giving cost linear in n.

All losses use the indicator form -sum [same class] log q with the constant
term dropped. Gradients are the exact chain rule of that quantity, w.r.t.
the flat embedding-parameter vector and (optionally) the exemplar vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import embedding
from .counting import OpCounter
from .embedding import EmbeddingModel
from .exemplars import ExemplarSet

DISTANCE_EVALS = OpCounter()


@dataclass(frozen=True)
class PairwiseLossConfig:
    """kernel: 'gaussian' (row-normalized) or 'student_t' (globally normalized)."""

    kernel: str = "student_t"

    def __post_init__(self) -> None:
        if self.kernel not in ("gaussian", "student_t"):
            raise ValueError(f"unknown kernel {self.kernel!r}")


@dataclass
class LossValue:
    """loss plus gradients; grad_exemplars is all-zero when exemplars are frozen
    and None for pairwise losses. Gradients are None when not requested."""

    loss: float
    grad_params: np.ndarray | None
    grad_exemplars: np.ndarray | None


def target_probs(labels_rows: np.ndarray, labels_cols: np.ndarray,
                 exclude_diagonal: bool = False) -> np.ndarray:
    """Row-stochastic target matrix: row i uniform over same-class columns.

    With ``exclude_diagonal`` (rows and columns index the same points) a point
    is not its own neighbor. Raises if some row has no same-class column.
    """
    labels_rows = np.asarray(labels_rows)
    labels_cols = np.asarray(labels_cols)
    mask = labels_rows[:, None] == labels_cols[None, :]
    if exclude_diagonal:
        if mask.shape[0] != mask.shape[1]:
            raise ValueError("exclude_diagonal requires a square label pairing")
        np.fill_diagonal(mask, False)
    counts = mask.sum(axis=1)
    if (counts == 0).any():
        i = int(np.flatnonzero(counts == 0)[0])
        raise ValueError(
            f"row {i} (class {labels_rows[i]}) has no same-class column")
    return mask.astype(np.float64) / counts[:, None]


def _pairwise_sq_distances(Y: np.ndarray) -> np.ndarray:
    # overflow to inf and inf - inf to NaN are caught by the q-builders downstream
    with np.errstate(over="ignore", invalid="ignore"):
        sq = np.einsum("ij,ij->i", Y, Y)
        D = sq[:, None] + sq[None, :] - 2.0 * (Y @ Y.T)
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    DISTANCE_EVALS.add(Y.shape[0] * Y.shape[0])
    return D


def _cross_sq_distances(Y: np.ndarray, Ye: np.ndarray) -> np.ndarray:
    diff = Y[:, None, :] - Ye[None, :, :]
    D = np.einsum("ijk,ijk->ij", diff, diff)
    DISTANCE_EVALS.add(Y.shape[0] * Ye.shape[0])
    return D


def gaussian_conditional_q(D: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalized Gaussian neighbor probabilities q_{j|i} with q_{i|i}=0.

    Stabilized by subtracting the per-row minimum distance before
    exponentiation. Returns (q, log_q); log_q is -inf on the diagonal.
    """
    n = D.shape[0]
    if n < 2:
        raise ValueError("need at least 2 points")
    Dm = D.astype(np.float64, copy=True)
    np.fill_diagonal(Dm, np.inf)
    if np.isnan(Dm).any():
        raise ValueError("pairwise distances contain NaN (numerical failure)")
    row_min = Dm.min(axis=1)
    if not np.isfinite(row_min).all():
        raise ValueError("all pairwise distances overflowed (numerical failure)")
    shifted = Dm - row_min[:, None]
    E = np.exp(-shifted)
    S = E.sum(axis=1)
    q = E / S[:, None]
    with np.errstate(divide="ignore"):
        log_q = -shifted - np.log(S)[:, None]
    return q, log_q


def student_t_joint_q(D: np.ndarray) -> tuple[np.ndarray, float]:
    """Heavy-tailed pairwise density (1+d)^-1 normalized over all ordered
    pairs k != l; diagonal entries are 0. Returns (q, normalizer)."""
    n = D.shape[0]
    if n < 2:
        raise ValueError("need at least 2 points")
    if np.isnan(D).any():
        raise ValueError("pairwise distances contain NaN (numerical failure)")
    W = 1.0 / (1.0 + D)
    np.fill_diagonal(W, 0.0)
    S = float(W.sum())
    if not (np.isfinite(S) and S > 0.0):
        raise ValueError("all pairwise densities vanished (numerical failure)")
    return W / S, S


def exemplar_q(D: np.ndarray, per_row: bool = False) -> np.ndarray:
    """Data-to-exemplar probabilities q_{j|i} from the (n, z) distance matrix.

    Default normalizes by the global sum over all n*z pairs; ``per_row``
    normalizes each row independently (ablation variant).
    """
    if np.isnan(D).any():
        raise ValueError("data-exemplar distances contain NaN (numerical failure)")
    W = 1.0 / (1.0 + D)
    if per_row:
        S = W.sum(axis=1, keepdims=True)
        if not (np.isfinite(S).all() and (S > 0.0).all()):
            raise ValueError("a row of exemplar densities vanished (numerical failure)")
        return W / S
    S = float(W.sum())
    if not (np.isfinite(S) and S > 0.0):
        raise ValueError("all exemplar densities vanished (numerical failure)")
    return W / S


def _class_mask(labels_rows: np.ndarray, labels_cols: np.ndarray) -> np.ndarray:
    return np.asarray(labels_rows)[:, None] == np.asarray(labels_cols)[None, :]


def _chain_pairwise(Y: np.ndarray, dLdD: np.ndarray) -> np.ndarray:
    # d(d_ab)/dy_a = 2(y_a - y_b): fold the symmetrized coefficient matrix
    G = dLdD + dLdD.T
    return 2.0 * (G.sum(axis=1)[:, None] * Y - G @ Y)


def pairwise_loss_from_embeddings(Y: np.ndarray, labels: np.ndarray,
                                  cfg: PairwiseLossConfig) -> tuple[float, np.ndarray]:
    """Loss and dloss/dY for already-embedded points (distance-only evaluator)."""
    n = Y.shape[0]
    if n < 2:
        raise ValueError("pairwise loss needs at least 2 points")
    M = _class_mask(labels, labels)
    np.fill_diagonal(M, False)
    if (M.sum(axis=1) == 0).any():
        i = int(np.flatnonzero(M.sum(axis=1) == 0)[0])
        raise ValueError(f"point {i} has no same-class peer")
    D = _pairwise_sq_distances(Y)
    if cfg.kernel == "gaussian":
        q, log_q = gaussian_conditional_q(D)
        loss = -float(log_q[M].sum())
        dLdD = M.astype(np.float64) - M.sum(axis=1)[:, None] * q
        np.fill_diagonal(dLdD, 0.0)
    else:
        q, S = student_t_joint_q(D)
        W = 1.0 / (1.0 + D)
        np.fill_diagonal(W, 0.0)
        with np.errstate(divide="ignore"):
            log_q = np.log(W) - np.log(S)
        loss = -float(log_q[M].sum())
        dLdD = W * (M.astype(np.float64) - float(M.sum()) * q)
    return loss, _chain_pairwise(Y, dLdD)


def exemplar_loss_from_embeddings(Y: np.ndarray, Ye: np.ndarray,
                                  labels: np.ndarray, e_labels: np.ndarray,
                                  per_row: bool = False
                                  ) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss, dloss/dY, dloss/dYe for embedded points and embedded exemplars."""
    M = _class_mask(labels, e_labels)
    if (M.sum(axis=1) == 0).any():
        i = int(np.flatnonzero(M.sum(axis=1) == 0)[0])
        raise ValueError(
            f"class {np.asarray(labels)[i]} present in data but absent from exemplars")
    D = _cross_sq_distances(Y, Ye)
    q = exemplar_q(D, per_row=per_row)
    W = 1.0 / (1.0 + D)
    with np.errstate(divide="ignore"):
        log_q = np.where(W > 0.0, np.log(q), -np.inf)
    loss = -float(log_q[M].sum())
    Mf = M.astype(np.float64)
    if per_row:
        dLdD = W * (Mf - M.sum(axis=1)[:, None] * q)
    else:
        dLdD = W * (Mf - float(M.sum()) * q)
    dLdY = 2.0 * (dLdD.sum(axis=1)[:, None] * Y - dLdD @ Ye)
    dLdYe = 2.0 * (dLdD.sum(axis=0)[:, None] * Ye - dLdD.T @ Y)
    return loss, dLdY, dLdYe


def pairwise_loss(model: EmbeddingModel, X: np.ndarray, labels: np.ndarray,
                  cfg: PairwiseLossConfig = PairwiseLossConfig(),
                  with_grad: bool = True) -> LossValue:
    """Collapsing-classes loss over all ordered pairs of training points."""
    Y = embedding.forward(model, X)
    loss, dLdY = pairwise_loss_from_embeddings(Y, labels, cfg)
    if not with_grad:
        return LossValue(loss, None, None)
    return LossValue(loss, embedding.backward_params(model, X, dLdY), None)


def exemplar_loss(model: EmbeddingModel, X: np.ndarray, labels: np.ndarray,
                  exemplars: ExemplarSet, trainable: bool = False,
                  per_row: bool = False, with_grad: bool = True) -> LossValue:
    """Exemplar-centered collapsing loss over the n*z data-exemplar pairs.

    grad_exemplars chains dloss/d(embedded exemplar) through the embedding
    Jacobian at each exemplar; it is the zero matrix when ``trainable`` is
    False. Parameter gradients always include the exemplar-embedding path.
    """
    Y = embedding.forward(model, X)
    Ye = embedding.forward(model, exemplars.vectors)
    loss, dLdY, dLdYe = exemplar_loss_from_embeddings(
        Y, Ye, labels, exemplars.labels, per_row=per_row)
    if not with_grad:
        return LossValue(loss, None, None)
    grad_params = (embedding.backward_params(model, X, dLdY)
                   + embedding.backward_params(model, exemplars.vectors, dLdYe))
    if trainable:
        grad_exemplars = embedding.backward_inputs(model, exemplars.vectors, dLdYe)
    else:
        grad_exemplars = np.zeros_like(exemplars.vectors)
    return LossValue(loss, grad_params, grad_exemplars)


def minibatch_loss(model: EmbeddingModel, X: np.ndarray, labels: np.ndarray,
                   exemplars: ExemplarSet, batch_indices: np.ndarray,
                   trainable: bool = False, per_row: bool = False,
                   with_grad: bool = True) -> LossValue:
    """Exemplar loss restricted to a batch; the normalization pool is the
    batch's (batch size * z) pairs, so batch == full data reproduces
    exemplar_loss exactly."""
    idx = np.asarray(batch_indices)
    if idx.size == 0:
        raise ValueError("batch must be nonempty")
    return exemplar_loss(model, np.asarray(X)[idx], np.asarray(labels)[idx],
                         exemplars, trainable=trainable, per_row=per_row,
                         with_grad=with_grad)
