"""Nonlinear conjugate gradient training over embedding parameters and,
optionally, exemplar vectors, with minibatch epochs and validation-based
model selection."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import embedding, knn, objective
from .data import Dataset, Split
from .embedding import EmbeddingModel
from .exemplars import ExemplarSet
from .objective import PairwiseLossConfig

logger = logging.getLogger("enhope")


@dataclass(frozen=True)
class CgConfig:
    max_epochs: int = 30
    batch_size: int = 5000
    cg_steps_per_batch: int = 3
    armijo_c1: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30
    restart_every: int = 20
    seed: int = 0
    patience: int = 10

    def __post_init__(self) -> None:
        if not 0.0 < self.armijo_c1 < 1.0:
            raise ValueError("armijo_c1 must lie in (0, 1)")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must lie in (0, 1)")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if min(self.max_epochs, self.cg_steps_per_batch, self.max_backtracks,
               self.restart_every, self.patience) < 1:
            raise ValueError("all counts must be at least 1")


@dataclass
class StepRecord:
    """One accepted CG step, kept so tests can audit the Armijo condition."""

    f_before: float
    f_after: float
    alpha: float
    directional_derivative: float


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    val_errors: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    selected_epoch: int = -1

    def progress_line(self, epoch: int) -> str:
        return (f"epoch={epoch} loss={self.epoch_losses[epoch]:.6f} "
                f"val_err={self.val_errors[epoch]:.6f} "
                f"secs={self.epoch_seconds[epoch]:.3f}")


def _parabola_min(f0, gd, alpha, f1):
    """Minimizer of the parabola through (0, f0) with slope gd and (alpha, f1);
    exact when the objective is quadratic along the ray. None if not convex."""
    denom = 2.0 * (f1 - f0 - gd * alpha)
    if not np.isfinite(denom) or denom <= 0.0:
        return None
    return -gd * alpha * alpha / denom


def _line_search(fun, x, d, f0, gd, alpha0, c1, shrink, max_backtracks):
    """Backtracking Armijo search guided by parabolic interpolation.

    Trial steps come from the interpolating parabola, clamped to
    [shrink^2, shrink] times the previous trial so progress never stalls on
    wild fits. A final unclamped refinement from the accepted point recovers
    the exact 1-D minimizer on quadratic objectives. Returns (alpha, f_new)
    or (None, f0) when no Armijo-acceptable step was found.
    """

    def armijo(alpha, fval):
        return np.isfinite(fval) and fval <= f0 + c1 * alpha * gd

    def refine(alpha, f1):
        # iterate the fit: flat curvature regimes want steps far beyond the
        # first trial, and each round can only grow alpha 100-fold
        for _ in range(10):
            a_r = _parabola_min(f0, gd, alpha, f1)
            if a_r is None or not 0.0 < a_r <= 100.0 * alpha or np.isclose(a_r, alpha):
                break
            f_r = float(fun(x + a_r * d))
            if not (armijo(a_r, f_r) and f_r <= f1):
                break
            alpha, f1 = a_r, f_r
        return alpha, f1

    alpha = alpha0
    f1 = float(fun(x + alpha * d))
    if armijo(alpha, f1):
        return refine(alpha, f1)
    lo = shrink * shrink
    for _ in range(max_backtracks):
        a_next = _parabola_min(f0, gd, alpha, f1)
        if a_next is None or not np.isfinite(a_next):
            a_next = shrink * alpha
        a_next = min(max(a_next, lo * alpha), shrink * alpha)
        alpha = a_next
        f1 = float(fun(x + alpha * d))
        if armijo(alpha, f1):
            return refine(alpha, f1)
    return None, f0


def minimize_cg(fun_grad, x0, max_steps: int, fun=None, *,
                c1: float = 1e-4, shrink: float = 0.5, max_backtracks: int = 30,
                restart_every: int = 20, grad_tol: float = 0.0,
                records: list[StepRecord] | None = None
                ) -> tuple[np.ndarray, float, np.ndarray]:
    """Polak-Ribiere+ conjugate gradient with automatic steepest-descent
    resets (non-positive PR+ coefficient, restart interval, or non-descent
    direction). Returns (x, f, grad) at the last accepted point."""
    if fun is None:
        fun = lambda x: fun_grad(x)[0]
    x = np.asarray(x0, dtype=np.float64).copy()
    f, g = fun_grad(x)
    f = float(f)
    if not np.isfinite(f) or not np.isfinite(g).all():
        raise RuntimeError("non-finite loss or gradient at the starting point")
    d = -g
    since_restart = 0
    for _ in range(max_steps):
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm <= grad_tol:
            break
        if since_restart >= restart_every:
            d = -g
            since_restart = 0
        gd = float(g @ d)
        if gd >= 0.0:
            d = -g
            since_restart = 0
            gd = float(g @ d)
            if gd >= 0.0:
                break  # zero gradient
        # search along the unit direction so alpha measures actual distance
        # and backtracking explores the right scale even for tiny gradients
        dnorm = float(np.linalg.norm(d))
        d_unit = d / dnorm
        alpha, f_new = _line_search(fun, x, d_unit, f, gd / dnorm, 1.0, c1,
                                    shrink, max_backtracks)
        if alpha is None:
            # tiny fixed fallback step, taken only if it does not increase the loss
            tiny = 1e-10
            f_try = float(fun(x + tiny * d_unit))
            if np.isfinite(f_try) and f_try <= f:
                logger.warning("line search failed; taking tiny fallback step")
                alpha, f_new = tiny, f_try
            else:
                logger.warning("line search failed; stopping this CG run")
                break
        if records is not None:
            records.append(StepRecord(f, f_new, alpha, gd / dnorm))
        x = x + alpha * d_unit
        f_new2, g_new = fun_grad(x)
        if not np.isfinite(f_new2) or not np.isfinite(g_new).all():
            raise RuntimeError("non-finite loss or gradient after a CG step")
        beta = max(0.0, float(g_new @ (g_new - g)) / max(float(g @ g), 1e-300))
        d = -g_new + beta * d
        g = g_new
        f = float(f_new2)
        since_restart += 1
    return x, f, g


def _pack_state(model: EmbeddingModel, exemplars: ExemplarSet | None,
                trainable: bool) -> np.ndarray:
    theta = embedding.pack_params(model)
    if trainable and exemplars is not None:
        return np.concatenate([theta, exemplars.vectors.ravel()])
    return theta


def _unpack_state(x: np.ndarray, model: EmbeddingModel,
                  exemplars: ExemplarSet | None, trainable: bool
                  ) -> tuple[EmbeddingModel, ExemplarSet | None]:
    n_theta = embedding.n_params(model)
    new_model = embedding.unpack_params(model, x[:n_theta])
    if trainable and exemplars is not None:
        vecs = x[n_theta:].reshape(exemplars.vectors.shape)
        return new_model, ExemplarSet(vecs, exemplars.labels)
    return new_model, exemplars


def evaluate_validation(model: EmbeddingModel, references: ExemplarSet,
                        val_features: np.ndarray, val_labels: np.ndarray,
                        k: int) -> float:
    """kNN error of validation points against the reference set, both mapped
    through the embedding. Empty validation sets yield NaN."""
    if len(val_labels) == 0:
        return float("nan")
    Yr = embedding.forward(model, references.vectors)
    Yq = embedding.forward(model, val_features)
    preds = knn.knn_classify(Yr, references.labels, Yq, min(k, references.z))
    return float(np.mean(preds != val_labels))


def train(model: EmbeddingModel, ds: Dataset, split: Split,
          exemplars: ExemplarSet | None = None, loss_mode: str = "exemplar",
          cfg: CgConfig = CgConfig(), kernel: str = "student_t",
          trainable_exemplars: bool = False, per_row: bool = False,
          eval_k: int | None = None, progress=None
          ) -> tuple[EmbeddingModel, ExemplarSet | None, TrainReport]:
    """Minibatch CG training; returns the snapshot with the lowest validation
    kNN error (earliest epoch on ties; final epoch when validation is empty).

    loss_mode 'exemplar' compares training points against ``exemplars``
    (updated jointly when ``trainable_exemplars``); 'pairwise' compares all
    point pairs with the chosen kernel and validates against the training
    points themselves.
    """
    if loss_mode not in ("exemplar", "pairwise"):
        raise ValueError(f"unknown loss_mode {loss_mode!r}")
    if loss_mode == "exemplar":
        if exemplars is None:
            raise ValueError("exemplar mode requires an exemplar set")
        if exemplars.z >= split.train_indices.size:
            raise ValueError(
                f"z={exemplars.z} exemplars defeat compression on "
                f"{split.train_indices.size} training points")
    X = ds.features[split.train_indices]
    y = ds.labels[split.train_indices]
    val_X = ds.features[split.val_indices]
    val_y = ds.labels[split.val_indices]
    n = X.shape[0]
    pair_cfg = PairwiseLossConfig(kernel)
    trainable = trainable_exemplars and loss_mode == "exemplar"

    if eval_k is None:
        eval_k = knn.auto_k(exemplars.z) if loss_mode == "exemplar" else 5

    rng = np.random.default_rng(cfg.seed)
    x = _pack_state(model, exemplars, trainable)
    report = TrainReport()
    best_err = np.inf
    best_x = x.copy()
    best_epoch = -1
    epochs_since_improvement = 0

    def batch_closure(batch_X, batch_y):
        def fun_grad(vec):
            m, ex = _unpack_state(vec, model, exemplars, trainable)
            if loss_mode == "pairwise":
                lv = objective.pairwise_loss(m, batch_X, batch_y, pair_cfg)
                return lv.loss, lv.grad_params
            lv = objective.exemplar_loss(m, batch_X, batch_y, ex,
                                         trainable=trainable, per_row=per_row)
            if trainable:
                return lv.loss, np.concatenate(
                    [lv.grad_params, lv.grad_exemplars.ravel()])
            return lv.loss, lv.grad_params

        def fun(vec):
            m, ex = _unpack_state(vec, model, exemplars, trainable)
            if loss_mode == "pairwise":
                return objective.pairwise_loss(m, batch_X, batch_y, pair_cfg,
                                               with_grad=False).loss
            return objective.exemplar_loss(m, batch_X, batch_y, ex,
                                           trainable=trainable, per_row=per_row,
                                           with_grad=False).loss

        return fun_grad, fun

    for epoch in range(cfg.max_epochs):
        t0 = time.perf_counter()
        if n <= cfg.batch_size:
            batches = [np.arange(n)]
        else:
            perm = rng.permutation(n)
            n_batches = int(np.ceil(n / cfg.batch_size))
            batches = [perm[i::n_batches] for i in range(n_batches)]
        epoch_losses = []
        for b, idx in enumerate(batches):
            fun_grad, fun = batch_closure(X[idx], y[idx])
            try:
                x, f, _ = minimize_cg(
                    fun_grad, x, cfg.cg_steps_per_batch, fun,
                    c1=cfg.armijo_c1, shrink=cfg.shrink,
                    max_backtracks=cfg.max_backtracks,
                    restart_every=cfg.restart_every)
            except RuntimeError as exc:
                raise RuntimeError(
                    f"{exc} (epoch {epoch}, batch {b}, size {idx.size})") from exc
            epoch_losses.append(f)
        cur_model, cur_ex = _unpack_state(x, model, exemplars, trainable)
        refs = cur_ex if loss_mode == "exemplar" else ExemplarSet(X, y)
        val_err = evaluate_validation(cur_model, refs, val_X, val_y, eval_k)
        report.epoch_losses.append(float(np.mean(epoch_losses)))
        report.val_errors.append(val_err)
        report.epoch_seconds.append(time.perf_counter() - t0)
        if progress is not None:
            progress(report.progress_line(epoch))
        if not np.isnan(val_err) and val_err < best_err:
            best_err = val_err
            best_x = x.copy()
            best_epoch = epoch
            epochs_since_improvement = 0
        else:
            epochs_since_improvement += 1
            if not np.isnan(val_err) and epochs_since_improvement >= cfg.patience:
                break

    if best_epoch < 0:  # no usable validation signal: keep the final state
        best_x = x
        best_epoch = len(report.epoch_losses) - 1
    report.selected_epoch = best_epoch
    final_model, final_ex = _unpack_state(best_x, model, exemplars, trainable)
    return final_model, final_ex, report
