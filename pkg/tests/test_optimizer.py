import numpy as np
import pytest

from enhope import objective
from enhope.data import Dataset, Split
from enhope.embedding import EmbeddingModel, LinearParams, forward, init_high_order
from enhope.exemplars import ExemplarSet
from enhope.optimizer import (CgConfig, StepRecord, evaluate_validation,
                              minimize_cg, train)
from conftest import dataset_from, make_blobs


def quadratic_problem(dim, seed, cond=10.0):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    eigs = np.linspace(1.0, cond, dim)
    A = Q @ np.diag(eigs) @ Q.T
    b = rng.normal(size=dim)

    def fun_grad(x):
        return 0.5 * x @ A @ x - b @ x, A @ x - b

    def fun(x):
        return 0.5 * x @ A @ x - b @ x

    return fun_grad, fun, rng.normal(size=dim)


class TestMinimizeCg:
    def test_quadratic_converges_in_dim_plus_five(self):
        dim = 10
        fun_grad, fun, x0 = quadratic_problem(dim, seed=0)
        x, f, g = minimize_cg(fun_grad, x0, dim + 5, fun, grad_tol=1e-8)
        assert np.max(np.abs(g)) <= 1e-8

    @pytest.mark.parametrize("seed", range(5))
    def test_quadratic_various_instances(self, seed):
        dim = 8
        fun_grad, fun, x0 = quadratic_problem(dim, seed=seed, cond=50.0)
        x, f, g = minimize_cg(fun_grad, x0, dim + 5, fun, grad_tol=1e-8)
        assert np.max(np.abs(g)) <= 1e-8

    def test_armijo_holds_on_every_accepted_step(self):
        fun_grad, fun, x0 = quadratic_problem(12, seed=3)
        records: list[StepRecord] = []
        minimize_cg(fun_grad, x0, 20, fun, c1=1e-4, records=records)
        assert records
        for r in records:
            assert r.directional_derivative < 0
            assert r.f_after <= r.f_before + 1e-4 * r.alpha * r.directional_derivative

    def test_rosenbrock_descends(self):
        def fun_grad(x):
            a, b = x
            f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
            g = np.array([-2 * (1 - a) - 400 * a * (b - a * a),
                          200 * (b - a * a)])
            return f, g

        x, f, g = minimize_cg(fun_grad, np.array([-1.2, 1.0]), 300, grad_tol=1e-6)
        assert f < 1e-8

    def test_non_finite_start_raises(self):
        def fun_grad(x):
            return np.nan, np.zeros_like(x)

        with pytest.raises(RuntimeError, match="non-finite"):
            minimize_cg(fun_grad, np.zeros(2), 5)


def one_class_1d_problem():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(12, 1))
    ds = Dataset(X, np.zeros(12, dtype=int), 1)
    split = Split(np.arange(12), np.array([], dtype=np.int64), 0.0)
    model = EmbeddingModel(LinearParams(np.array([[1.0]])))
    ex = ExemplarSet(np.array([[0.3]]), np.array([0]))
    return model, ds, split, ex


class TestTrain:
    def test_collapsing_optimum_one_class(self):
        model, ds, split, ex = one_class_1d_problem()
        cfg = CgConfig(max_epochs=200, batch_size=5000, cg_steps_per_batch=5,
                       seed=0, patience=200)
        trained, ex_out, report = train(model, ds, split, ex, cfg=cfg)
        ye = forward(trained, ex_out.vectors)
        y = forward(trained, ds.features)
        assert np.abs(y - ye).max() <= 1e-3

    def test_deterministic_report(self, rng):
        X, y = make_blobs(rng, 30, [[0, 0], [5, 5]])
        ds = dataset_from(X, y)
        split = Split(np.arange(40), np.arange(40, 60), 0.33)
        ex = ExemplarSet(np.array([[0.0, 0.0], [5.0, 5.0]]), np.array([0, 1]))
        cfg = CgConfig(max_epochs=5, seed=42)

        def run():
            model = init_high_order(2, 2, 3, 2, seed=1)
            _, _, report = train(model, ds, split, ex, cfg=cfg)
            return report

        a, b = run(), run()
        assert a.epoch_losses == b.epoch_losses
        assert a.val_errors == b.val_errors

    def test_full_batch_loss_non_increasing(self, rng):
        X, y = make_blobs(rng, 25, [[0, 0], [4, 4]])
        ds = dataset_from(X, y)
        split = Split(np.arange(ds.n), np.array([], dtype=np.int64), 0.0)
        ex = ExemplarSet(np.array([[0.0, 0.0], [4.0, 4.0]]), np.array([0, 1]))
        model = init_high_order(2, 2, 3, 2, seed=0)
        cfg = CgConfig(max_epochs=12, seed=0, patience=12)
        _, _, report = train(model, ds, split, ex, cfg=cfg)
        losses = np.array(report.epoch_losses)
        assert (np.diff(losses) <= 1e-10).all()

    def test_epoch_cost_roughly_linear_in_n(self, rng):
        # line-search evaluation counts are data dependent, so the ratio is
        # approximate: 4x the data must cost about 4x (quadratic would be 16x)
        ex = ExemplarSet(rng.normal(size=(4, 3)), np.array([0, 0, 1, 1]))
        counts = {}
        for n in (1000, 4000):
            X = rng.normal(size=(n, 3))
            y = np.arange(n) % 2
            ds = dataset_from(X, y)
            split = Split(np.arange(n), np.array([], dtype=np.int64), 0.0)
            model = init_high_order(3, 2, 2, 2, seed=0)
            cfg = CgConfig(max_epochs=1, batch_size=250, cg_steps_per_batch=2, seed=0)
            objective.DISTANCE_EVALS.reset()
            train(model, ds, split, ex, cfg=cfg)
            counts[n] = objective.DISTANCE_EVALS.count
        ratio = counts[4000] / counts[1000]
        assert 2.5 <= ratio <= 6.0

    def test_learned_exemplars_move(self, rng):
        X, y = make_blobs(rng, 30, [[0, 0], [6, 6]])
        ds = dataset_from(X, y)
        split = Split(np.arange(ds.n), np.array([], dtype=np.int64), 0.0)
        ex = ExemplarSet(np.array([[1.0, 1.0], [5.0, 5.0]]), np.array([0, 1]))
        model = init_high_order(2, 2, 3, 2, seed=2)
        cfg = CgConfig(max_epochs=5, seed=0)
        _, ex_out, _ = train(model, ds, split, ex, cfg=cfg,
                             trainable_exemplars=True)
        assert not np.allclose(ex_out.vectors, ex.vectors)

    def test_frozen_exemplars_do_not_move(self, rng):
        X, y = make_blobs(rng, 20, [[0, 0], [6, 6]])
        ds = dataset_from(X, y)
        split = Split(np.arange(ds.n), np.array([], dtype=np.int64), 0.0)
        ex = ExemplarSet(np.array([[0.0, 0.0], [6.0, 6.0]]), np.array([0, 1]))
        model = init_high_order(2, 2, 3, 2, seed=2)
        _, ex_out, _ = train(model, ds, split, ex, cfg=CgConfig(max_epochs=3, seed=0))
        assert (ex_out.vectors == ex.vectors).all()

    def test_pairwise_mode_trains(self, rng):
        X, y = make_blobs(rng, 15, [[0, 0], [5, 5]])
        ds = dataset_from(X, y)
        split = Split(np.arange(20), np.arange(20, 30), 0.33)
        model = init_high_order(2, 2, 3, 2, seed=0)
        cfg = CgConfig(max_epochs=4, seed=0)
        trained, ex_out, report = train(model, ds, split, None,
                                        loss_mode="pairwise", cfg=cfg)
        assert ex_out is None
        assert len(report.epoch_losses) == 4
        assert report.epoch_losses[-1] <= report.epoch_losses[0]

    def test_selected_epoch_is_validation_best(self, rng):
        X, y = make_blobs(rng, 40, [[0, 0], [3, 3]], scale=1.5)
        ds = dataset_from(X, y)
        split = Split(np.arange(60), np.arange(60, 80), 0.25)
        ex = ExemplarSet(np.array([[0.0, 0.0], [3.0, 3.0]]), np.array([0, 1]))
        model = init_high_order(2, 2, 3, 2, seed=5)
        _, _, report = train(model, ds, split, ex, cfg=CgConfig(max_epochs=6, seed=0))
        errs = np.array(report.val_errors)
        assert report.selected_epoch == int(np.argmin(errs))

    def test_progress_line_format(self, rng):
        X, y = make_blobs(rng, 10, [[0], [5]])
        ds = dataset_from(X, y)
        split = Split(np.arange(14), np.arange(14, 20), 0.3)
        ex = ExemplarSet(np.array([[0.0], [5.0]]), np.array([0, 1]))
        model = init_high_order(1, 1, 2, 2, seed=0)
        lines = []
        train(model, ds, split, ex, cfg=CgConfig(max_epochs=2, seed=0),
              progress=lines.append)
        assert len(lines) == 2
        import re
        pat = re.compile(r"^epoch=\d+ loss=-?\d+\.\d{6} val_err=\d+\.\d{6} secs=\d+\.\d{3}$")
        for line in lines:
            assert pat.match(line), line


class TestEvaluateValidation:
    def test_perfectly_separated_zero_error(self):
        model = EmbeddingModel(LinearParams(np.eye(2)))
        refs = ExemplarSet(np.array([[0.0, 0.0], [10.0, 10.0]]), np.array([0, 1]))
        val_X = np.array([[0.1, 0.1], [9.9, 9.9]])
        assert evaluate_validation(model, refs, val_X, np.array([0, 1]), 1) == 0.0

    def test_self_match_zero_error(self, rng):
        X = rng.normal(size=(20, 3))
        y = rng.integers(0, 2, 20)
        model = EmbeddingModel(LinearParams(rng.normal(size=(2, 3))))
        refs = ExemplarSet(X, y)
        assert evaluate_validation(model, refs, X, y, 1) == 0.0

    def test_random_labels_near_chance(self, rng):
        c = 4
        X = rng.normal(size=(500, 2))
        y = rng.integers(0, c, 500)
        refs_X = rng.normal(size=(200, 2))
        refs_y = rng.integers(0, c, 200)
        model = EmbeddingModel(LinearParams(np.eye(2)))
        err = evaluate_validation(model, ExemplarSet(refs_X, refs_y), X, y, 1)
        assert abs(err - (1 - 1 / c)) < 0.1

    def test_empty_validation_is_nan(self):
        model = EmbeddingModel(LinearParams(np.eye(2)))
        refs = ExemplarSet(np.zeros((1, 2)), np.array([0]))
        err = evaluate_validation(model, refs, np.empty((0, 2)), np.empty(0), 1)
        assert np.isnan(err)


def test_exemplars_must_compress(rng):
    X, y = make_blobs(rng, 2, [[0, 0], [5, 5]])
    ds = dataset_from(X, y)
    split = Split(np.arange(4), np.array([], dtype=np.int64), 0.0)
    ex = ExemplarSet(X, y)  # z == n
    model = init_high_order(2, 2, 2, 2, seed=0)
    with pytest.raises(ValueError, match="defeat compression"):
        train(model, ds, split, ex, cfg=CgConfig(max_epochs=1, seed=0))


def test_config_validation():
    with pytest.raises(ValueError, match="armijo_c1"):
        CgConfig(armijo_c1=2.0)
    with pytest.raises(ValueError, match="batch_size"):
        CgConfig(batch_size=1)
    with pytest.raises(ValueError, match="shrink"):
        CgConfig(shrink=1.0)
