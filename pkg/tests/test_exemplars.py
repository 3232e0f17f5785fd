import numpy as np
import pytest

from enhope.exemplars import (ExemplarConfig, ExemplarSet, allocate_per_class,
                              build_exemplars, kmeans_lloyd, kmeans_per_class,
                              sample_random)
from conftest import dataset_from, make_blobs


class TestAllocate:
    def test_balanced_ten_classes(self):
        labels = np.repeat(np.arange(10), 5)
        assert allocate_per_class(labels, 10).tolist() == [1] * 10
        assert allocate_per_class(labels, 20).tolist() == [2] * 10

    def test_exact_proportions(self):
        labels = np.repeat([0, 1, 2], [70, 20, 10])
        assert allocate_per_class(labels, 10).tolist() == [7, 2, 1]

    @pytest.mark.parametrize("seed", range(10))
    def test_sums_to_z_and_covers_every_class(self, seed):
        rng = np.random.default_rng(seed)
        c = int(rng.integers(2, 8))
        labels = np.concatenate([np.full(int(rng.integers(1, 50)), k)
                                 for k in range(c)])
        z = int(rng.integers(c, 3 * c))
        counts = allocate_per_class(labels, z)
        assert counts.sum() == z
        assert counts.min() >= 1

    def test_z_below_class_count_raises(self):
        with pytest.raises(ValueError, match="smaller than the class count"):
            allocate_per_class(np.array([0, 1, 2]), 2)


class TestKmeans:
    def test_single_center_is_mean(self, rng):
        ds = dataset_from([[0.0], [2.0], [9.0]], [0, 0, 1])
        ex = kmeans_per_class(ds, [1, 1], seed=0)
        assert ex.vectors[ex.labels == 0][0, 0] == 1.0

    def test_well_separated_pairs(self, rng):
        ds = dataset_from([[0.0], [0.1], [10.0], [10.1]], [0, 0, 0, 0])
        ex = kmeans_per_class(ds, [2], seed=3)
        got = sorted(ex.vectors.ravel().tolist())
        np.testing.assert_allclose(got, [0.05, 10.05])

    def test_beats_random_exemplars_on_inertia(self, rng):
        X, y = make_blobs(rng, 60, [[0, 0], [6, 6]], scale=1.0)
        ds = dataset_from(X, y)
        km = kmeans_per_class(ds, [3, 3], seed=1)
        rand = sample_random(ds, [3, 3], seed=1)

        def inertia(ex):
            total = 0.0
            for c in range(2):
                pts = ds.features[ds.labels == c]
                centers = ex.vectors[ex.labels == c]
                d = ((pts[:, None] - centers[None]) ** 2).sum(-1).min(1)
                total += d.sum()
            return total

        assert inertia(km) <= inertia(rand)

    def test_inertia_non_increasing(self, rng):
        X = rng.normal(size=(80, 3))
        _, history = kmeans_lloyd(X, 5, np.random.default_rng(0), max_iters=50)
        diffs = np.diff(history)
        assert (diffs <= 1e-9 * np.abs(history[:-1])).all()

    def test_deterministic_under_seed(self, rng):
        X, y = make_blobs(rng, 40, [[0, 0], [5, 5]])
        ds = dataset_from(X, y)
        a = kmeans_per_class(ds, [2, 2], seed=7)
        b = kmeans_per_class(ds, [2, 2], seed=7)
        assert (a.vectors == b.vectors).all()

    def test_class_too_small_raises(self, rng):
        ds = dataset_from([[0.0], [1.0], [2.0]], [0, 0, 1])
        with pytest.raises(ValueError, match="class 1 has 1 samples"):
            kmeans_per_class(ds, [1, 2], seed=0)

    def test_centers_inside_class_bounding_box(self, rng):
        X, y = make_blobs(rng, 50, [[0, 0, 0], [8, 8, 8]], scale=2.0)
        ds = dataset_from(X, y)
        ex = kmeans_per_class(ds, [4, 4], seed=2)
        for c in range(2):
            pts = ds.features[ds.labels == c]
            centers = ex.vectors[ex.labels == c]
            assert (centers >= pts.min(axis=0) - 1e-12).all()
            assert (centers <= pts.max(axis=0) + 1e-12).all()

    def test_duplicate_points_do_not_crash(self):
        X = np.zeros((6, 2))
        centers, history = kmeans_lloyd(X, 3, np.random.default_rng(1))
        assert np.isfinite(centers).all() and history[-1] == 0.0


class TestSampleRandom:
    def test_whole_class(self, rng):
        ds = dataset_from([[1.0], [2.0], [9.0], [8.0]], [0, 0, 1, 1])
        ex = sample_random(ds, [2, 2], seed=5)
        assert sorted(ex.vectors[ex.labels == 0].ravel().tolist()) == [1.0, 2.0]

    def test_deterministic(self, rng):
        X, y = make_blobs(rng, 30, [[0], [4]])
        ds = dataset_from(X, y)
        a = sample_random(ds, [3, 3], seed=11)
        b = sample_random(ds, [3, 3], seed=11)
        assert (a.vectors == b.vectors).all()

    def test_different_seeds_differ(self, rng):
        X = rng.normal(size=(1000, 2))
        ds = dataset_from(X, np.zeros(1000, dtype=int))
        a = sample_random(ds, [10], seed=0)
        b = sample_random(ds, [10], seed=1)
        assert not (a.vectors == b.vectors).all()

    def test_samples_inside_bounding_box(self, rng):
        X, y = make_blobs(rng, 25, [[0, 0], [9, 9]])
        ds = dataset_from(X, y)
        ex = sample_random(ds, [5, 5], seed=3)
        for c in range(2):
            pts = ds.features[ds.labels == c]
            sel = ex.vectors[ex.labels == c]
            assert (sel >= pts.min(axis=0)).all() and (sel <= pts.max(axis=0)).all()


def test_labels_partition_per_allocation(rng):
    labels = np.repeat([0, 1, 2], [50, 30, 20])
    ds = dataset_from(rng.normal(size=(100, 2)), labels)
    cfg = ExemplarConfig(z=10, mode="kmeans", seed=0)
    ex = build_exemplars(ds, cfg)
    counts = allocate_per_class(labels, 10)
    assert np.bincount(ex.labels, minlength=3).tolist() == counts.tolist()
    assert ex.z == 10


def test_exemplar_config_validation():
    with pytest.raises(ValueError, match="unknown exemplar mode"):
        ExemplarConfig(mode="psychic")
    with pytest.raises(ValueError, match="kmeans_max_iters"):
        ExemplarConfig(kmeans_max_iters=0)
    assert ExemplarConfig(mode="learned_init_kmeans").trainable
    assert not ExemplarConfig(mode="random").trainable


def test_exemplar_set_shape_mismatch():
    with pytest.raises(ValueError, match="disagree on count"):
        ExemplarSet(np.zeros((3, 2)), np.zeros(2, dtype=int))
