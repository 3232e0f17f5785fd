import numpy as np
import pytest

from enhope import embedding
from enhope.data import Dataset
from enhope.exemplars import ExemplarSet


def fd_gradient(fun, x, step=1e-5):
    """Central finite differences of a scalar function, coordinate by coordinate."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        forward = x.copy()
        backward = x.copy()
        forward.flat[i] += step
        backward.flat[i] -= step
        g.flat[i] = (fun(forward) - fun(backward)) / (2.0 * step)
    return g


def assert_grad_close(analytic, fd, rtol=1e-5):
    analytic = np.asarray(analytic).ravel()
    fd = np.asarray(fd).ravel()
    denom = np.maximum(1.0, np.abs(fd))
    rel = np.abs(analytic - fd) / denom
    assert rel.max() <= rtol, f"max relative gradient error {rel.max():.3g}"


def forward_scalar_oracle(model, X):
    """Literal triple-loop evaluation of the high-order map, one scalar at a time."""
    p = model.params
    H, h = p.input_dim, p.embed_dim
    out = np.zeros((X.shape[0], h))
    for i in range(X.shape[0]):
        xp = list(X[i]) + [1.0]
        for s in range(h):
            total = 0.0
            for k in range(p.n_hidden):
                pre = p.b[k]
                for f in range(p.n_factors):
                    t = 0.0
                    for d in range(H + 1):
                        t += p.C[d, f] * xp[d]
                    pre += p.W[f, k] * t ** p.order
                total += p.V[s, k] * (1.0 / (1.0 + np.exp(-pre)))
            out[i, s] = total
    return out


def random_high_order(rng, H=None, h=None, F=None, m=None, order=2):
    H = H or int(rng.integers(2, 9))
    h = h or int(rng.integers(1, 3))
    F = F or int(rng.integers(1, 5))
    m = m or int(rng.integers(1, 4))
    return embedding.init_high_order(H, h, F, m, order=order,
                                     seed=int(rng.integers(2**31)))


def random_labels_with_peers(rng, n, c):
    """Labels where every class that appears does so at least twice."""
    while True:
        labels = rng.integers(0, c, size=n)
        counts = np.bincount(labels, minlength=c)
        if ((counts == 0) | (counts >= 2)).all():
            return labels


def make_blobs(rng, n_per_class, centers, scale=1.0):
    """Isotropic Gaussian blobs around the given (c, H) center matrix."""
    centers = np.asarray(centers, dtype=np.float64)
    feats = []
    labels = []
    for c, mu in enumerate(centers):
        feats.append(rng.normal(loc=mu, scale=scale, size=(n_per_class, centers.shape[1])))
        labels.append(np.full(n_per_class, c))
    X = np.vstack(feats)
    y = np.concatenate(labels)
    perm = rng.permutation(X.shape[0])
    return X[perm], y[perm]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def exemplars_covering(rng, labels, z, H):
    """Random exemplar set whose labels cover every class present in labels."""
    present = np.unique(labels)
    assert z >= present.size
    e_labels = np.concatenate([present,
                               rng.choice(present, size=z - present.size)])
    return ExemplarSet(rng.normal(size=(z, H)), np.sort(e_labels))


def dataset_from(X, y):
    return Dataset(np.asarray(X, float), np.asarray(y, int),
                   int(np.max(y)) + 1)
