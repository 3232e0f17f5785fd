"""Parametric embedding maps f: R^H -> R^h with exact gradients.

Two variants: a shallow high-order factorized map

    y_s = sum_k V[s,k] * sigmoid(sum_f W[f,k] * (C[:,f] . x')^order + b[k])

where x' = [x; 1] absorbs bias terms so the order-th power of the factor
projections spans all feature-interaction monomials up to that degree, and a
plain linear map y = A x used as the collapsing-classes baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import NormStats


@dataclass(frozen=True)
class HighOrderParams:
    """Factorized high-order map parameters.

    C: (H+1, F) factor matrix over the bias-augmented input, W: (F, m)
    projection onto hidden units, b: (m,) hidden biases, V: (h, m) output
    projection, order: interaction degree (small positive integer).
    """

    C: np.ndarray
    W: np.ndarray
    b: np.ndarray
    V: np.ndarray
    order: int

    @property
    def input_dim(self) -> int:
        return self.C.shape[0] - 1

    @property
    def embed_dim(self) -> int:
        return self.V.shape[0]

    @property
    def n_factors(self) -> int:
        return self.C.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class LinearParams:
    """Linear map y = A x with A of shape (h, H)."""

    A: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.A.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class EmbeddingModel:
    """An embedding map plus the normalization applied to its raw inputs.

    ``forward`` operates on already-normalized inputs; callers holding raw
    data apply ``model.norm`` first (see knn.classify_with_model).
    """

    params: HighOrderParams | LinearParams
    norm: NormStats | None = None

    @property
    def input_dim(self) -> int:
        return self.params.input_dim

    @property
    def embed_dim(self) -> int:
        return self.params.embed_dim

    @property
    def is_high_order(self) -> bool:
        return isinstance(self.params, HighOrderParams)


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _int_power(T: np.ndarray, order: int) -> np.ndarray:
    # repeated multiplication: exact for small integer orders, sign-safe for odd ones
    P = T.copy()
    for _ in range(order - 1):
        P *= T
    return P


def _sigmoid(Z: np.ndarray) -> np.ndarray:
    out = np.empty_like(Z)
    pos = Z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-Z[pos]))
    ez = np.exp(Z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_input(model: EmbeddingModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ValueError(
            f"input has shape {X.shape}, expected (*, {model.input_dim})")
    return X


def forward(model: EmbeddingModel, X: np.ndarray) -> np.ndarray:
    """Embed a batch of (already normalized) input vectors, one row each."""
    X = _check_input(model, X)
    p = model.params
    if isinstance(p, LinearParams):
        return X @ p.A.T
    T = _augment(X) @ p.C
    Z = _int_power(T, p.order) @ p.W + p.b
    return _sigmoid(Z) @ p.V.T


def _high_order_intermediates(p: HighOrderParams, X: np.ndarray):
    Xp = _augment(X)
    T = Xp @ p.C
    P = _int_power(T, p.order)
    act = _sigmoid(P @ p.W + p.b)
    return Xp, T, P, act


def backward_params(model: EmbeddingModel, X: np.ndarray,
                    upstream: np.ndarray) -> np.ndarray:
    """Gradient of sum_i <upstream_i, f(x_i)> w.r.t. the flat parameter vector."""
    X = _check_input(model, X)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (X.shape[0], model.embed_dim):
        raise ValueError(
            f"upstream has shape {upstream.shape}, expected {(X.shape[0], model.embed_dim)}")
    p = model.params
    if isinstance(p, LinearParams):
        return (upstream.T @ X).ravel()
    Xp, T, P, act = _high_order_intermediates(p, X)
    dV = upstream.T @ act
    dZ = (upstream @ p.V) * act * (1.0 - act)
    db = dZ.sum(axis=0)
    dW = P.T @ dZ
    dT = (dZ @ p.W.T) * (p.order * _int_power(T, p.order - 1) if p.order > 1
                         else 1.0)
    dC = Xp.T @ dT
    return np.concatenate([dC.ravel(), dW.ravel(), db.ravel(), dV.ravel()])


def backward_inputs(model: EmbeddingModel, X: np.ndarray,
                    upstream: np.ndarray) -> np.ndarray:
    """Row-wise Jacobian-transpose products d<upstream_i, f(x_i)>/dx_i."""
    X = _check_input(model, X)
    upstream = np.asarray(upstream, dtype=np.float64)
    p = model.params
    if isinstance(p, LinearParams):
        return upstream @ p.A
    _, T, _, act = _high_order_intermediates(p, X)
    dZ = (upstream @ p.V) * act * (1.0 - act)
    dT = (dZ @ p.W.T) * (p.order * _int_power(T, p.order - 1) if p.order > 1
                         else 1.0)
    # the bias component of x' is constant: drop its gradient
    return (dT @ p.C.T)[:, :-1]


def backward_input(model: EmbeddingModel, x: np.ndarray,
                   upstream: np.ndarray) -> np.ndarray:
    """J^T upstream for a single input vector x (J the h-by-H Jacobian at x)."""
    return backward_inputs(model, np.atleast_2d(x), np.atleast_2d(upstream))[0]


def pack_params(model: EmbeddingModel) -> np.ndarray:
    p = model.params
    if isinstance(p, LinearParams):
        return p.A.ravel().copy()
    return np.concatenate([p.C.ravel(), p.W.ravel(), p.b.ravel(), p.V.ravel()])


def unpack_params(model: EmbeddingModel, vec: np.ndarray) -> EmbeddingModel:
    """Rebuild a model with the same structure from a flat parameter vector."""
    p = model.params
    vec = np.asarray(vec, dtype=np.float64)
    if isinstance(p, LinearParams):
        A = vec.reshape(p.A.shape).copy()
        return replace(model, params=LinearParams(A))
    sizes = [p.C.size, p.W.size, p.b.size, p.V.size]
    if vec.size != sum(sizes):
        raise ValueError(f"parameter vector has {vec.size} entries, expected {sum(sizes)}")
    parts = np.split(vec, np.cumsum(sizes)[:-1])
    new = HighOrderParams(parts[0].reshape(p.C.shape).copy(),
                          parts[1].reshape(p.W.shape).copy(),
                          parts[2].copy(),
                          parts[3].reshape(p.V.shape).copy(),
                          p.order)
    return replace(model, params=new)


def n_params(model: EmbeddingModel) -> int:
    return pack_params(model).size


def _uniform_fan(rng: np.random.Generator, fan_in: int, fan_out: int,
                 shape: tuple[int, ...]) -> np.ndarray:
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=shape)


def init_high_order(input_dim: int, embed_dim: int, n_factors: int,
                    n_hidden: int, order: int = 2, seed: int = 0,
                    norm: NormStats | None = None) -> EmbeddingModel:
    """Uniform fan-based init for C, W, V; zero biases; deterministic under seed."""
    if min(input_dim, embed_dim, n_factors, n_hidden, order) < 1:
        raise ValueError("all dimensions and the order must be positive")
    rng = np.random.default_rng(seed)
    C = _uniform_fan(rng, input_dim + 1, n_factors, (input_dim + 1, n_factors))
    W = _uniform_fan(rng, n_factors, n_hidden, (n_factors, n_hidden))
    V = _uniform_fan(rng, n_hidden, embed_dim, (embed_dim, n_hidden))
    b = np.zeros(n_hidden)
    return EmbeddingModel(HighOrderParams(C, W, b, V, int(order)), norm)


def init_linear(input_dim: int, embed_dim: int, seed: int = 0,
                norm: NormStats | None = None) -> EmbeddingModel:
    if min(input_dim, embed_dim) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    A = _uniform_fan(rng, input_dim, embed_dim, (embed_dim, input_dim))
    return EmbeddingModel(LinearParams(A), norm)
