"""Dense MLP layers with hand-written backpropagation, BCE loss and Adam.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 in C order.
Everything here is a pure function of its inputs; randomness only enters
through an explicitly passed ``numpy.random.Generator``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionError, EmptyInputError, NumericError

PROB_CLAMP = 1e-12


class Activation(str, enum.Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    NONE = "none"


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z: np.ndarray, act: Activation) -> np.ndarray:
    if act is Activation.RELU:
        return np.maximum(z, 0.0)
    if act is Activation.SIGMOID:
        return _sigmoid(z)
    return z


@dataclass
class DenseLayer:
    W: np.ndarray
    b: np.ndarray
    activation: Activation = Activation.NONE

    def __post_init__(self) -> None:
        self.W = np.ascontiguousarray(self.W, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64).reshape(-1)
        self.activation = Activation(self.activation)
        if self.W.ndim != 2 or self.b.shape[0] != self.W.shape[1]:
            raise DimensionError(f"inconsistent layer shapes W{self.W.shape} b{self.b.shape}")

    @property
    def in_features(self) -> int:
        return self.W.shape[0]

    @property
    def out_features(self) -> int:
        return self.W.shape[1]

    @classmethod
    def init(cls, n_in: int, n_out: int, activation: Activation | str,
             rng: np.random.Generator) -> "DenseLayer":
        """Glorot-uniform weights, zero biases."""
        limit = np.sqrt(6.0 / (n_in + n_out))
        W = rng.uniform(-limit, limit, size=(n_in, n_out))
        return cls(W, np.zeros(n_out), Activation(activation))

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.W.copy(), self.b.copy(), self.activation)


class LayerCache(NamedTuple):
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    layer: DenseLayer


def as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {a.shape}")
    return a


def linear_forward(x, layer: DenseLayer) -> tuple[np.ndarray, LayerCache]:
    x = as_matrix(x)
    if x.shape[1] != layer.in_features:
        raise DimensionError(
            f"input has {x.shape[1]} columns, layer expects {layer.in_features}")
    z = x @ layer.W + layer.b
    y = _activate(z, layer.activation)
    return y, LayerCache(x, z, y, layer)


def linear_backward(grad_y, cache: LayerCache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(grad_x, grad_W, grad_b)`` for one layer."""
    grad_y = as_matrix(grad_y)
    if grad_y.shape != cache.y.shape:
        raise DimensionError(
            f"gradient shape {grad_y.shape} does not match output {cache.y.shape}")
    act = cache.layer.activation
    if act is Activation.RELU:
        grad_z = grad_y * (cache.z > 0)
    elif act is Activation.SIGMOID:
        grad_z = grad_y * cache.y * (1.0 - cache.y)
    else:
        grad_z = grad_y
    grad_W = cache.x.T @ grad_z
    grad_b = grad_z.sum(axis=0)
    grad_x = grad_z @ cache.layer.W.T
    return grad_x, grad_W, grad_b


def bce_loss(probs, labels) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy on probabilities and its gradient w.r.t. them."""
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if p.size == 0:
        raise EmptyInputError("bce_loss on an empty batch")
    if p.shape != y.shape:
        raise DimensionError(f"{p.shape[0]} probabilities vs {y.shape[0]} labels")
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    n = p.shape[0]
    loss = -np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)) / n
    grad = (p - y) / (p * (1.0 - p)) / n
    return float(loss), grad


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 0.0002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float = 0.0002,
                   beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                   0, lr, beta1, beta2, eps)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
              state: AdamState) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update. Inputs are not mutated."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError("params, grads and optimizer state differ in length")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionError(f"shape mismatch {p.shape} / {g.shape} / {m.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient passed to adam_step")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        new_params.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v, t, state.lr, b1, b2, state.eps)


@dataclass
class MLP:
    """A stack of dense layers trained as one unit by its owner."""

    layers: list[DenseLayer] = field(default_factory=list)

    @classmethod
    def build(cls, widths: Sequence[int], activations: Sequence[Activation | str],
              rng: np.random.Generator) -> "MLP":
        if len(widths) - 1 != len(activations):
            raise DimensionError("need one activation per layer")
        return cls([DenseLayer.init(a, b, act, rng)
                    for a, b, act in zip(widths[:-1], widths[1:], activations)])

    @property
    def in_features(self) -> int:
        return self.layers[0].in_features

    @property
    def out_features(self) -> int:
        return self.layers[-1].out_features

    @property
    def widths(self) -> list[int]:
        return [self.in_features] + [layer.out_features for layer in self.layers]

    def forward(self, x) -> tuple[np.ndarray, list[LayerCache]]:
        caches = []
        h = as_matrix(x)
        for layer in self.layers:
            h, cache = linear_forward(h, layer)
            caches.append(cache)
        return h, caches

    def backward(self, grad_y, caches: list[LayerCache]) -> tuple[np.ndarray, list[np.ndarray]]:
        """Return the input gradient and parameter gradients ordered like :meth:`params`."""
        grads: list[np.ndarray] = []
        g = grad_y
        for cache in reversed(caches):
            g, gW, gb = linear_backward(g, cache)
            grads[:0] = [gW, gb]
        return g, grads

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.W, layer.b]
        return out

    def set_params(self, params: Sequence[np.ndarray]) -> None:
        if len(params) != 2 * len(self.layers):
            raise DimensionError("parameter list does not match layer count")
        for i, layer in enumerate(self.layers):
            layer.W, layer.b = params[2 * i], params[2 * i + 1]

    def copy(self) -> "MLP":
        return MLP([layer.copy() for layer in self.layers])
