"""Small dense neural-network toolkit with hand-written backward passes.

Only the compositions needed by the node classifiers are supported: a
:class:`Sequential` stack of layers, each exposing ``forward`` and
``backward``.  Gradients accumulate into :class:`Parameter.grad`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .graph import NormalizedAdjacency, spmm


@dataclass(eq=False)
class Parameter:
    value: np.ndarray
    weight_decay: float = 0.0
    grad: np.ndarray = field(default=None)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad.fill(0.0)


@dataclass
class TrainConfig:
    """Optimizer and early-stopping settings shared by every model kind."""

    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    max_epochs: int = 500
    patience: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if not 0 <= self.patience <= self.max_epochs:
            raise ValueError("patience must lie in [0, max_epochs]")


def glorot_init(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    if fan_in < 1 or fan_out < 1:
        raise ValueError("fan_in and fan_out must be positive")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x, axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_mask(mask, n_rows: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.int64).ravel()
    if mask.size == 0:
        raise ValueError("mask must not be empty")
    if mask.min() < 0 or mask.max() >= n_rows:
        raise IndexError("mask index out of range")
    return mask


def masked_cross_entropy(logits: np.ndarray, labels, mask) -> float:
    """Mean negative log-likelihood of ``labels`` over the rows in ``mask``."""
    mask = _check_mask(mask, logits.shape[0])
    labels = np.asarray(labels, dtype=np.int64)
    logp = log_softmax_rows(logits[mask])
    return float(-np.mean(logp[np.arange(mask.size), labels[mask]]))


def masked_cross_entropy_grad(logits: np.ndarray, labels, mask) -> np.ndarray:
    mask = _check_mask(mask, logits.shape[0])
    labels = np.asarray(labels, dtype=np.int64)
    grad = np.zeros_like(logits)
    probs = softmax_rows(logits[mask])
    probs[np.arange(mask.size), labels[mask]] -= 1.0
    # np.add.at keeps repeated mask indices correct
    np.add.at(grad, mask, probs / mask.size)
    return grad


def dropout(x: np.ndarray, p: float, training: bool, rng: np.random.Generator):
    """Inverted dropout; returns the output and the boolean keep mask (or None)."""
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must lie in [0, 1)")
    if not training or p == 0.0:
        return x, None
    keep = _keep_mask(x.shape, p, rng)
    scale = 1.0 / (1.0 - p)
    out = np.multiply(x, keep)
    out *= scale
    return out, keep


def _keep_mask(shape, p: float, rng: np.random.Generator) -> np.ndarray:
    # a byte per entry is exact when p is a multiple of 1/256 (e.g. 0.5)
    threshold = p * 256.0
    if threshold == int(threshold):
        size = int(np.prod(shape))
        return (np.frombuffer(rng.bytes(size), dtype=np.uint8) >= int(threshold)).reshape(shape)
    return rng.random(shape, dtype=np.float32) >= np.float32(p)


class Layer:
    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def parameters(self) -> List[Parameter]:
        return []


class Linear(Layer):
    def __init__(self, weight: Parameter, bias: Optional[Parameter] = None):
        self.weight = weight
        self.bias = bias
        self.input_grad = True
        self._x = None

    def forward(self, x, training=False):
        if x.shape[1] != self.weight.shape[0]:
            raise ValueError(
                f"input has {x.shape[1]} columns, weight expects {self.weight.shape[0]}"
            )
        self._x = x
        out = x @ self.weight.value
        if self.bias is not None:
            out = out + self.bias.value
        return out

    def backward(self, grad):
        self.weight.grad += self._x.T @ grad
        if self.bias is not None:
            self.bias.grad += grad.sum(axis=0, keepdims=True)
        if not self.input_grad:
            return None
        return grad @ self.weight.value.T

    def parameters(self):
        return [self.weight] + ([self.bias] if self.bias is not None else [])


class ReLU(Layer):
    def forward(self, x, training=False):
        self._active = x > 0
        return np.where(self._active, x, 0.0)

    def backward(self, grad):
        # subgradient at exactly 0 is 0
        return grad * self._active


class Identity(Layer):
    def forward(self, x, training=False):
        return x

    def backward(self, grad):
        return grad


class Dropout(Layer):
    def __init__(self, p: float, rng: np.random.Generator):
        self.p = p
        self.rng = rng
        self._keep = None

    def forward(self, x, training=False):
        out, self._keep = dropout(x, self.p, training, self.rng)
        return out

    def backward(self, grad):
        if self._keep is None:
            return grad
        return grad * self._keep * (1.0 / (1.0 - self.p))


class Propagate(Layer):
    """One-hop smoothing by the normalized adjacency (self-adjoint)."""

    def __init__(self, adj: NormalizedAdjacency):
        self.adj = adj

    def forward(self, x, training=False):
        return spmm(self.adj, x)

    def backward(self, grad):
        return spmm(self.adj, grad)


class Sequential(Layer):
    """Layer stack.  With ``input_grad=False`` the backward pass stops at the
    first layer holding parameters instead of differentiating w.r.t. the input."""

    def __init__(self, layers: List[Layer], input_grad: bool = True):
        self.layers = list(layers)
        self._stop = 0
        if not input_grad:
            for i, layer in enumerate(self.layers):
                if layer.parameters():
                    self._stop = i
                    if isinstance(layer, Linear):
                        layer.input_grad = False
                    break

    def forward(self, x, training=False):
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers[self._stop:]):
            grad = layer.backward(grad)
        return grad

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


class Adam:
    """Adam with bias correction and per-parameter L2 weight decay."""

    def __init__(self, params: List[Parameter], cfg: TrainConfig):
        self.params = list(params)
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        cfg = self.cfg
        if cfg.learning_rate == 0.0:
            return
        self.t += 1
        c1 = 1.0 - cfg.beta1**self.t
        c2 = 1.0 - cfg.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if p.weight_decay:
                g = g + p.weight_decay * p.value
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p.value -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


def adam_step(params: List[Parameter], state: Optional[Adam], cfg: TrainConfig) -> Adam:
    """Functional wrapper: create the optimizer state on first use, then step."""
    if state is None:
        state = Adam(params, cfg)
    state.step()
    return state


def finite_diff_grad(
    loss_fn: Callable[[np.ndarray], float], w: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of ``loss_fn`` at ``w`` (``w`` is not modified)."""
    w = np.array(w, dtype=np.float64)
    grad = np.zeros_like(w)
    flat = w.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = loss_fn(w)
        flat[i] = orig - eps
        minus = loss_fn(w)
        flat[i] = orig
        gflat[i] = (plus - minus) / (2.0 * eps)
    return grad
