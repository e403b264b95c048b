"""Node classifiers built from a propagation step and a feature extractor.

Five architectures are provided:

* ``GCN`` interleaves one-hop propagation with learned layers.
* ``SGC`` applies ``K`` propagation steps once, then a softmax regression.
* ``APPNP`` applies personalized-PageRank smoothing once, then a softmax regression.
* ``SGC_MLP`` / ``APPNP_MLP`` replace the regression head with a two-layer MLP.

Every model except GCN treats propagation as a preprocessing step: the
graph is never touched during gradient updates.
"""

from __future__ import annotations

import copy
import warnings
from dataclasses import asdict, dataclass, field
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .graph import NormalizedAdjacency, as_dense, propagate_power, propagate_ppr
from .nn import (
    Adam,
    Dropout,
    Identity,
    Layer,
    Linear,
    Parameter,
    Propagate,
    ReLU,
    Sequential,
    TrainConfig,
    glorot_init,
    masked_cross_entropy,
    masked_cross_entropy_grad,
    softmax_rows,
)

GCN = "GCN"
SGC = "SGC"
APPNP = "APPNP"
SGC_MLP = "SGC_MLP"
APPNP_MLP = "APPNP_MLP"
MODEL_KINDS = (GCN, SGC, APPNP, SGC_MLP, APPNP_MLP)

_ALIASES = {"SGC-MLP": SGC_MLP, "APPNP-MLP": APPNP_MLP}


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    k_hops: int = 2
    alpha: float = 0.1
    ppr_iters: int = 10
    ppr_tol: float = 1e-6
    hidden_dim: int = 64
    dropout_p: float = 0.5

    def __post_init__(self):
        kind = _ALIASES.get(str(self.kind).upper(), str(self.kind).upper())
        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        object.__setattr__(self, "kind", kind)
        if kind in (GCN, SGC) and self.k_hops < 1:
            raise ValueError("k_hops must be at least 1 for GCN and SGC")
        if kind == SGC_MLP and self.k_hops < 0:
            raise ValueError("k_hops must be nonnegative")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")

    @property
    def display_name(self) -> str:
        return self.kind.replace("_", "-")

    @property
    def decoupled(self) -> bool:
        return self.kind != GCN

    @property
    def has_hidden_layer(self) -> bool:
        return self.kind in (GCN, SGC_MLP, APPNP_MLP)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class ModelParams:
    """Weight matrices in layer order plus the hidden-layer biases."""

    weights: List[Parameter]
    biases: List[Parameter] = field(default_factory=list)

    def all(self) -> List[Parameter]:
        return self.weights + self.biases

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)

    def values(self) -> List[np.ndarray]:
        return [p.value for p in self.all()]


class Prediction(NamedTuple):
    probabilities: np.ndarray
    labels: np.ndarray


class TrainResult(NamedTuple):
    params: ModelParams
    history: List[Tuple[int, float, float]]
    best_epoch: int


def make_prediction(logits: np.ndarray) -> Prediction:
    probs = softmax_rows(logits)
    # argmax returns the first maximum, i.e. ties go to the lowest class
    return Prediction(probs, np.argmax(probs, axis=1))


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def init_params(
    spec: ModelSpec,
    in_dim: int,
    n_classes: int,
    rng,
    weight_decay: float = 5e-4,
) -> ModelParams:
    """Glorot weights, zero biases; weight decay on the first weight matrix only."""
    rng = _as_rng(rng)
    if not spec.has_hidden_layer:
        return ModelParams([Parameter(glorot_init(in_dim, n_classes, rng), weight_decay)])
    dims = [in_dim] + [spec.hidden_dim] * (_n_layers(spec) - 1) + [n_classes]
    weights = [
        Parameter(glorot_init(a, b, rng), weight_decay if i == 0 else 0.0)
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:]))
    ]
    biases = [Parameter(np.zeros((1, d))) for d in dims[1:-1]]
    return ModelParams(weights, biases)


def _n_layers(spec: ModelSpec) -> int:
    if spec.kind == GCN:
        return spec.k_hops
    return 2 if spec.has_hidden_layer else 1


class _Bias(Layer):
    def __init__(self, bias: Parameter):
        self.bias = bias

    def forward(self, x, training=False):
        return x + self.bias.value

    def backward(self, grad):
        self.bias.grad += grad.sum(axis=0, keepdims=True)
        return grad

    def parameters(self):
        return [self.bias]


def build_network(
    spec: ModelSpec,
    params: ModelParams,
    adj: Optional[NormalizedAdjacency] = None,
    rng=None,
    activation: Optional[type] = None,
) -> Sequential:
    """Assemble the trainable part of a model around existing parameters.

    For decoupled models the result acts on already-propagated features.
    ``activation`` overrides ReLU (``Identity`` is used by collapse checks).
    """
    rng = _as_rng(rng)
    act = activation or ReLU
    p = spec.dropout_p
    if spec.kind == GCN:
        if adj is None:
            raise ValueError("GCN needs the normalized adjacency")
        if len(params.weights) != spec.k_hops:
            raise ValueError(f"GCN with K={spec.k_hops} needs {spec.k_hops} weight matrices")
        layers: List[Layer] = []
        for i, w in enumerate(params.weights):
            layers += [Dropout(p, rng), Linear(w), Propagate(adj)]
            if i < len(params.weights) - 1:
                if params.biases:
                    layers.append(_Bias(params.biases[i]))
                layers.append(act())
        return Sequential(layers, input_grad=False)
    if spec.has_hidden_layer:
        if len(params.weights) != 2:
            raise ValueError(f"{spec.kind} needs two weight matrices")
        bias = params.biases[0] if params.biases else None
        return Sequential(
            [
                Dropout(p, rng),
                Linear(params.weights[0], bias),
                act(),
                Dropout(p, rng),
                Linear(params.weights[1]),
            ],
            input_grad=False,
        )
    if len(params.weights) != 1:
        raise ValueError(f"{spec.kind} needs exactly one weight matrix")
    return Sequential([Linear(params.weights[0])], input_grad=False)


def precompute_features(spec: ModelSpec, adj: NormalizedAdjacency, x) -> np.ndarray:
    """The parameter-free propagation a decoupled model applies before learning."""
    x = as_dense(x)
    if spec.kind == GCN:
        return x
    if spec.kind in (SGC, SGC_MLP):
        return propagate_power(adj, x, spec.k_hops)
    return propagate_ppr(adj, x, spec.alpha, spec.ppr_iters, spec.ppr_tol).features


def forward(
    spec: ModelSpec,
    adj: NormalizedAdjacency,
    x,
    params: ModelParams,
    training: bool = False,
    rng=None,
    precomputed: Optional[np.ndarray] = None,
) -> Prediction:
    inputs = precomputed if precomputed is not None else precompute_features(spec, adj, x)
    net = build_network(spec, params, adj, rng)
    return make_prediction(net.forward(inputs, training))


def gcn_forward(adj, x, params, training=False, rng=None, k_hops=None) -> Prediction:
    spec = ModelSpec(GCN, k_hops=k_hops or len(params.weights))
    return forward(spec, adj, x, params, training, rng)


def sgc_forward(adj, x, params, k: int) -> Prediction:
    # SGC accepts k=0 here (plain softmax regression); ModelSpec requires k>=1
    inputs = propagate_power(adj, x, k)
    return make_prediction(Linear(params.weights[0]).forward(inputs))


def appnp_forward(adj, x, params, alpha=0.1, iters=10, tol=1e-6) -> Prediction:
    spec = ModelSpec(APPNP, alpha=alpha, ppr_iters=iters, ppr_tol=tol)
    return forward(spec, adj, x, params)


def sgc_mlp_forward(adj, x, params, k=2, training=False, rng=None, dropout_p=0.5) -> Prediction:
    spec = ModelSpec(SGC_MLP, k_hops=k, dropout_p=dropout_p)
    return forward(spec, adj, x, params, training, rng)


def appnp_mlp_forward(
    adj, x, params, alpha=0.1, iters=10, tol=1e-6, training=False, rng=None, dropout_p=0.5
) -> Prediction:
    spec = ModelSpec(APPNP_MLP, alpha=alpha, ppr_iters=iters, ppr_tol=tol, dropout_p=dropout_p)
    return forward(spec, adj, x, params, training, rng)


def evaluate_accuracy(prediction, labels, index_set) -> float:
    idx = np.asarray(index_set, dtype=np.int64).ravel()
    if idx.size == 0:
        raise ValueError("index set must not be empty")
    predicted = prediction.labels if isinstance(prediction, Prediction) else np.asarray(prediction)
    labels = np.asarray(labels)
    return float(np.mean(predicted[idx] == labels[idx]))


def _accuracy_from_logits(logits, labels, idx) -> float:
    return float(np.mean(np.argmax(logits[idx], axis=1) == labels[idx]))


def train_model(
    spec: ModelSpec,
    adj: NormalizedAdjacency,
    x,
    labels,
    split,
    cfg: Optional[TrainConfig] = None,
    rng=None,
    n_classes: Optional[int] = None,
    precomputed: Optional[np.ndarray] = None,
) -> TrainResult:
    """Full-batch training with early stopping on validation accuracy.

    ``split`` needs ``train`` and ``val`` index arrays.  The returned
    parameters are those of the epoch with the best validation accuracy
    (earliest epoch on ties).  With an empty validation set the training
    accuracy is used for selection instead.
    """
    cfg = cfg or TrainConfig()
    rng = _as_rng(cfg.seed if rng is None else rng)
    init_rng, dropout_rng = rng.spawn(2)
    labels = np.asarray(labels, dtype=np.int64)
    train_idx = np.asarray(split.train, dtype=np.int64)
    val_idx = np.asarray(split.val, dtype=np.int64)
    if train_idx.size == 0:
        raise ValueError("training set is empty")
    if np.intersect1d(train_idx, val_idx).size:
        raise ValueError("train and validation sets overlap")
    n_classes = int(n_classes or labels.max() + 1)
    missing = np.setdiff1d(np.arange(n_classes), labels[train_idx])
    if missing.size:
        warnings.warn(f"classes {missing.tolist()} have no training nodes", RuntimeWarning)
    select_idx = val_idx if val_idx.size else train_idx

    inputs = precomputed if precomputed is not None else precompute_features(spec, adj, x)
    params = init_params(spec, inputs.shape[1], n_classes, init_rng, cfg.weight_decay)
    net = build_network(spec, params, adj, dropout_rng)
    opt = Adam(params.all(), cfg)

    best = params.copy()
    best_acc, best_epoch, stale = -1.0, 0, 0
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        net.zero_grad()
        logits = net.forward(inputs, training=True)
        loss = masked_cross_entropy(logits, labels, train_idx)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"{spec.kind}: loss became {loss} at epoch {epoch}")
        net.backward(masked_cross_entropy_grad(logits, labels, train_idx))
        opt.step()
        eval_logits = net.forward(inputs, training=False)
        acc = _accuracy_from_logits(eval_logits, labels, select_idx)
        history.append((epoch, loss, acc))
        if acc > best_acc:
            best_acc, best_epoch, stale = acc, epoch, 0
            best = params.copy()
        else:
            stale += 1
            if stale > cfg.patience:
                break
    return TrainResult(best, history, best_epoch)


def predict(
    spec: ModelSpec,
    adj: NormalizedAdjacency,
    x,
    params: ModelParams,
    precomputed: Optional[np.ndarray] = None,
) -> Prediction:
    return forward(spec, adj, x, params, training=False, precomputed=precomputed)


__all__ = [
    "APPNP",
    "APPNP_MLP",
    "GCN",
    "MODEL_KINDS",
    "SGC",
    "SGC_MLP",
    "Identity",
    "ModelParams",
    "ModelSpec",
    "Prediction",
    "TrainResult",
    "TrainingDivergedError",
    "appnp_forward",
    "appnp_mlp_forward",
    "build_network",
    "evaluate_accuracy",
    "forward",
    "gcn_forward",
    "init_params",
    "make_prediction",
    "precompute_features",
    "predict",
    "sgc_forward",
    "sgc_mlp_forward",
    "train_model",
]
