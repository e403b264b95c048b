"""scikit-learn compatible wrappers.

``GraphNodeClassifier`` follows the semi-supervised convention of
``sklearn.semi_supervised``: unlabeled nodes carry the label ``-1`` in ``y``
and the estimator predicts a label for every row of ``X``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import Split
from .graph import (
    NormalizedAdjacency,
    SparseGraph,
    from_scipy,
    normalize_with_self_loops,
    propagate_power,
    propagate_ppr,
)
from .models import ModelSpec, predict, precompute_features, train_model
from .nn import TrainConfig


def check_adjacency(adjacency) -> NormalizedAdjacency:
    """Accept a SparseGraph, NormalizedAdjacency, scipy sparse or dense matrix."""
    if isinstance(adjacency, NormalizedAdjacency):
        return adjacency
    if isinstance(adjacency, SparseGraph):
        return normalize_with_self_loops(adjacency)
    if adjacency is None:
        raise ValueError("an adjacency matrix is required")
    mat = sp.csr_matrix(adjacency, dtype=np.float64)
    mat = (mat + mat.T) / 2.0
    return normalize_with_self_loops(from_scipy(sp.triu(mat, k=1)))


class RandomFeatureSketch(TransformerMixin, BaseEstimator):
    """Gaussian random projection scaled by ``1 / sqrt(n_components)``."""

    def __init__(self, n_components=300, random_state=None):
        self.n_components = n_components
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        rng = np.random.default_rng(self.random_state)
        self.components_ = rng.standard_normal((X.shape[1], self.n_components))
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.components_ / np.sqrt(self.n_components)


class GraphPropagation(TransformerMixin, BaseEstimator):
    """Parameter-free smoothing of node features over a fixed graph.

    ``method="power"`` applies the normalized adjacency ``k_hops`` times;
    ``method="ppr"`` applies personalized-PageRank smoothing.
    """

    def __init__(self, adjacency=None, method="power", k_hops=2, alpha=0.1,
                 ppr_iters=10, ppr_tol=1e-6):
        self.adjacency = adjacency
        self.method = method
        self.k_hops = k_hops
        self.alpha = alpha
        self.ppr_iters = ppr_iters
        self.ppr_tol = ppr_tol

    def fit(self, X=None, y=None):
        if self.method not in ("power", "ppr"):
            raise ValueError(f"method must be 'power' or 'ppr', got {self.method!r}")
        self.adjacency_ = check_adjacency(self.adjacency)
        return self

    def transform(self, X):
        check_is_fitted(self, "adjacency_")
        X = check_array(X, dtype=np.float64)
        if self.method == "power":
            return propagate_power(self.adjacency_, X, self.k_hops)
        result = propagate_ppr(self.adjacency_, X, self.alpha, self.ppr_iters, self.ppr_tol)
        self.residual_ = result.residual
        return result.features


class GraphNodeClassifier(ClassifierMixin, BaseEstimator):
    """Transductive node classifier (GCN, SGC, APPNP, SGC_MLP or APPNP_MLP).

    Parameters mirror :class:`ModelSpec` and :class:`TrainConfig`.
    ``fit(X, y)`` trains on nodes whose label is not ``-1``; pass
    ``val_idx`` to hold some of them out for early stopping.
    """

    def __init__(self, adjacency=None, model="GCN", k_hops=2, alpha=0.1, ppr_iters=10,
                 ppr_tol=1e-6, hidden_dim=64, dropout=0.5, learning_rate=0.01,
                 weight_decay=5e-4, max_epochs=500, patience=50, random_state=None):
        self.adjacency = adjacency
        self.model = model
        self.k_hops = k_hops
        self.alpha = alpha
        self.ppr_iters = ppr_iters
        self.ppr_tol = ppr_tol
        self.hidden_dim = hidden_dim
        self.dropout = dropout
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.random_state = random_state

    def _spec(self) -> ModelSpec:
        return ModelSpec(self.model, k_hops=self.k_hops, alpha=self.alpha,
                         ppr_iters=self.ppr_iters, ppr_tol=self.ppr_tol,
                         hidden_dim=self.hidden_dim, dropout_p=self.dropout)

    def fit(self, X, y, val_idx=None):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise ValueError("y must have one entry per node")
        adj = check_adjacency(self.adjacency)
        if adj.n_nodes != X.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows, graph has {adj.n_nodes} nodes")
        labeled = np.flatnonzero(y != -1)
        if labeled.size == 0:
            raise ValueError("no labeled nodes")
        self.classes_, encoded = np.unique(y[labeled], return_inverse=True)
        codes = np.full(y.shape[0], 0, dtype=np.int64)
        codes[labeled] = encoded
        val = np.asarray([] if val_idx is None else val_idx, dtype=np.int64)
        if np.setdiff1d(val, labeled).size:
            raise ValueError("val_idx must point at labeled nodes")
        train = np.setdiff1d(labeled, val)
        split = Split(train, val, np.setdiff1d(np.arange(X.shape[0]), labeled))
        spec = self._spec()
        cfg = TrainConfig(learning_rate=self.learning_rate, weight_decay=self.weight_decay,
                          max_epochs=self.max_epochs, patience=min(self.patience, self.max_epochs))
        inputs = precompute_features(spec, adj, X)
        result = train_model(spec, adj, X, codes, split, cfg,
                             rng=np.random.default_rng(self.random_state),
                             n_classes=self.classes_.size, precomputed=inputs)
        self.adjacency_ = adj
        self.spec_ = spec
        self.params_ = result.params
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        return predict(self.spec_, self.adjacency_, X, self.params_).probabilities

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


__all__ = ["GraphNodeClassifier", "GraphPropagation", "RandomFeatureSketch", "check_adjacency"]
