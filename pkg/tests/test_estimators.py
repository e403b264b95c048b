import numpy as np
import pytest
from sklearn.base import clone
from sklearn.linear_model import LogisticRegression
from sklearn.pipeline import make_pipeline

from gnnregime.data import sketch_features
from gnnregime.estimators import (
    GraphNodeClassifier,
    GraphPropagation,
    RandomFeatureSketch,
    check_adjacency,
)
from gnnregime.graph import normalize_with_self_loops, propagate_power, propagate_ppr


def test_sketch_matches_functional_form(rng):
    x = rng.standard_normal((6, 10))
    est = RandomFeatureSketch(4, random_state=3).fit(x)
    np.testing.assert_allclose(est.transform(x), sketch_features(x, 4, rng=3), atol=1e-12)
    with pytest.raises(ValueError):
        est.transform(np.ones((2, 9)))


def test_params_and_clone(separable):
    est = GraphNodeClassifier(separable.graph, model="APPNP", alpha=0.2, random_state=1)
    params = est.get_params()
    assert params["model"] == "APPNP" and params["alpha"] == 0.2
    twin = clone(est)
    assert twin is not est and twin.get_params()["alpha"] == 0.2
    assert est.set_params(alpha=0.3).alpha == 0.3


@pytest.mark.parametrize("adjacency", ["graph", "scipy", "dense", "normalized"])
def test_adjacency_inputs_agree(separable, adjacency):
    g = separable.graph
    form = {"graph": g, "scipy": g.to_scipy(), "dense": g.to_dense(),
            "normalized": normalize_with_self_loops(g)}[adjacency]
    np.testing.assert_allclose(check_adjacency(form).to_dense(),
                               normalize_with_self_loops(g).to_dense(), atol=1e-15)


def test_propagation_transformer(separable):
    adj = normalize_with_self_loops(separable.graph)
    x = separable.features
    np.testing.assert_array_equal(GraphPropagation(adj, k_hops=3).fit_transform(x),
                                  propagate_power(adj, x, 3))
    ppr = GraphPropagation(adj, method="ppr", alpha=0.2).fit_transform(x)
    np.testing.assert_array_equal(ppr, propagate_ppr(adj, x, 0.2).features)
    with pytest.raises(ValueError):
        GraphPropagation(adj, method="heat").fit(x)


def test_pipeline_with_logistic_regression(separable):
    train = np.arange(0, separable.n_nodes, 2)
    test = np.arange(1, separable.n_nodes, 2)
    pipe = make_pipeline(RandomFeatureSketch(8, random_state=0),
                         GraphPropagation(separable.graph),
                         LogisticRegression(max_iter=1000))
    # the propagation step acts on all nodes, so fit and score on the full matrix
    x_all = pipe[:-1].fit_transform(separable.features)
    pipe[-1].fit(x_all[train], separable.labels[train])
    assert pipe[-1].score(x_all[test], separable.labels[test]) > 0.95


@pytest.mark.parametrize("model", ["GCN", "SGC", "APPNP", "SGC-MLP", "APPNP-MLP"])
def test_classifier_fit_predict(separable, model):
    y = np.where(np.arange(separable.n_nodes) % 2 == 0, separable.labels, -1)
    clf = GraphNodeClassifier(separable.graph, model=model, max_epochs=100, patience=100,
                              random_state=0).fit(separable.features, y)
    pred = clf.predict(separable.features)
    assert pred.shape == (separable.n_nodes,)
    assert np.mean(pred[1::2] == separable.labels[1::2]) > 0.9
    np.testing.assert_allclose(clf.predict_proba(separable.features).sum(axis=1), 1.0, atol=1e-12)


def test_classifier_keeps_label_values(separable):
    y_num = np.where(np.arange(separable.n_nodes) % 3 == 0, separable.labels * 10 + 5, -1)
    clf = GraphNodeClassifier(separable.graph, model="SGC", max_epochs=50, patience=50,
                              random_state=0).fit(separable.features, y_num)
    assert clf.classes_.tolist() == [5, 15, 25]
    assert set(clf.predict(separable.features)) <= {5, 15, 25}


def test_classifier_validation_holdout(separable):
    y = separable.labels.copy()
    y[separable.n_nodes // 2:] = -1
    clf = GraphNodeClassifier(separable.graph, model="SGC", max_epochs=30, patience=5,
                              random_state=0).fit(separable.features, y, val_idx=np.arange(10))
    assert 1 <= clf.best_epoch_ <= len(clf.history_) <= 30


def test_classifier_errors(separable):
    clf = GraphNodeClassifier(separable.graph)
    with pytest.raises(ValueError):
        clf.fit(separable.features, -np.ones(separable.n_nodes))
    with pytest.raises(ValueError):
        clf.fit(separable.features[:5], separable.labels[:5])
    with pytest.raises(ValueError, match="labeled"):
        y = np.where(np.arange(separable.n_nodes) < 20, separable.labels, -1)
        clf.fit(separable.features, y, val_idx=[50])
    with pytest.raises(ValueError):
        GraphNodeClassifier(None).fit(separable.features, separable.labels)
