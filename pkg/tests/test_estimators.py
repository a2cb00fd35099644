import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dynagraph.data import generate_synthetic
from dynagraph.estimators import SubgraphBatcher, TemporalGraphClassifier


@pytest.fixture(scope="module")
def graph():
    return generate_synthetic(3, 10, 0.4, seed=11, feature_dim=5, label_frac=0.8)


def tiny_classifier(**overrides):
    params = dict(hidden_dim=8, layers=1, k=2, epochs=3, pretrain_epochs=1,
                  eval_every=2, train_timesteps=(1, 2), test_timesteps=(3, 3),
                  seed=0)
    params.update(overrides)
    return TemporalGraphClassifier(**params)


def test_batcher_transform_snapshot(graph):
    batcher = SubgraphBatcher(k=3)
    batches = batcher.fit_transform(graph.snapshots[1])
    assert len(batches) == 10
    assert all(b.size == 4 for b in batches)


def test_batcher_transform_graph(graph):
    by_ts = SubgraphBatcher(k=2).fit(graph).transform(graph)
    assert sorted(by_ts) == [1, 2, 3]


def test_batcher_get_params_and_clone(graph):
    batcher = SubgraphBatcher(k=5, alpha=0.2)
    assert batcher.get_params()["k"] == 5
    twin = clone(batcher)
    assert twin.get_params() == batcher.get_params()


def test_classifier_requires_fit(graph):
    with pytest.raises(NotFittedError):
        tiny_classifier().predict(graph)


def test_classifier_rejects_non_graph():
    with pytest.raises(TypeError):
        tiny_classifier().fit(np.zeros((3, 3)))


def test_classifier_fit_predict_shapes(graph):
    clf = tiny_classifier().fit(graph)
    proba = clf.predict_proba(graph)
    assert proba.shape == (graph.num_nodes, 2)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
    labels = clf.predict(graph, timesteps=[3])
    assert labels.shape == (graph.snapshots[3].num_nodes,)
    assert set(labels) <= {0, 1}


def test_classifier_score_and_log(graph):
    clf = tiny_classifier().fit(graph)
    score = clf.score(graph, timesteps=[3])
    assert 0.0 <= score <= 1.0
    assert clf.run_log_.rows  # evaluation rows were recorded during fit


def test_classifier_deterministic(graph):
    a = tiny_classifier().fit(graph).predict_proba(graph)
    b = tiny_classifier().fit(graph).predict_proba(graph)
    np.testing.assert_array_equal(a, b)


def test_classifier_clone_reproduces(graph):
    clf = tiny_classifier()
    twin = clone(clf)
    pa = clf.fit(graph).predict_proba(graph)
    pb = twin.fit(graph).predict_proba(graph)
    np.testing.assert_array_equal(pa, pb)


def test_classifier_ablation_mode(graph):
    clf = tiny_classifier(ablation_no_gru=True).fit(graph)
    assert clf.net_.params["mix.w_gru"].data == 0.0
    assert clf.predict(graph).shape == (graph.num_nodes,)


def test_classifier_evaluate_report(graph):
    clf = tiny_classifier().fit(graph)
    report = clf.evaluate(graph, timesteps=[3])
    assert [m.timestep for m in report.per_timestep] == [3]


def test_classifier_without_standardization(graph):
    clf = tiny_classifier(standardize=False).fit(graph)
    assert clf.feature_mean_ is None
    assert clf.predict_proba(graph).shape == (graph.num_nodes, 2)


def test_classifier_rejects_missing_timesteps(graph):
    from dynagraph.errors import ContractError
    clf = tiny_classifier().fit(graph)
    with pytest.raises(ContractError, match="timesteps"):
        clf.predict(graph, timesteps=[9])
