from dataclasses import replace

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from edbl import EDBLClassifier, TrainConfig
from edbl.mixup import ResampleConfig
from edbl.trainer import Strategy

FAST = TrainConfig(epochs_phase1=4, epochs_phase2=2, lr_phase1=0.05, lr_phase2=0.01, milestones_phase1=(),
                   milestones_phase2=(), batch_size=16,
                   resample=ResampleConfig(min_old_per_batch=2, batch_size=16, group_size=4))


def blobs(labels, per_class=25, dim=3, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.random.default_rng(100 + seed).normal(scale=4, size=(len(labels), dim))
    y = np.repeat(labels, per_class)
    x = np.repeat(centers, per_class, axis=0) + rng.normal(size=(y.size, dim))
    return x, y


def make(**kw):
    params = dict(hidden_layer_sizes=(8,), train_config=FAST, memory_budget=10, random_state=0)
    params.update(kw)
    return EDBLClassifier(**params)


def test_params_round_trip():
    clf = make(strategy="re-mkd")
    params = clf.get_params()
    assert params["strategy"] == "re-mkd" and params["memory_budget"] == 10
    twin = clone(clf)
    assert twin.get_params()["train_config"] == FAST
    clf.set_params(inference="nme")
    assert clf.inference == "nme"


def test_strategy_overrides_config():
    assert make(strategy="iib")._config().strategy is Strategy.IIB_ONLY
    assert make()._config().strategy is FAST.strategy


def test_fit_predict_labels():
    x, y = blobs(["cat", "dog", "emu"])
    clf = make(train_config=replace(FAST, epochs_phase1=30)).fit(x, y)
    assert list(clf.classes_) == ["cat", "dog", "emu"]
    assert set(clf.predict(x)) <= {"cat", "dog", "emu"}
    assert clf.score(x, y) > 0.8
    np.testing.assert_allclose(clf.predict_proba(x).sum(axis=1), 1.0)


def test_partial_fit_grows_classes():
    x1, y1 = blobs([3, 7])
    x2, y2 = blobs([1, 9], seed=1)
    clf = make().partial_fit(x1, y1).partial_fit(x2, y2)
    assert list(clf.classes_) == [3, 7, 1, 9]
    assert clf.decision_function(x2).shape == (50, 4)
    assert len(clf.reports_) == 2
    assert clf.store_.counts() == {0: 2, 1: 2, 2: 2, 3: 2}
    assert set(clf.predict(x2, inference="nme")) <= {1, 3, 7, 9}


def test_repeated_class_rejected():
    x, y = blobs([0, 1])
    clf = make().partial_fit(x, y)
    with pytest.raises(ValueError, match="earlier task"):
        clf.partial_fit(x, y)


def test_feature_count_checked():
    x, y = blobs([0, 1])
    clf = make().partial_fit(x, y)
    with pytest.raises(ValueError):
        clf.partial_fit(x[:, :2], y + 5)


def test_fit_resets():
    x1, y1 = blobs([0, 1])
    x2, y2 = blobs([2, 3], seed=1)
    clf = make().partial_fit(x1, y1).fit(x2, y2)
    assert list(clf.classes_) == [2, 3]


def test_not_fitted():
    with pytest.raises(NotFittedError):
        make().predict(np.zeros((1, 3)))


def test_transform_gives_features():
    x, y = blobs([0, 1])
    clf = make().fit(x, y)
    assert clf.transform(x).shape == (50, 8)
    assert np.all(clf.transform(x) >= 0)


def test_bad_inference_mode():
    x, y = blobs([0, 1])
    with pytest.raises(ValueError):
        make().fit(x, y).predict(x, inference="knn")


def test_random_state_reproducible():
    x, y = blobs([0, 1, 2])
    a = make().fit(x, y).decision_function(x)
    b = make().fit(x, y).decision_function(x)
    assert a.tobytes() == b.tobytes()
