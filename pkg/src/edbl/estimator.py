"""Scikit-learn compatible incremental classifier.

``partial_fit`` learns one class-incremental task (all of its classes must be
new); ``fit`` starts over and learns a single task. Labels are mapped to
internal ids in order of arrival, sorted within a task.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .model import Model
from .numeric import make_rng, softmax
from .rehearsal import ExemplarStore
from .trainer import TrainConfig, train_task


class EDBLClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Class-incremental MLP classifier trained with rehearsal and distillation.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int, default=(64, 32)
        ReLU layer widths; the last is the feature dimension.
    train_config : TrainConfig or None
        Optimisation and strategy settings. ``None`` uses ``TrainConfig()``.
    strategy : str or None
        Overrides ``train_config.strategy`` when given.
    memory_budget : int, default=2000
    budget_policy : {"fixed_total", "per_class"}
    inference : {"cnn", "nme"}
        Used by ``predict``: arg-max of the logits, or nearest mean of exemplars.
    random_state : int or None
    """

    def __init__(self, hidden_layer_sizes=(64, 32), train_config=None, strategy=None,
                 memory_budget=2000, budget_policy="fixed_total", inference="cnn", random_state=None):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.train_config = train_config
        self.strategy = strategy
        self.memory_budget = memory_budget
        self.budget_policy = budget_policy
        self.inference = inference
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        cfg = self.train_config if self.train_config is not None else TrainConfig()
        if self.strategy is not None:
            cfg = replace(cfg, strategy=self.strategy)
        return cfg

    def _reset(self, n_features: int) -> None:
        self.rng_ = make_rng(self.random_state)
        self.n_features_in_ = n_features
        self.model_ = Model(n_features, self.hidden_layer_sizes, rng=self.rng_)
        self.store_ = ExemplarStore(self.budget_policy, self.memory_budget)
        self.frozen_ = None
        self.classes_ = np.empty(0)
        self.task_classes_ = []
        self.reports_ = []

    def fit(self, X, y, log_sink=None):
        X, y = check_X_y(X, y)
        self._reset(X.shape[1])
        return self._learn_task(X, y, log_sink)

    def partial_fit(self, X, y, log_sink=None):
        X, y = check_X_y(X, y)
        if not hasattr(self, "model_"):
            self._reset(X.shape[1])
        elif X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self._learn_task(X, y, log_sink)

    def _learn_task(self, X, y, log_sink):
        new = np.unique(y)
        seen = np.intersect1d(new, self.classes_)
        if seen.size:
            raise ValueError(f"classes {seen.tolist()} were learned in an earlier task")
        classes = new if self.classes_.size == 0 else np.concatenate([self.classes_, new])
        internal = np.searchsorted(new, y) + self.classes_.size
        report = train_task(self.model_, self.frozen_, X, internal, self.store_, self._config(),
                            self.rng_, task=len(self.task_classes_), log_sink=log_sink)
        self.frozen_ = self.model_.freeze()
        self.classes_ = classes
        self.task_classes_.append(new)
        self.reports_.append(report)
        return self

    def _check(self, X):
        check_is_fitted(self, "model_")
        return check_array(X)

    def decision_function(self, X):
        return self.model_.logits(self._check(X))

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X, inference=None):
        X = self._check(X)
        mode = inference or self.inference
        if mode == "cnn":
            idx = np.argmax(self.model_.logits(X), axis=1)
        elif mode == "nme":
            idx = self.store_.nme_classify(self.model_, X)
        else:
            raise ValueError(f"unknown inference mode {mode!r}")
        return self.classes_[idx]

    def transform(self, X):
        """Hidden features fed to the linear head."""
        return self.model_.features(self._check(X))
