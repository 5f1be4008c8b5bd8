"""Class-incremental task streams, inference modes and accuracy metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.metrics import confusion_matrix

from .exceptions import ConfigError, DomainError
from .numeric import FLOAT, make_rng

MODES = ("cnn", "nme")


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.y_train)

    @property
    def n_features(self) -> int:
        return self.x_train.shape[1]


@dataclass(frozen=True)
class Protocol:
    """``base0``: all classes split over ``phases`` tasks, ``budget`` exemplars in total.

    ``base_half``: a first task with half the classes, then ``phases``
    incremental tasks; ``budget`` exemplars per class.
    """

    kind: str = "base0"
    phases: int = 5
    budget: int = 2000

    def __post_init__(self):
        if self.kind not in ("base0", "base_half"):
            raise ConfigError(f"unknown protocol {self.kind!r}")
        if self.phases < 1:
            raise ConfigError("phases must be >= 1")

    @property
    def budget_policy(self) -> str:
        return "fixed_total" if self.kind == "base0" else "per_class"


def _chunk(classes: np.ndarray, phases: int) -> list[np.ndarray]:
    if phases > classes.size:
        raise ConfigError(f"{phases} phases for {classes.size} classes")
    size = classes.size // phases
    chunks = [classes[i * size:(i + 1) * size] for i in range(phases - 1)]
    chunks.append(classes[(phases - 1) * size:])
    return chunks


@dataclass
class TaskStream:
    """Class-disjoint tasks over a dataset relabelled in order of arrival.

    Internal class ``k`` is original class ``class_order[k]``; task ``t``
    covers a contiguous range of internal ids.
    """

    protocol: Protocol
    class_order: np.ndarray
    tasks: list[np.ndarray]
    data: Dataset = field(repr=False)

    def __len__(self) -> int:
        return len(self.tasks)

    def seen_classes(self, phase: int) -> np.ndarray:
        return np.concatenate(self.tasks[:phase + 1])

    def train(self, phase: int) -> tuple[np.ndarray, np.ndarray]:
        mask = np.isin(self.data.y_train, self.tasks[phase])
        return self.data.x_train[mask], self.data.y_train[mask]

    def test_seen(self, phase: int) -> tuple[np.ndarray, np.ndarray]:
        mask = np.isin(self.data.y_test, self.seen_classes(phase))
        return self.data.x_test[mask], self.data.y_test[mask]

    def check_disjoint(self) -> None:
        flat = np.concatenate(self.tasks)
        if np.unique(flat).size != flat.size:
            raise ConfigError("task class sets overlap")
        if not np.array_equal(np.sort(flat), np.arange(self.class_order.size)):
            raise ConfigError("tasks do not cover every class")


def split_stream(dataset: Dataset, protocol: Protocol, rng=None) -> TaskStream:
    """Shuffle the class order with ``rng``, then cut it into tasks.

    When the incremental classes do not divide evenly, the last task takes
    the remainder.
    """
    rng = make_rng(rng)
    original = np.unique(np.concatenate([dataset.y_train, dataset.y_test]))
    order = original[rng.permutation(original.size)]
    internal = np.arange(order.size)
    if protocol.kind == "base0":
        tasks = _chunk(internal, protocol.phases)
    else:
        base = math.ceil(order.size / 2)
        tasks = [internal[:base]] + _chunk(internal[base:], protocol.phases)
    lookup = {int(c): i for i, c in enumerate(order)}
    relabel = np.vectorize(lambda c: lookup[int(c)], otypes=[np.intp])
    data = Dataset(dataset.x_train, relabel(dataset.y_train), dataset.x_test, relabel(dataset.y_test))
    stream = TaskStream(protocol, order, tasks, data)
    stream.check_disjoint()
    return stream


@dataclass
class PhaseMetrics:
    phase: int
    n_seen: int
    accuracy: dict[str, float]
    per_class: dict[str, np.ndarray]
    confusion: dict[str, np.ndarray]


def cnn_predict(model, x) -> np.ndarray:
    return np.argmax(model.logits(x), axis=1)


def _metrics_for(y_true, y_pred, labels):
    cm = confusion_matrix(y_true, y_pred, labels=labels)
    support = cm.sum(axis=1)
    per_class = np.divide(np.diag(cm), support, out=np.zeros(len(labels), dtype=FLOAT), where=support > 0)
    return float(np.mean(y_true == y_pred)), per_class, cm


def evaluate_phase(model, store, stream: TaskStream, phase: int, modes=MODES) -> PhaseMetrics:
    """Accuracy on the test data of every class seen up to ``phase``."""
    x, y = stream.test_seen(phase)
    seen = stream.seen_classes(phase)
    accuracy, per_class, confusion = {}, {}, {}
    for mode in modes:
        if mode == "cnn":
            pred = cnn_predict(model, x)
        elif mode == "nme":
            pred = store.nme_classify(model, x)
        else:
            raise DomainError(f"unknown inference mode {mode!r}")
        accuracy[mode], per_class[mode], confusion[mode] = _metrics_for(y, pred, seen)
    return PhaseMetrics(phase, int(seen.size), accuracy, per_class, confusion)


def average_incremental_accuracy(metrics, mode: str = "cnn", include_first: bool = True) -> float:
    """Mean over phases of the accuracy on all classes seen so far."""
    metrics = list(metrics)
    if not include_first:
        metrics = metrics[1:]
    if not metrics:
        raise DomainError("no phases to average")
    return float(np.mean([m.accuracy[mode] for m in metrics]))
