"""Exemplar memory: herding selection, budget reduction and NME inference."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, StateError
from .numeric import FLOAT

_NORM_EPS = 1e-12


def l2_normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=FLOAT)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.maximum(norm, _NORM_EPS)


def herd_select(class_samples, model, k: int) -> np.ndarray:
    """Greedy herding; returns indices into ``class_samples`` in selection order.

    At step ``i`` the sample chosen is the one that brings the mean of the
    selected normalized features closest to the mean of all normalized
    features of the class. Samples are never picked twice.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    x = np.asarray(class_samples, dtype=FLOAT)
    if x.shape[0] == 0:
        raise DomainError("class has no samples")
    feats = l2_normalize(model.features(x))
    target = feats.mean(axis=0)
    k = min(k, x.shape[0])
    chosen: list[int] = []
    available = np.ones(x.shape[0], dtype=bool)
    running = np.zeros_like(target)
    for i in range(1, k + 1):
        candidate_means = (running + feats) / i
        dist = np.linalg.norm(target - candidate_means, axis=1)
        dist[~available] = np.inf
        best = int(np.argmin(dist))
        chosen.append(best)
        available[best] = False
        running += feats[best]
    return np.asarray(chosen, dtype=np.intp)


@dataclass
class ExemplarStore:
    """Per-class exemplar inputs kept in herding order.

    ``policy`` is ``"fixed_total"`` (``budget`` shared by all classes) or
    ``"per_class"`` (``budget`` exemplars for every class).
    """

    policy: str = "fixed_total"
    budget: int = 2000
    exemplars: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.policy not in ("fixed_total", "per_class"):
            raise DomainError(f"unknown budget policy {self.policy!r}")
        if self.budget < 1:
            raise DomainError("budget must be >= 1")

    @property
    def classes(self) -> list[int]:
        return sorted(self.exemplars)

    def __len__(self) -> int:
        return sum(len(v) for v in self.exemplars.values())

    def counts(self) -> dict[int, int]:
        return {c: len(self.exemplars[c]) for c in self.classes}

    def quota(self, total_classes: int) -> int:
        if self.policy == "per_class":
            return self.budget
        return self.budget // max(total_classes, 1)

    def reduce(self, total_classes: int) -> None:
        """Truncate each class to its quota, dropping the last-selected exemplars."""
        if self.policy == "per_class":
            return
        q = self.quota(total_classes)
        for c in self.classes:
            self.exemplars[c] = self.exemplars[c][:q]

    def add_class(self, class_id: int, samples, model, total_classes: int) -> None:
        q = self.quota(total_classes)
        if q < 1:
            raise StateError(f"budget {self.budget} leaves no room for {total_classes} classes")
        samples = np.asarray(samples, dtype=FLOAT)
        order = herd_select(samples, model, q)
        self.exemplars[int(class_id)] = samples[order].copy()

    def update(self, model, x, y, new_classes, total_classes: int) -> None:
        """End-of-task management: shrink old classes, herd the new ones."""
        self.reduce(total_classes)
        y = np.asarray(y)
        for c in new_classes:
            self.add_class(int(c), np.asarray(x)[y == c], model, total_classes)
        self.check_budget()

    def check_budget(self) -> None:
        if self.policy == "fixed_total" and len(self) > self.budget:
            raise StateError(f"{len(self)} exemplars exceed budget {self.budget}")
        if self.policy == "per_class" and any(n > self.budget for n in self.counts().values()):
            raise StateError("a class exceeds its per-class budget")

    def pool(self, n_features: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        if not self.exemplars:
            return np.zeros((0, n_features or 0), dtype=FLOAT), np.zeros(0, dtype=np.intp)
        xs = [self.exemplars[c] for c in self.classes]
        ys = [np.full(len(self.exemplars[c]), c, dtype=np.intp) for c in self.classes]
        return np.vstack(xs), np.concatenate(ys)

    def class_means(self, model) -> tuple[np.ndarray, np.ndarray]:
        """Class ids and unit-norm means of normalized exemplar features."""
        ids = self.classes
        means = []
        for c in ids:
            if len(self.exemplars[c]) == 0:
                raise StateError(f"class {c} has no exemplars")
            means.append(l2_normalize(model.features(self.exemplars[c])).mean(axis=0))
        return np.asarray(ids, dtype=np.intp), l2_normalize(np.asarray(means))

    def nme_classify(self, model, queries) -> np.ndarray:
        return nme_classify(self, model, queries)

    # -- persistence ---------------------------------------------------

    def to_arrays(self, prefix: str = "store/") -> dict[str, np.ndarray]:
        policy_code = 0 if self.policy == "fixed_total" else 1
        arrays = {f"{prefix}meta": np.asarray([policy_code, self.budget], dtype=np.int64),
                  f"{prefix}classes": np.asarray(self.classes, dtype=np.int64)}
        for c in self.classes:
            arrays[f"{prefix}class{c}"] = self.exemplars[c]
        return arrays

    @classmethod
    def from_arrays(cls, arrays, prefix: str = "store/") -> "ExemplarStore":
        policy_code, budget = (int(v) for v in arrays[f"{prefix}meta"])
        store = cls("fixed_total" if policy_code == 0 else "per_class", budget)
        for c in arrays[f"{prefix}classes"]:
            store.exemplars[int(c)] = arrays[f"{prefix}class{int(c)}"].copy()
        return store


def nme_classify(store: ExemplarStore, model, queries) -> np.ndarray:
    """Nearest mean of exemplars in normalized feature space; ties go to the lowest id."""
    ids, means = store.class_means(model)
    feats = l2_normalize(model.features(queries))
    d2 = ((feats[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return ids[np.argmin(d2, axis=1)]
