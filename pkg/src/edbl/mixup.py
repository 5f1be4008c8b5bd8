"""Mixed training batches with old-class re-sampling.

A batch built by :func:`build_mixed_batch` is made of groups of
``group_size`` mixed pairs: ``ceil(N/2)`` old-old groups, ``ceil(N/2)``
old-new groups and one new-new group, where ``N`` is the per-class
imbalance between new and old data. Old sources are drawn class-uniformly
with replacement, so scarce exemplar classes are over-sampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError
from .numeric import FLOAT, sample_beta

OLD_OLD, OLD_NEW, NEW_NEW = 0, 1, 2
MIX_TYPES = ("old-old", "old-new", "new-new")


@dataclass(frozen=True)
class ResampleConfig:
    min_old_per_batch: int = 32
    batch_size: int = 128
    group_size: int | None = None
    beta: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.min_old_per_batch > self.batch_size:
            raise DomainError("min_old_per_batch must not exceed batch_size")
        if self.group_size is not None and self.group_size < 1:
            raise DomainError("group_size must be >= 1")

    @property
    def pairs_per_group(self) -> int:
        return self.group_size if self.group_size is not None else max(1, self.batch_size // 3)


@dataclass(frozen=True)
class MixedSample:
    features: np.ndarray
    label_i: int
    label_j: int
    lam: float
    mix_type: str


@dataclass
class MixedBatch:
    """Columnar batch of mixed samples.

    ``src_i``/``src_j`` index the concatenation ``[old pool; new pool]``.
    """

    x: np.ndarray
    label_i: np.ndarray
    label_j: np.ndarray
    lam: np.ndarray
    mix_type: np.ndarray
    group: np.ndarray
    group_types: np.ndarray
    src_i: np.ndarray
    src_j: np.ndarray

    def __len__(self) -> int:
        return self.x.shape[0]

    def group_counts(self) -> dict[str, int]:
        return {name: int((self.group_types == code).sum()) for code, name in enumerate(MIX_TYPES)}

    def samples(self) -> list[MixedSample]:
        return [
            MixedSample(self.x[r], int(self.label_i[r]), int(self.label_j[r]), float(self.lam[r]),
                        MIX_TYPES[self.mix_type[r]])
            for r in range(len(self))
        ]

    def distinct_old_sources(self, old_count: int) -> int:
        src = np.concatenate([self.src_i, self.src_j])
        return int(np.unique(src[src < old_count]).size)


def _per_class_mean(y) -> float:
    _, counts = np.unique(y, return_counts=True)
    return float(counts.mean())


def imbalance_ratio(old_labels, new_labels) -> float:
    """Mean samples per new class over mean samples per old class, floored at 1."""
    if len(old_labels) == 0 or len(new_labels) == 0:
        raise DomainError("both pools must be non-empty")
    return max(1.0, _per_class_mean(new_labels) / _per_class_mean(old_labels))


class _ClassUniformSampler:
    def __init__(self, labels: np.ndarray):
        order = np.argsort(labels, kind="stable")
        classes, starts, counts = np.unique(labels[order], return_index=True, return_counts=True)
        self.order, self.starts, self.counts = order, starts, counts
        self.n_classes = classes.size

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        cls = rng.integers(self.n_classes, size=size)
        offsets = np.floor(rng.random(size) * self.counts[cls]).astype(np.intp)
        return self.order[self.starts[cls] + offsets]


def _enforce_distinct_floor(draws: np.ndarray, pool_size: int, floor: int, rng) -> np.ndarray:
    """Swap duplicate draws for unused pool members until ``floor`` are distinct."""
    floor = min(floor, pool_size, draws.size)
    used = np.unique(draws)
    missing = floor - used.size
    if missing <= 0:
        return draws
    unused = np.setdiff1d(np.arange(pool_size), used, assume_unique=True)
    replacements = rng.permutation(unused)[:missing]
    _, first = np.unique(draws, return_index=True)
    duplicate_slots = np.setdiff1d(np.arange(draws.size), first)
    slots = rng.permutation(duplicate_slots)[:missing]
    draws = draws.copy()
    draws[slots] = replacements
    return draws


def build_mixed_batch(old_x, old_y, new_x, new_y, ratio: float, cfg: ResampleConfig,
                      rng: np.random.Generator) -> MixedBatch:
    """Build one re-sampled mixup batch (see module docstring).

    With an empty old pool only the new-new group is emitted.
    """
    new_x = np.asarray(new_x, dtype=FLOAT)
    new_y = np.asarray(new_y)
    if len(new_y) == 0:
        raise DomainError("new pool is empty")
    old_x = np.asarray(old_x, dtype=FLOAT).reshape(-1, new_x.shape[1])
    old_y = np.asarray(old_y)
    n_old = len(old_y)
    g = cfg.pairs_per_group
    k = math.ceil(ratio / 2) if n_old else 0

    if n_old:
        sampler = _ClassUniformSampler(old_y)
        old_draws = sampler.draw(rng, 3 * k * g)
        old_draws = _enforce_distinct_floor(old_draws, n_old, cfg.min_old_per_batch, rng)
    else:
        old_draws = np.empty(0, dtype=np.intp)
    oo_i, oo_j, on_i = old_draws[: k * g], old_draws[k * g: 2 * k * g], old_draws[2 * k * g:]
    on_j = rng.integers(len(new_y), size=k * g)
    nn = rng.integers(len(new_y), size=2 * g)

    src_i = np.concatenate([oo_i, on_i, nn[:g] + n_old]).astype(np.intp)
    src_j = np.concatenate([oo_j, on_j + n_old, nn[g:] + n_old]).astype(np.intp)
    pool_x = np.vstack([old_x, new_x])
    pool_y = np.concatenate([old_y, new_y]).astype(np.intp)

    lam = sample_beta(rng, *cfg.beta, size=src_i.size)
    x = lam[:, None] * pool_x[src_i] + (1.0 - lam[:, None]) * pool_x[src_j]
    group_types = np.array([OLD_OLD] * k + [OLD_NEW] * k + [NEW_NEW], dtype=np.intp)
    group = np.repeat(np.arange(group_types.size), g)
    return MixedBatch(
        x=x,
        label_i=pool_y[src_i],
        label_j=pool_y[src_j],
        lam=lam,
        mix_type=group_types[group],
        group=group,
        group_types=group_types,
        src_i=src_i,
        src_j=src_j,
    )


def vanilla_mixup_batch(x, y, is_old, rng: np.random.Generator, beta=(1.0, 1.0)) -> MixedBatch:
    """Plain mixup: pair each sample of a minibatch with a shuffled partner."""
    x = np.asarray(x, dtype=FLOAT)
    y = np.asarray(y, dtype=np.intp)
    is_old = np.asarray(is_old, dtype=bool)
    n = len(y)
    src_i = np.arange(n)
    src_j = rng.permutation(n)
    lam = sample_beta(rng, *beta, size=n)
    mixed = lam[:, None] * x[src_i] + (1.0 - lam[:, None]) * x[src_j]
    mix_type = np.where(is_old[src_i] & is_old[src_j], OLD_OLD,
                        np.where(is_old[src_i] | is_old[src_j], OLD_NEW, NEW_NEW))
    return MixedBatch(mixed, y[src_i], y[src_j], lam, mix_type, np.zeros(n, dtype=np.intp),
                      np.zeros(1, dtype=np.intp), src_i, src_j)


def teacher_targets(batch: MixedBatch, frozen) -> np.ndarray:
    """Teacher logits on every mixed input, new-new mixes included."""
    if len(batch) == 0:
        return np.zeros((0, frozen.class_count), dtype=FLOAT)
    return frozen.logits(batch.x)
