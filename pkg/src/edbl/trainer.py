"""Task-level training loops.

Every strategy trains the first task with plain cross-entropy. From the
second task on, a frozen copy of the previous model supplies distillation
targets and the strategy decides how each phase is run:

=============  ======================  ==============================
strategy       phase 1                 phase 2 (balancing)
=============  ======================  ==============================
baseline       CE + KD on raw data     --
vanilla-mkd    CE + KD, plain mixup    --
re-mkd         CE + KD, re-sampled     --
iib            CE + KD on raw data     IIB loss only, raw data
iib-kd         CE + KD on raw data     IIB loss + KD, raw data
edbl           CE + KD, re-sampled     IIB loss + KD, re-sampled
=============  ======================  ==============================
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import ConfigError, StateError
from .influence import BalanceConfig, class_weight_vector, mixed_sample_weight, overall_balancing_loss
from .losses import KdConfig, ce_loss, kd_loss, mix_labels, mixup_ce_loss
from .mixup import ResampleConfig, build_mixed_batch, imbalance_ratio, vanilla_mixup_batch
from .model import SGD, FrozenModel, Model
from .numeric import FLOAT, check_finite, make_rng, one_hot
from .rehearsal import ExemplarStore

logger = logging.getLogger(__name__)


class Strategy(str, enum.Enum):
    BASELINE_RKD = "baseline"
    VANILLA_MKD = "vanilla-mkd"
    IIB_ONLY = "iib"
    RE_MKD = "re-mkd"
    IIB_KD = "iib-kd"
    EDBL = "edbl"

    @property
    def phase1_data(self) -> str:
        return {Strategy.VANILLA_MKD: "vanilla", Strategy.RE_MKD: "resampled",
                Strategy.EDBL: "resampled"}.get(self, "raw")

    @property
    def balancing(self) -> bool:
        return self in (Strategy.IIB_ONLY, Strategy.IIB_KD, Strategy.EDBL)

    @property
    def balancing_kd(self) -> bool:
        return self in (Strategy.IIB_KD, Strategy.EDBL)


def parse_strategy(value) -> Strategy:
    if isinstance(value, Strategy):
        return value
    key = str(value).strip().lower().replace("_", "-")
    aliases = {"rkd": "baseline", "baseline-rkd": "baseline", "remkd": "re-mkd", "iib-only": "iib",
               "iibkd": "iib-kd", "vanilla": "vanilla-mkd", "vanillamkd": "vanilla-mkd"}
    try:
        return Strategy(aliases.get(key, key))
    except ValueError:
        raise ConfigError(f"unknown strategy {value!r}; choose from {[s.value for s in Strategy]}") from None


@dataclass
class TrainConfig:
    epochs_phase1: int = 150
    epochs_phase2: int = 100
    lr_phase1: float = 0.1
    lr_phase2: float = 0.01
    milestones_phase1: tuple[int, ...] = (60, 100, 130)
    milestones_phase2: tuple[int, ...] = (30, 60, 80)
    lr_decay: float = 0.1
    kd_weight_phase1: float = 1.0
    kd_weight_phase2: float = 1.0
    momentum: float = 0.9
    weight_decay: float = 2e-4
    batch_size: int = 128
    kd: KdConfig = field(default_factory=KdConfig)
    balance: BalanceConfig = field(default_factory=BalanceConfig)
    resample: ResampleConfig = field(default_factory=ResampleConfig)
    strategy: Strategy = Strategy.EDBL

    def __post_init__(self):
        self.strategy = parse_strategy(self.strategy)
        self.milestones_phase1 = tuple(int(m) for m in self.milestones_phase1)
        self.milestones_phase2 = tuple(int(m) for m in self.milestones_phase2)
        if self.epochs_phase1 < 0 or self.epochs_phase2 < 0:
            raise ConfigError("epoch counts must be >= 0")
        if not (self.lr_phase1 > 0 and self.lr_phase2 > 0):
            raise ConfigError("learning rates must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


def lr_at(epoch: int, base: float, milestones: Sequence[int], decay: float = 0.1) -> float:
    """Step schedule: ``base * decay**(number of milestones <= epoch)``."""
    return base * decay ** sum(1 for m in milestones if epoch >= m)


@dataclass
class TaskReport:
    task: int
    strategy: str
    log: list[dict] = field(default_factory=list)
    phase_boundaries: dict[str, tuple[int, int]] = field(default_factory=dict)
    class_weights: np.ndarray | None = None
    teacher_checksum: tuple[float, float] | None = None

    def losses(self, phase: str) -> list[float]:
        return [r["loss"] for r in self.log if r["phase"] == phase]


@dataclass
class _TaskData:
    new_x: np.ndarray
    new_y: np.ndarray
    old_x: np.ndarray
    old_y: np.ndarray
    num_classes: int

    @property
    def all_x(self) -> np.ndarray:
        return np.vstack([self.new_x, self.old_x])

    @property
    def all_y(self) -> np.ndarray:
        return np.concatenate([self.new_y, self.old_y])

    @property
    def is_old(self) -> np.ndarray:
        return np.concatenate([np.zeros(len(self.new_y), bool), np.ones(len(self.old_y), bool)])

    def counts(self) -> dict[int, int]:
        classes, counts = np.unique(self.all_y, return_counts=True)
        return {int(c): int(n) for c, n in zip(classes, counts)}


class _Emitter:
    def __init__(self, report: TaskReport, sink: Callable[[dict], None] | None):
        self.report, self.sink = report, sink

    def __call__(self, record: dict) -> None:
        record = {"task": self.report.task, "strategy": self.report.strategy, **record}
        self.report.log.append(record)
        if self.sink is not None:
            self.sink(record)
        logger.debug("%s", record)


def _minibatches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def _step(model: Model, opt: SGD, trace, d_logits, lr: float) -> None:
    grads = model.backward(trace, d_logits)
    opt.step(model, grads, lr)


def _run_plain_ce(model, data: _TaskData, cfg: TrainConfig, rng, emit) -> None:
    opt = SGD(cfg.momentum, cfg.weight_decay)
    x, y = data.all_x, data.all_y
    targets = one_hot(y, data.num_classes)
    for epoch in range(cfg.epochs_phase1):
        lr = lr_at(epoch, cfg.lr_phase1, cfg.milestones_phase1, cfg.lr_decay)
        total, seen = 0.0, 0
        for idx in _minibatches(len(y), cfg.batch_size, rng):
            trace = model.forward(x[idx])
            loss, d = ce_loss(trace.logits, targets[idx])
            check_finite(np.asarray(loss), "loss")
            _step(model, opt, trace, d, lr)
            total += loss * len(idx)
            seen += len(idx)
        emit({"phase": "phase1", "epoch": epoch, "lr": lr, "loss": total / seen, "ce": total / seen, "kd": 0.0})


def _mkd_batches(data: _TaskData, cfg: TrainConfig, rng, mode: str, ratio: float):
    """Yield ``(x, y_i, y_j, lam)`` minibatches for one epoch of phase 1 or 2."""
    n = len(data.all_y)
    c = data.num_classes
    if mode == "raw":
        x, y = data.all_x, data.all_y
        for idx in _minibatches(n, cfg.batch_size, rng):
            yi = one_hot(y[idx], c)
            yield x[idx], y[idx], y[idx], np.ones(len(idx)), yi, yi
    elif mode == "vanilla":
        x, y, is_old = data.all_x, data.all_y, data.is_old
        for idx in _minibatches(n, cfg.batch_size, rng):
            b = vanilla_mixup_batch(x[idx], y[idx], is_old[idx], rng, cfg.resample.beta)
            yield b.x, b.label_i, b.label_j, b.lam, one_hot(b.label_i, c), one_hot(b.label_j, c)
    elif mode == "resampled":
        for _ in range(math.ceil(n / cfg.batch_size)):
            b = build_mixed_batch(data.old_x, data.old_y, data.new_x, data.new_y, ratio, cfg.resample, rng)
            yield b.x, b.label_i, b.label_j, b.lam, one_hot(b.label_i, c), one_hot(b.label_j, c)
    else:
        raise ConfigError(f"unknown batch mode {mode!r}")


def phase1_mkd(model: Model, frozen: FrozenModel, data: _TaskData, cfg: TrainConfig, rng,
               emit, mode: str | None = None) -> None:
    """Phase 1: mean mixup CE + ``kd_weight_phase1`` * mean KD."""
    mode = mode or cfg.strategy.phase1_data
    ratio = imbalance_ratio(data.old_y, data.new_y) if len(data.old_y) else 1.0
    m = frozen.class_count
    opt = SGD(cfg.momentum, cfg.weight_decay)
    for epoch in range(cfg.epochs_phase1):
        lr = lr_at(epoch, cfg.lr_phase1, cfg.milestones_phase1, cfg.lr_decay)
        sums = np.zeros(3)
        seen = 0
        for x, _, _, lam, yi, yj in _mkd_batches(data, cfg, rng, mode, ratio):
            trace = model.forward(x)
            ce, d_ce = mixup_ce_loss(trace.logits, yi, yj, lam)
            kd, d_kd = kd_loss(trace.logits, frozen.logits(x), cfg.kd, m)
            loss = ce + cfg.kd_weight_phase1 * kd
            check_finite(np.asarray(loss), "phase-1 loss")
            _step(model, opt, trace, d_ce + cfg.kd_weight_phase1 * d_kd, lr)
            sums += np.array([loss, ce, kd]) * len(x)
            seen += len(x)
        sums /= max(seen, 1)
        emit({"phase": "phase1", "epoch": epoch, "lr": lr, "loss": sums[0], "ce": sums[1], "kd": sums[2]})


def phase2_balancing(model: Model, frozen: FrozenModel, data: _TaskData, cfg: TrainConfig, rng,
                     emit, mode: str | None = None, kd_weight: float | None = None) -> np.ndarray:
    """Phase 2: mean of ``lambda_k * CE / IIB + kd_weight * KD``; returns the class weights."""
    if mode is None:
        mode = "resampled" if cfg.strategy.phase1_data == "resampled" else "raw"
    if kd_weight is None:
        kd_weight = cfg.kd_weight_phase2 if cfg.strategy.balancing_kd else 0.0
    ratio = imbalance_ratio(data.old_y, data.new_y) if len(data.old_y) else 1.0
    weights = class_weight_vector(data.counts(), cfg.balance.gamma, data.num_classes)
    m = frozen.class_count
    opt = SGD(cfg.momentum, cfg.weight_decay)
    for epoch in range(cfg.epochs_phase2):
        lr = lr_at(epoch, cfg.lr_phase2, cfg.milestones_phase2, cfg.lr_decay)
        sums = np.zeros(5)
        seen = 0
        for x, li, lj, lam, yi, yj in _mkd_batches(data, cfg, rng, mode, ratio):
            trace = model.forward(x)
            res = overall_balancing_loss(
                trace.logits, frozen.logits(x), trace.h, mix_labels(yi, yj, lam),
                mixed_sample_weight(weights, li, lj, lam), cfg.balance.alpha, kd_weight, cfg.kd,
                cfg.balance.eps)
            check_finite(np.asarray(res.value), "phase-2 loss")
            _step(model, opt, trace, res.d_logits, lr)
            sums += np.array([res.value, res.iib.mean(), res.kd.mean(), res.ce.mean(), res.factors.mean()]) * len(x)
            seen += len(x)
        sums /= max(seen, 1)
        emit({"phase": "phase2", "epoch": epoch, "lr": lr, "loss": sums[0], "iib": sums[1], "kd": sums[2],
              "ce": sums[3], "factor": sums[4]})
    return weights


def train_task(model: Model, frozen: FrozenModel | None, new_x, new_y, store: ExemplarStore,
               cfg: TrainConfig, rng=None, task: int = 0, log_sink=None) -> TaskReport:
    """Learn one task in place: grow the head, train, then update the exemplars.

    ``new_y`` must hold the ids ``class_count .. class_count + n - 1``.
    """
    rng = make_rng(rng)
    new_x = np.asarray(new_x, dtype=FLOAT)
    new_y = np.asarray(new_y, dtype=np.intp)
    new_classes = np.unique(new_y)
    m = model.class_count
    expected = np.arange(m, m + new_classes.size)
    if not np.array_equal(new_classes, expected):
        raise StateError(f"new task classes must be {expected.tolist()}, got {new_classes.tolist()}")
    if m > 0 and frozen is None:
        raise StateError("a frozen previous model is required after the first task")
    if frozen is not None and frozen.class_count != m:
        raise StateError(f"frozen model has {frozen.class_count} outputs, expected {m}")

    model.expand_head(new_classes.size, rng)
    old_x, old_y = store.pool(new_x.shape[1])
    data = _TaskData(new_x, new_y, old_x, old_y, model.class_count)
    report = TaskReport(task, cfg.strategy.value)
    emit = _Emitter(report, log_sink)

    if frozen is None:
        _run_plain_ce(model, data, cfg, rng, emit)
        report.phase_boundaries["phase1"] = (0, cfg.epochs_phase1)
    else:
        before = frozen.checksum()
        phase1_mkd(model, frozen, data, cfg, rng, emit)
        report.phase_boundaries["phase1"] = (0, cfg.epochs_phase1)
        if cfg.strategy.balancing:
            report.class_weights = phase2_balancing(model, frozen, data, cfg, rng, emit)
            report.phase_boundaries["phase2"] = (cfg.epochs_phase1, cfg.epochs_phase1 + cfg.epochs_phase2)
        report.teacher_checksum = (before, frozen.checksum())

    store.update(model, new_x, new_y, new_classes, model.class_count)
    return report
