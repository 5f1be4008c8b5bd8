"""Experiment configuration, YAML (de)serialisation and named presets.

Schema (all sections optional; missing keys take the dataclass defaults)::

    name: str
    dataset:
      kind: synthetic | csv
      synthetic: {classes, dims, train_per_class, test_per_class, separation, noise}
      csv: {train: path, test: path or null, test_fraction: float}
    protocol: {kind: base0 | base_half, phases: int, budget: int}
    model: {hidden: [int, ...]}
    train:
      epochs_phase1, epochs_phase2, lr_phase1, lr_phase2, milestones_phase1,
      milestones_phase2, lr_decay, kd_weight_phase1, kd_weight_phase2,
      momentum, weight_decay, batch_size
      kd: {temperature, scale_t2}
      balance: {alpha, gamma, eps}
      resample: {min_old_per_batch, batch_size, group_size, beta}
    strategies: [baseline, vanilla-mkd, iib, re-mkd, iib-kd, edbl]
    seeds: [int, ...]
    output: directory
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields, replace

import yaml

from .data import SyntheticSpec
from .exceptions import ConfigError
from .influence import BalanceConfig
from .losses import KdConfig
from .mixup import ResampleConfig
from .protocol import Protocol
from .trainer import TrainConfig, parse_strategy

ABLATION_STRATEGIES = ("baseline", "vanilla-mkd", "iib", "re-mkd", "iib-kd", "edbl")


@dataclass
class DatasetConfig:
    kind: str = "synthetic"
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    csv_train: str | None = None
    csv_test: str | None = None
    test_fraction: float = 0.25

    def __post_init__(self):
        if self.kind not in ("synthetic", "csv"):
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "csv" and not self.csv_train:
            raise ConfigError("csv dataset needs a train path")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    protocol: Protocol = field(default_factory=Protocol)
    hidden: tuple[int, ...] = (64, 32)
    train: TrainConfig = field(default_factory=TrainConfig)
    strategies: tuple[str, ...] = ("baseline", "edbl")
    seeds: tuple[int, ...] = (0,)
    output: str = "runs"

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.strategies = tuple(parse_strategy(s).value for s in self.strategies)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.strategies:
            raise ConfigError("no strategies selected")
        if not self.seeds:
            raise ConfigError("no seeds selected")

    def train_config(self, strategy) -> TrainConfig:
        return replace(self.train, strategy=parse_strategy(strategy))

    # -- serialisation -------------------------------------------------

    def to_dict(self) -> dict:
        t = asdict(self.train)
        t["strategy"] = self.train.strategy.value
        t["milestones_phase1"] = list(t["milestones_phase1"])
        t["milestones_phase2"] = list(t["milestones_phase2"])
        t["resample"]["beta"] = list(t["resample"]["beta"])
        dataset = {"kind": self.dataset.kind, "synthetic": asdict(self.dataset.synthetic)}
        if self.dataset.kind == "csv":
            dataset["csv"] = {"train": self.dataset.csv_train, "test": self.dataset.csv_test,
                              "test_fraction": self.dataset.test_fraction}
        return {
            "name": self.name,
            "dataset": dataset,
            "protocol": asdict(self.protocol),
            "model": {"hidden": list(self.hidden)},
            "train": t,
            "strategies": list(self.strategies),
            "seeds": list(self.seeds),
            "output": self.output,
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d or {})
        unknown = set(d) - {"name", "dataset", "protocol", "model", "train", "strategies", "seeds", "output"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        try:
            ds = d.get("dataset", {}) or {}
            csv_part = ds.get("csv", {}) or {}
            dataset = DatasetConfig(
                kind=ds.get("kind", "synthetic"),
                synthetic=SyntheticSpec(**(ds.get("synthetic", {}) or {})),
                csv_train=csv_part.get("train"),
                csv_test=csv_part.get("test"),
                test_fraction=float(csv_part.get("test_fraction", 0.25)),
            )
            train = _train_from_dict(d.get("train", {}) or {})
            return cls(
                name=d.get("name", "experiment"),
                dataset=dataset,
                protocol=Protocol(**(d.get("protocol", {}) or {})),
                hidden=tuple((d.get("model", {}) or {}).get("hidden", (64, 32))),
                train=train,
                strategies=tuple(d.get("strategies", ("baseline", "edbl"))),
                seeds=tuple(d.get("seeds", (0,))),
                output=d.get("output", "runs"),
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(yaml.safe_load(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_yaml(fh.read())


def _train_from_dict(t: dict) -> TrainConfig:
    t = dict(t)
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(t) - known
    if unknown:
        raise ConfigError(f"unknown train keys: {sorted(unknown)}")
    if "kd" in t:
        t["kd"] = KdConfig(**t["kd"])
    if "balance" in t:
        t["balance"] = BalanceConfig(**t["balance"])
    if "resample" in t:
        r = dict(t["resample"])
        if "beta" in r:
            r["beta"] = tuple(float(b) for b in r["beta"])
        t["resample"] = ResampleConfig(**r)
    return TrainConfig(**t)


# -- presets -------------------------------------------------------------

# Batch size, weight decay and momentum shared by all published runs.
_REFERENCE_OPT = dict(batch_size=128, weight_decay=2e-4, momentum=0.9)
_CIFAR_SCHEDULE = dict(epochs_phase1=150, lr_phase1=0.1, milestones_phase1=(60, 100, 130),
                       epochs_phase2=100, lr_phase2=0.01, milestones_phase2=(30, 60, 80))
_TINY_SCHEDULE = dict(epochs_phase1=250, lr_phase1=0.1, milestones_phase1=(75, 125, 175, 225),
                      epochs_phase2=150, lr_phase2=0.01, milestones_phase2=(60, 100, 130))

# (dataset, protocol, phases) -> (gamma, alpha)
REFERENCE_SETTINGS = {
    ("cifar10", "base0", 2): (10.0, 1e-6),
    ("cifar10", "base0", 5): (100.0, 5e-6),
    ("cifar100", "base0", 2): (100.0, 5e-6),
    ("cifar100", "base0", 5): (300.0, 5e-6),
    ("cifar100", "base0", 10): (100.0, 5e-6),
    ("cifar100", "base_half", 5): (300.0, 5e-6),
    ("cifar100", "base_half", 10): (100.0, 5e-6),
    ("tinyimagenet", "base_half", 5): (10.0, 1e-6),
    ("tinyimagenet", "base_half", 10): (10.0, 5e-6),
}
_CLASSES = {"cifar10": 10, "cifar100": 100, "tinyimagenet": 200}
_BASE0_BUDGET = {"cifar10": 200, "cifar100": 2000}
_PER_CLASS_BUDGET = 20


def _reference_preset(dataset: str, kind: str, phases: int) -> ExperimentConfig:
    gamma, alpha = REFERENCE_SETTINGS[(dataset, kind, phases)]
    schedule = _TINY_SCHEDULE if dataset == "tinyimagenet" else _CIFAR_SCHEDULE
    budget = _BASE0_BUDGET[dataset] if kind == "base0" else _PER_CLASS_BUDGET
    train = TrainConfig(**schedule, **_REFERENCE_OPT, balance=BalanceConfig(alpha=alpha, gamma=gamma),
                        resample=ResampleConfig(min_old_per_batch=32, batch_size=128))
    tag = kind.replace("_", "")
    return ExperimentConfig(
        name=f"{dataset}-{tag}-{phases}",
        dataset=DatasetConfig(synthetic=SyntheticSpec(classes=_CLASSES[dataset], dims=64)),
        protocol=Protocol(kind, phases, budget),
        train=train,
        strategies=("baseline", "edbl"),
        output=f"runs/{dataset}-{tag}-{phases}",
    )


def desk_preset() -> ExperimentConfig:
    """Desk-scale Base-0 stream: 10 Gaussian classes in 16-D, 5 phases, 40 exemplars."""
    train = TrainConfig(
        epochs_phase1=30, epochs_phase2=20,
        lr_phase1=0.05, lr_phase2=0.005,
        milestones_phase1=(20,), milestones_phase2=(15,),
        batch_size=32, momentum=0.9, weight_decay=2e-4,
        kd=KdConfig(temperature=2.0),
        balance=BalanceConfig(alpha=5e-6, gamma=10.0),
        resample=ResampleConfig(min_old_per_batch=8, batch_size=32, group_size=10),
    )
    return ExperimentConfig(
        name="desk-base0-5",
        dataset=DatasetConfig(synthetic=SyntheticSpec(10, 16, 200, 100, separation=3.0, noise=1.0)),
        protocol=Protocol("base0", 5, 40),
        hidden=(64, 32),
        train=train,
        strategies=("baseline", "re-mkd", "iib-kd", "edbl"),
        seeds=(0, 1, 2, 3, 4),
        output="runs/desk-base0-5",
    )


def preset_names() -> list[str]:
    names = ["desk-base0-5"]
    for dataset, kind, phases in REFERENCE_SETTINGS:
        names.append(f"{dataset}-{kind.replace('_', '')}-{phases}")
    return names


def load_preset(name: str) -> ExperimentConfig:
    if name == "desk-base0-5":
        return desk_preset()
    for dataset, kind, phases in REFERENCE_SETTINGS:
        if name == f"{dataset}-{kind.replace('_', '')}-{phases}":
            return _reference_preset(dataset, kind, phases)
    raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
