"""Class-incremental learning with re-sampling mixup distillation and
incremental influence balancing, on small NumPy MLPs."""

from .estimator import EDBLClassifier
from .model import FrozenModel, Model
from .rehearsal import ExemplarStore
from .trainer import Strategy, TrainConfig, train_task

__all__ = ["EDBLClassifier", "ExemplarStore", "FrozenModel", "Model", "Strategy", "TrainConfig", "train_task"]
__version__ = "0.1.0"
