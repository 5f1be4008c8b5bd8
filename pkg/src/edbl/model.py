"""Feed-forward learner with a bias-free linear head that grows per task.

The feature extractor is a ReLU MLP (possibly with zero hidden layers, in
which case the feature ``h`` is the raw input). The head maps ``h`` to one
logit per class seen so far; its row ``k`` is the weight vector of class
``k``. All gradients are computed by explicit backpropagation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import checkpoint
from .exceptions import DomainError, ShapeError
from .numeric import FLOAT, as_matrix, make_rng, relu


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]
    h: np.ndarray
    logits: np.ndarray


@dataclass
class GradientSet:
    hidden: list[tuple[np.ndarray, np.ndarray]]
    head: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        out = []
        for dw, db in self.hidden:
            out.extend((dw, db))
        out.append(self.head)
        return out


@dataclass
class HeadLayer:
    weights: np.ndarray  # (class_count, feature_dim)
    old_class_count: int = 0

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]


class Model:
    """MLP feature extractor plus linear head.

    Parameters
    ----------
    input_dim : int
    hidden_dims : sequence of int
        Widths of the ReLU layers; the last one is the feature dimension.
        Empty means the head reads the inputs directly.
    n_classes : int
        Initial number of head rows (usually 0; grown with ``expand_head``).
    rng : seed or Generator
    """

    def __init__(self, input_dim: int, hidden_dims: Sequence[int] = (), n_classes: int = 0, rng=None):
        rng = make_rng(rng)
        self.input_dim = int(input_dim)
        self.hidden: list[tuple[np.ndarray, np.ndarray]] = []
        fan_in = self.input_dim
        for width in hidden_dims:
            w = rng.standard_normal((fan_in, width)) * np.sqrt(2.0 / fan_in)
            self.hidden.append((w, np.zeros(width, dtype=FLOAT)))
            fan_in = int(width)
        self.head = HeadLayer(np.zeros((0, fan_in), dtype=FLOAT))
        if n_classes:
            self.expand_head(n_classes, rng)
            self.head.old_class_count = 0

    @property
    def feature_dim(self) -> int:
        return self.head.weights.shape[1]

    @property
    def class_count(self) -> int:
        return self.head.class_count

    @property
    def old_class_count(self) -> int:
        return self.head.old_class_count

    @property
    def hidden_dims(self) -> list[int]:
        return [w.shape[1] for w, _ in self.hidden]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in self.hidden:
            out.extend((w, b))
        out.append(self.head.weights)
        return out

    def forward(self, inputs) -> ForwardTrace:
        x = as_matrix(inputs, "inputs")
        if x.shape[1] != self.input_dim:
            raise ShapeError(f"expected {self.input_dim} input features, got {x.shape[1]}")
        pre, acts = [], []
        a = x
        for w, b in self.hidden:
            z = a @ w + b
            a = relu(z)
            pre.append(z)
            acts.append(a)
        logits = a @ self.head.weights.T
        return ForwardTrace(x, pre, acts, a, logits)

    def features(self, inputs) -> np.ndarray:
        return self.forward(inputs).h

    def logits(self, inputs) -> np.ndarray:
        return self.forward(inputs).logits

    def backward(self, trace: ForwardTrace, d_logits) -> GradientSet:
        """Gradients of a scalar loss given its gradient w.r.t. the logits."""
        d_logits = np.asarray(d_logits, dtype=FLOAT)
        if d_logits.shape != trace.logits.shape:
            raise ShapeError(f"d_logits shape {d_logits.shape} != logits shape {trace.logits.shape}")
        d_head = d_logits.T @ trace.h
        grad = d_logits @ self.head.weights
        hidden_grads = []
        for i in range(len(self.hidden) - 1, -1, -1):
            w, _ = self.hidden[i]
            dz = grad * (trace.pre_activations[i] > 0)
            a_prev = trace.activations[i - 1] if i > 0 else trace.inputs
            hidden_grads.append((a_prev.T @ dz, dz.sum(axis=0)))
            grad = dz @ w.T
        hidden_grads.reverse()
        return GradientSet(hidden_grads, d_head)

    def expand_head(self, new_classes: int, rng=None) -> "Model":
        """Append ``new_classes`` head rows; existing rows are untouched."""
        if new_classes < 1:
            raise DomainError(f"new_classes must be >= 1, got {new_classes}")
        rng = make_rng(rng)
        rows = rng.standard_normal((new_classes, self.feature_dim)) / np.sqrt(self.feature_dim)
        previous = self.head.class_count
        self.head = HeadLayer(np.vstack([self.head.weights, rows]), old_class_count=previous)
        return self

    def freeze(self) -> "FrozenModel":
        return FrozenModel(self)

    def copy(self) -> "Model":
        clone = Model.__new__(Model)
        clone.input_dim = self.input_dim
        clone.hidden = [(w.copy(), b.copy()) for w, b in self.hidden]
        clone.head = HeadLayer(self.head.weights.copy(), self.head.old_class_count)
        return clone

    # -- persistence ---------------------------------------------------

    def to_arrays(self, prefix: str = "model/") -> dict[str, np.ndarray]:
        meta = [self.input_dim, len(self.hidden), *self.hidden_dims, self.class_count, self.old_class_count]
        arrays = {f"{prefix}meta": np.asarray(meta, dtype=np.int64)}
        for i, (w, b) in enumerate(self.hidden):
            arrays[f"{prefix}hidden{i}.weight"] = w
            arrays[f"{prefix}hidden{i}.bias"] = b
        arrays[f"{prefix}head.weight"] = self.head.weights
        return arrays

    @classmethod
    def from_arrays(cls, arrays, prefix: str = "model/") -> "Model":
        meta = [int(v) for v in arrays[f"{prefix}meta"]]
        n_hidden = meta[1]
        model = cls.__new__(cls)
        model.input_dim = meta[0]
        model.hidden = [
            (arrays[f"{prefix}hidden{i}.weight"].copy(), arrays[f"{prefix}hidden{i}.bias"].copy())
            for i in range(n_hidden)
        ]
        model.head = HeadLayer(arrays[f"{prefix}head.weight"].copy(), old_class_count=meta[-1])
        return model

    def save(self, path) -> None:
        checkpoint.save(path, self.to_arrays())

    @classmethod
    def load(cls, path) -> "Model":
        return cls.from_arrays(checkpoint.load(path))


class FrozenModel:
    """Read-only snapshot of a model at the end of a task (the teacher)."""

    def __init__(self, model: Model):
        self._model = model.copy()
        for arr in self._model.parameters():
            arr.flags.writeable = False

    @property
    def class_count(self) -> int:
        return self._model.class_count

    @property
    def feature_dim(self) -> int:
        return self._model.feature_dim

    def forward(self, inputs) -> ForwardTrace:
        return self._model.forward(inputs)

    def logits(self, inputs) -> np.ndarray:
        return self._model.forward(inputs).logits

    def features(self, inputs) -> np.ndarray:
        return self._model.forward(inputs).h

    def checksum(self) -> float:
        return float(sum(np.abs(p).sum() for p in self._model.parameters()))


@dataclass
class SGD:
    """SGD with heavy-ball momentum and L2 weight decay.

    ``v <- momentum * v + grad + weight_decay * param``; ``param <- param - lr * v``.
    Velocity buffers reset whenever parameter shapes change (head growth).
    """

    momentum: float = 0.9
    weight_decay: float = 2e-4
    velocity: list[np.ndarray] = field(default_factory=list)

    def reset(self) -> None:
        self.velocity = []

    def step(self, model: Model, grads: GradientSet, lr: float) -> None:
        if not lr > 0:
            raise DomainError(f"learning rate must be positive, got {lr}")
        params = model.parameters()
        g = grads.arrays()
        if len(self.velocity) != len(params) or any(v.shape != p.shape for v, p in zip(self.velocity, params)):
            self.velocity = [np.zeros_like(p) for p in params]
        for p, gp, v in zip(params, g, self.velocity):
            v *= self.momentum
            v += gp
            if self.weight_decay:
                v += self.weight_decay * p
            p -= lr * v


def sgd_step(model: Model, grads: GradientSet, lr: float, momentum: float = 0.0,
             weight_decay: float = 0.0, state: SGD | None = None) -> SGD:
    """Functional form of :meth:`SGD.step`; returns the (possibly new) state."""
    if state is None:
        state = SGD(momentum, weight_decay)
    else:
        state.momentum, state.weight_decay = momentum, weight_decay
    state.step(model, grads, lr)
    return state
