"""Dense float64 primitives shared by every other module.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 with samples as
rows. Randomness flows exclusively through ``numpy.random.Generator``
instances created by :func:`make_rng`.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DomainError, ShapeError

FLOAT = np.float64


def make_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    """Return a PCG64 generator; an existing generator is passed through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def as_matrix(a, name: str = "array") -> np.ndarray:
    """Coerce ``a`` to a 2-D float64 array (1-D input becomes one row)."""
    a = np.asarray(a, dtype=FLOAT)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 1-D or 2-D, got shape {a.shape}")
    return a


def check_finite(a: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"{name} contains NaN or Inf")
    return a


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=FLOAT)
    b = np.asarray(b, dtype=FLOAT)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def log_softmax(logits, temperature: float = 1.0) -> np.ndarray:
    """Row-wise log-softmax of ``logits / temperature``."""
    if not temperature > 0:
        raise DomainError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=FLOAT) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits, temperature: float = 1.0) -> np.ndarray:
    """Row-wise softmax of ``logits / temperature`` with max subtraction."""
    if not temperature > 0:
        raise DomainError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=FLOAT) / temperature
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def sample_beta(rng: np.random.Generator, a: float = 1.0, b: float = 1.0, size=None):
    """Draw from Beta(a, b).

    Beta(1, 1) is a single uniform draw; other shapes use the gamma ratio
    X / (X + Y) with X ~ Gamma(a), Y ~ Gamma(b).
    """
    if not (a > 0 and b > 0):
        raise DomainError(f"Beta shapes must be positive, got a={a}, b={b}")
    if a == 1.0 and b == 1.0:
        return rng.random(size)
    x = rng.standard_gamma(a, size)
    y = rng.standard_gamma(b, size)
    return x / (x + y)


def l1_norm(v) -> float:
    return float(np.abs(np.asarray(v, dtype=FLOAT)).sum())


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DomainError(f"labels out of range for {num_classes} classes")
    out = np.zeros((labels.shape[0], num_classes), dtype=FLOAT)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out
