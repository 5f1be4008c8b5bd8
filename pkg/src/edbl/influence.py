"""Influence-based sample weighting on the linear head.

For a softmax head ``f_k = softmax(W h)_k`` the cross-entropy gradient w.r.t.
``W`` is the outer product ``(f - y) h^T`` and its entrywise L1 norm factors
as ``||f - y||_1 * ||h||_1``. The factors below are those norms for the
classification loss, the distillation loss, and their combinations; the
balancing loss divides each sample's CE by its factor.

All factor functions accept single rows or batches (reduction over the last
axis). Factors are always evaluated at temperature 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .exceptions import DomainError, ShapeError, StateError
from .losses import KdConfig, ce_per_sample, kd_per_sample, mix_labels, soft_labels
from .numeric import FLOAT, softmax


@dataclass(frozen=True)
class BalanceConfig:
    alpha: float = 5e-6
    gamma: float = 100.0
    eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.gamma > 0:
            raise DomainError(f"gamma must be positive, got {self.gamma}")
        if not self.eps > 0:
            raise DomainError(f"eps must be positive, got {self.eps}")


def _l1(a) -> np.ndarray:
    return np.abs(a).sum(axis=-1)


def _arr(a) -> np.ndarray:
    return np.asarray(a, dtype=FLOAT)


def ib_factor(probs, label, h):
    """``||f(x) - y||_1 * ||h||_1``."""
    return _l1(_arr(probs) - _arr(label)) * _l1(_arr(h))


def _old_slice(f_t, f_prev, f_t_old):
    m = f_prev.shape[-1]
    if f_t_old is None:
        return f_t[..., :m]
    f_t_old = _arr(f_t_old)
    if f_t_old.shape[-1] != m:
        raise ShapeError(f"f_t_old has {f_t_old.shape[-1]} entries, teacher has {m}")
    return f_t_old


def iib_factor_joint(f_t, f_prev, label, h, f_t_old=None):
    """L1 norm of the summed CE + KD head gradient.

    ``(||[f_t - y + f_t_old - f_prev]_{:m}||_1 + ||[f_t - y]_{m:}||_1) * ||h||_1``

    ``f_t_old`` is the student distribution fed to the distillation term; it
    defaults to the first ``m`` entries of ``f_t``, giving the closed form
    ``2 f_t - y - f_prev`` on the old slice.
    """
    f_t, f_prev, y = _arr(f_t), _arr(f_prev), _arr(label)
    m = f_prev.shape[-1]
    if m == 0:
        raise DomainError("joint factor is undefined without old classes")
    if m > f_t.shape[-1]:
        raise ShapeError("teacher is wider than the student")
    old = _old_slice(f_t, f_prev, f_t_old)
    diff = f_t - y
    old_part = _l1(diff[..., :m] + old - f_prev)
    new_part = _l1(diff[..., m:])
    return (old_part + new_part) * _l1(_arr(h))


def iib_factor(f_t, f_prev, label, h, alpha: float, f_t_old=None):
    """Decomposed factor ``IB_ce + alpha * IB_kd``.

    ``IB_ce = ||f_t - y||_1 ||h||_1`` over all classes and
    ``IB_kd = ||f_t_old - f_prev||_1 ||h||_1`` over the ``m`` old classes.
    ``f_prev`` may be ``None`` or have zero columns (first task), in which
    case the distillation term vanishes.
    """
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    f_t, y, h = _arr(f_t), _arr(label), _arr(h)
    h_norm = _l1(h)
    ce_part = _l1(f_t - y) * h_norm
    if f_prev is None:
        return ce_part
    f_prev = _arr(f_prev)
    if f_prev.shape[-1] == 0 or alpha == 0.0:
        return ce_part + 0.0 * h_norm
    old = _old_slice(f_t, f_prev, f_t_old)
    return ce_part + alpha * _l1(old - f_prev) * h_norm


def iib_factor_mixed(f_t, f_prev, y_i, y_j, lam, h, alpha: float, f_t_old=None):
    """Decomposed factor for a mixed sample, with label ``lam y_i + (1 - lam) y_j``."""
    lam = _arr(lam)
    if np.any(lam < 0) or np.any(lam > 1):
        raise DomainError("mixing coefficient must lie in [0, 1]")
    y_i, y_j = _arr(y_i), _arr(y_j)
    if lam.ndim == 1 and y_i.ndim == 2:
        label = mix_labels(y_i, y_j, lam)
    else:
        label = lam * y_i + (1.0 - lam) * y_j
    return iib_factor(f_t, f_prev, label, h, alpha, f_t_old)


def class_weight(class_counts: Mapping[int, int], gamma: float) -> dict[int, float]:
    """``lambda_k = gamma * n_k^-1 / sum_i n_i^-1``; sums to ``gamma``."""
    if not class_counts:
        raise DomainError("class_counts is empty")
    if any(n < 1 for n in class_counts.values()):
        raise DomainError("every class count must be >= 1")
    inv = {k: 1.0 / n for k, n in class_counts.items()}
    total = sum(inv.values())
    return {k: gamma * v / total for k, v in inv.items()}


def class_weight_vector(class_counts: Mapping[int, int], gamma: float, num_classes: int) -> np.ndarray:
    """:func:`class_weight` laid out as an array indexed by class id."""
    weights = class_weight(class_counts, gamma)
    out = np.zeros(num_classes, dtype=FLOAT)
    for k, v in weights.items():
        out[k] = v
    return out


def mixed_sample_weight(weights: np.ndarray, label_i, label_j, lam) -> np.ndarray:
    """Per-sample ``lam * lambda_{k_i} + (1 - lam) * lambda_{k_j}``."""
    return _arr(lam) * weights[np.asarray(label_i)] + (1.0 - _arr(lam)) * weights[np.asarray(label_j)]


def iib_loss(per_sample_ce, factor, class_term, eps: float = 1e-8):
    """``class_term * ce / max(factor, eps)``, elementwise."""
    ce = _arr(per_sample_ce)
    if np.any(ce < 0):
        raise DomainError("cross-entropy values must be non-negative")
    return _arr(class_term) * ce / np.maximum(_arr(factor), eps)


@dataclass
class BalanceResult:
    value: float
    d_logits: np.ndarray
    factors: np.ndarray
    ce: np.ndarray
    kd: np.ndarray
    iib: np.ndarray
    sample_weights: np.ndarray


def overall_balancing_loss(student_logits, teacher_logits, h, labels, sample_weights,
                           alpha: float, kd_weight: float = 1.0, kd_cfg: KdConfig = KdConfig(),
                           eps: float = 1e-8, factors=None) -> BalanceResult:
    """Batch mean of ``lambda_k * CE / IIB + kd_weight * KD``.

    ``labels`` are soft (possibly mixed) label rows, ``sample_weights`` the
    per-sample class terms. Factors are recomputed from the current logits
    unless given, and always act as constants in the gradient.
    """
    if teacher_logits is None:
        raise StateError("balancing loss needs the frozen previous model")
    s = np.asarray(student_logits, dtype=FLOAT)
    t = np.asarray(teacher_logits, dtype=FLOAT)
    n, c = s.shape
    m = t.shape[1]
    y = soft_labels(labels, c)
    if factors is None:
        f_t = softmax(s)
        f_prev = softmax(t) if m else None
        f_old = softmax(s[:, :m]) if m else None
        factors = iib_factor(f_t, f_prev, y, h, alpha, f_old)
    factors = np.broadcast_to(_arr(factors), (n,))
    ce, d_ce = ce_per_sample(s, y)
    weights = _arr(sample_weights)
    scale = weights / np.maximum(factors, eps)
    iib = scale * ce
    if m:
        kd, d_kd = kd_per_sample(s, t, kd_cfg, m)
    else:
        kd, d_kd = np.zeros(n), np.zeros_like(s)
    total = iib + kd_weight * kd
    d_logits = (scale[:, None] * d_ce + kd_weight * d_kd) / n
    return BalanceResult(float(total.mean()), d_logits, np.array(factors), ce, kd, iib, weights)
