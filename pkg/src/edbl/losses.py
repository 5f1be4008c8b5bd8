"""Cross-entropy, distillation and mixup losses with analytic logit gradients.

Every loss has a per-sample form returning ``(values, grads)`` with one row
of logit gradient per sample (unscaled by the batch size), and a batch-mean
form returning ``(scalar, grads / batch)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, ShapeError
from .numeric import FLOAT, as_matrix, log_softmax, one_hot, softmax


@dataclass(frozen=True)
class KdConfig:
    temperature: float = 2.0
    # Multiply the distillation loss by t**2. Off by default: the plain
    # temperature-softened cross-entropy is used as written.
    scale_t2: bool = False

    def __post_init__(self):
        if not self.temperature > 0:
            raise DomainError(f"temperature must be positive, got {self.temperature}")


def soft_labels(labels, num_classes: int) -> np.ndarray:
    """Integer class ids become one-hot rows; 2-D input is taken as given."""
    labels = np.asarray(labels)
    if labels.ndim == 1 and labels.dtype.kind in "iu":
        return one_hot(labels, num_classes)
    return as_matrix(labels, "labels")


def mix_labels(y_i, y_j, lam) -> np.ndarray:
    """``lam * y_i + (1 - lam) * y_j`` with ``lam`` scalar or one per row."""
    lam = np.asarray(lam, dtype=FLOAT)
    if lam.ndim == 1:
        lam = lam[:, None]
    return lam * y_i + (1.0 - lam) * y_j


def ce_per_sample(logits, labels) -> tuple[np.ndarray, np.ndarray]:
    logits = as_matrix(logits, "logits")
    y = soft_labels(labels, logits.shape[1])
    if y.shape != logits.shape:
        raise ShapeError(f"labels shape {y.shape} != logits shape {logits.shape}")
    losses = -(y * log_softmax(logits)).sum(axis=1)
    # gradient of -sum y log softmax is softmax * sum(y) - y; sum(y) == 1 for labels
    grads = softmax(logits) * y.sum(axis=1, keepdims=True) - y
    return losses, grads


def ce_loss(logits, labels) -> tuple[float, np.ndarray]:
    losses, grads = ce_per_sample(logits, labels)
    n = losses.shape[0]
    return float(losses.mean()), grads / n


def kd_per_sample(student_logits, teacher_logits, cfg: KdConfig = KdConfig(),
                  old_class_count: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Distillation of the teacher's ``m`` outputs into the first ``m`` student logits.

    Both softmaxes are taken over the ``m`` old classes only, so gradient
    columns ``m..`` are exactly zero.
    """
    s = as_matrix(student_logits, "student_logits")
    t = as_matrix(teacher_logits, "teacher_logits")
    m = t.shape[1] if old_class_count is None else int(old_class_count)
    if t.shape[1] != m:
        raise ShapeError(f"teacher has {t.shape[1]} columns, expected {m}")
    if m > s.shape[1]:
        raise ShapeError(f"old class count {m} exceeds student width {s.shape[1]}")
    if t.shape[0] != s.shape[0]:
        raise ShapeError("student and teacher batch sizes differ")
    temp = cfg.temperature
    p_teacher = softmax(t, temp)
    log_q = log_softmax(s[:, :m], temp)
    losses = -(p_teacher * log_q).sum(axis=1)
    grads = np.zeros_like(s)
    grads[:, :m] = (np.exp(log_q) - p_teacher) / temp
    if cfg.scale_t2:
        losses = losses * temp**2
        grads *= temp**2
    return losses, grads


def kd_loss(student_logits, teacher_logits, cfg: KdConfig = KdConfig(),
            old_class_count: int | None = None) -> tuple[float, np.ndarray]:
    losses, grads = kd_per_sample(student_logits, teacher_logits, cfg, old_class_count)
    n = losses.shape[0]
    return float(losses.mean()), grads / n


def _check_lambda(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=FLOAT)
    if np.any(lam < 0) or np.any(lam > 1) or not np.all(np.isfinite(lam)):
        raise DomainError("mixing coefficient must lie in [0, 1]")
    return lam


def mixup_ce_per_sample(logits, y_i, y_j, lam) -> tuple[np.ndarray, np.ndarray]:
    logits = as_matrix(logits, "logits")
    lam = _check_lambda(lam)
    c = logits.shape[1]
    li, gi = ce_per_sample(logits, soft_labels(y_i, c))
    lj, gj = ce_per_sample(logits, soft_labels(y_j, c))
    lam_col = lam[:, None] if lam.ndim == 1 else lam
    return lam * li + (1.0 - lam) * lj, lam_col * gi + (1.0 - lam_col) * gj


def mixup_ce_loss(logits, y_i, y_j, lam) -> tuple[float, np.ndarray]:
    """``lam * CE(y_i) + (1 - lam) * CE(y_j)``, batch mean."""
    losses, grads = mixup_ce_per_sample(logits, y_i, y_j, lam)
    n = losses.shape[0]
    return float(losses.mean()), grads / n
