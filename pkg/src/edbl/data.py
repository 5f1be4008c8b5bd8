"""Synthetic Gaussian-cluster datasets and CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ParseError
from .numeric import FLOAT, make_rng
from .protocol import Dataset


@dataclass(frozen=True)
class SyntheticSpec:
    classes: int = 10
    dims: int = 16
    train_per_class: int = 200
    test_per_class: int = 100
    separation: float = 3.0
    noise: float = 1.0

    def __post_init__(self):
        if self.classes < 2:
            raise ConfigError("need at least 2 classes")
        if self.dims < 2:
            raise ConfigError("need at least 2 dimensions")
        if self.separation < 0 or self.noise <= 0:
            raise ConfigError("separation must be >= 0 and noise > 0")
        if self.train_per_class < 1 or self.test_per_class < 1:
            raise ConfigError("need at least one train and one test sample per class")


def class_means(spec: SyntheticSpec, rng) -> np.ndarray:
    """Means at radius ``separation``: orthonormal directions when ``classes <= dims``."""
    rng = make_rng(rng)
    g = rng.standard_normal((spec.dims, spec.classes))
    if spec.classes <= spec.dims:
        q, _ = np.linalg.qr(g)
        directions = q.T
    else:
        directions = (g / np.linalg.norm(g, axis=0)).T
    return spec.separation * directions


def generate_synthetic(spec: SyntheticSpec, rng=None) -> Dataset:
    """Isotropic Gaussian clusters; train and test drawn independently."""
    rng = make_rng(rng)
    means = class_means(spec, rng)

    def draw(per_class):
        y = np.repeat(np.arange(spec.classes), per_class)
        x = means[y] + spec.noise * rng.standard_normal((y.size, spec.dims))
        return x, y.astype(np.intp)

    x_train, y_train = draw(spec.train_per_class)
    x_test, y_test = draw(spec.test_per_class)
    return Dataset(x_train, y_train, x_test, y_test)


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file", line=1) from None
        width = len(header)
        if width < 2:
            raise ParseError(f"{path}: need a class column and at least one feature", line=1)
        labels, rows = [], []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != width:
                raise ParseError(f"{path}: expected {width} fields, got {len(row)}", line=line)
            try:
                labels.append(int(row[0]))
            except ValueError:
                raise ParseError(f"{path}: class id {row[0]!r} is not an integer", line=line) from None
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ParseError(f"{path}: {exc}", line=line) from None
    x = np.asarray(rows, dtype=FLOAT).reshape(-1, width - 1)
    if not np.all(np.isfinite(x)):
        raise ParseError(f"{path}: non-finite feature value")
    return x, np.asarray(labels, dtype=np.intp)


def load_csv(path, test_path=None, test_fraction: float = 0.25, rng=None,
             standardize: bool = True) -> Dataset:
    """Read ``class,feature1,...`` CSV files.

    Without ``test_path`` a per-class split of ``test_fraction`` is drawn
    with ``rng``. Features are z-scored with train-split statistics only.
    """
    x, y = _read_rows(path)
    if test_path is not None:
        x_test, y_test = _read_rows(test_path)
        if x_test.shape[1] != x.shape[1]:
            raise ParseError(f"{test_path}: feature count differs from {path}")
        unknown = np.setdiff1d(y_test, y)
        if unknown.size:
            bad = int(np.nonzero(np.isin(y_test, unknown))[0][0])
            raise ParseError(f"{test_path}: unknown class id {int(y_test[bad])}", line=bad + 2)
        x_train, y_train = x, y
    else:
        rng = make_rng(rng)
        test_mask = np.zeros(len(y), dtype=bool)
        for c in np.unique(y):
            idx = np.nonzero(y == c)[0]
            n_test = int(round(test_fraction * idx.size))
            if idx.size > 1:
                n_test = min(max(n_test, 1), idx.size - 1)
            else:
                n_test = 0
            test_mask[rng.permutation(idx)[:n_test]] = True
        x_train, y_train = x[~test_mask], y[~test_mask]
        x_test, y_test = x[test_mask], y[test_mask]
    if standardize and len(y_train):
        mu = x_train.mean(axis=0)
        sd = x_train.std(axis=0)
        sd[sd == 0] = 1.0
        x_train = (x_train - mu) / sd
        x_test = (x_test - mu) / sd
    return Dataset(x_train, y_train, x_test, y_test)


def write_csv(path, x, y) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class"] + [f"x{i}" for i in range(x.shape[1])])
        for label, row in zip(y, x):
            w.writerow([int(label)] + [repr(float(v)) for v in row])
