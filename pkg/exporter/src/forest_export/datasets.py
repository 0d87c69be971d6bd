"""Seeded synthetic stand-ins for the public benchmark datasets.

The real corpora are not redistributable here, so each entry reproduces a
dataset's shape (feature count, class count, size) from a fixed seed.
Features are min-max scaled into (0, 1) so exported thresholds stay
representable under int16 fixed-point at scale 2^15. Ranking data is a
seeded regression problem standing in for the query-document corpora.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.datasets import make_classification, make_regression
from sklearn.model_selection import train_test_split


@dataclass(frozen=True)
class DatasetShape:
    name: str
    n_features: int
    n_classes: int          # 1 marks a ranking/regression problem
    n_samples: int
    n_informative: int


SHAPES = {
    "magic": DatasetShape("magic", 10, 2, 10000, 6),
    "adult": DatasetShape("adult", 108, 2, 8000, 12),
    "eeg": DatasetShape("eeg", 14, 2, 8000, 8),
    # image-shaped sets are 2000-row subsamples to keep exports small
    "mnist": DatasetShape("mnist", 784, 10, 2000, 24),
    "fashion": DatasetShape("fashion", 784, 10, 2000, 24),
    "ranking": DatasetShape("ranking", 20, 1, 6000, 10),
}


def _scale_unit(X: np.ndarray) -> np.ndarray:
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return 0.01 + 0.98 * (X - lo) / span


def synthesize(name: str, seed: int):
    """(features, labels, task) for one named shape."""
    try:
        shape = SHAPES[name]
    except KeyError:
        raise ValueError(
            f"unknown dataset {name!r}; known: {', '.join(sorted(SHAPES))}") from None
    if shape.n_classes == 1:
        X, y = make_regression(n_samples=shape.n_samples,
                               n_features=shape.n_features,
                               n_informative=shape.n_informative,
                               noise=2.0, random_state=seed)
        y = y / max(1.0, np.abs(y).max())
        task = "ranking"
    else:
        X, y = make_classification(
            n_samples=shape.n_samples, n_features=shape.n_features,
            n_informative=shape.n_informative,
            n_redundant=min(4, shape.n_features - shape.n_informative),
            n_classes=shape.n_classes, n_clusters_per_class=2,
            class_sep=1.2, flip_y=0.05, random_state=seed)
        task = "classification"
    return _scale_unit(X), y.astype(np.float64), task


def split(X, y, ratio: float, seed: int):
    """Deterministic train/test split (default callers pass 0.2)."""
    return train_test_split(X, y, test_size=ratio, random_state=seed)


def two_point_dataset():
    """The minimal training set: one point per class."""
    X = np.array([[0.2], [0.8]])
    y = np.array([0.0, 1.0])
    return X, y


def write_csv(path, X, y) -> None:
    header = ",".join(f"f{j}" for j in range(X.shape[1])) + ",label"
    lines = [header]
    for row, label in zip(X, y):
        lab = repr(float(label)) if label != int(label) else str(int(label))
        lines.append(",".join(repr(float(v)) for v in row) + f",{lab}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
