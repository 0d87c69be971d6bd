"""Dataset loading: CSV (header row) and svmlight-style text."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


class DatasetError(Exception):
    pass


@dataclass
class Dataset:
    features: np.ndarray  # (N, d) float64
    labels: np.ndarray    # (N,) float64 (class ids for classification)
    name: str = ""

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def load_dataset(path: str, fmt: str = "csv", label_col: str | None = None,
                 n_features: int | None = None, name: str | None = None) -> Dataset:
    if fmt == "csv":
        ds = _load_csv(path, label_col)
    elif fmt == "svmlight":
        ds = _load_svmlight(path, n_features)
    else:
        raise ValueError(f"unknown dataset format {fmt!r} (use csv or svmlight)")
    if name:
        ds.name = name
    return ds


def _load_csv(path: str, label_col: str | None) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if label_col is None:
            label_idx = header.index("label") if "label" in header else len(header) - 1
        else:
            if label_col not in header:
                raise DatasetError(f"{path}: no column named {label_col!r} in header")
            label_idx = header.index(label_col)
        feat_idx = [i for i in range(len(header)) if i != label_idx]
        feats: list[list[float]] = []
        labels: list[float] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError as e:
                raise DatasetError(f"{path}:{lineno}: {e}") from None
            for i, v in enumerate(vals):
                if math.isnan(v):
                    raise DatasetError(
                        f"{path}:{lineno}: NaN in column {header[i]!r}")
            feats.append([vals[i] for i in feat_idx])
            labels.append(vals[label_idx])
    if not feats:
        raise DatasetError(f"{path}: no data rows")
    return Dataset(np.array(feats, dtype=np.float64),
                   np.array(labels, dtype=np.float64), name=path)


def _load_svmlight(path: str, n_features: int | None) -> Dataset:
    """Parse 'label idx:value ...' rows with zero-based feature indices."""
    rows: list[dict[int, float]] = []
    labels: list[float] = []
    max_idx = -1
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                label = float(parts[0])
            except ValueError:
                raise DatasetError(
                    f"{path}:{lineno}: bad label {parts[0]!r}") from None
            row: dict[int, float] = {}
            for tok in parts[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise DatasetError(
                        f"{path}:{lineno}: bad feature token {tok!r}") from None
                if idx < 0:
                    raise DatasetError(f"{path}:{lineno}: negative feature index {idx}")
                if math.isnan(val):
                    raise DatasetError(f"{path}:{lineno}: NaN in feature {idx}")
                row[idx] = val
                max_idx = max(max_idx, idx)
            if math.isnan(label):
                raise DatasetError(f"{path}:{lineno}: NaN label")
            rows.append(row)
            labels.append(label)
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    d = n_features if n_features is not None else max_idx + 1
    feats = np.zeros((len(rows), d), dtype=np.float64)
    for i, row in enumerate(rows):
        for idx, val in row.items():
            if idx >= d:
                raise DatasetError(
                    f"{path}: feature index {idx} exceeds declared dimension {d}")
            feats[i, idx] = val
    return Dataset(feats, np.array(labels, dtype=np.float64), name=path)
