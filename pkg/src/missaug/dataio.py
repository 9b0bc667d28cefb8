"""Dataset loading, feature encoding, min-max scaling and fold assignment.

A dataset is a complete CSV with a header row plus a JSON schema naming the
label column (or null) and any categorical feature columns:

    {"label": "class", "categorical": ["sex"]}

Features become a float64 matrix: numerical cells are parsed as floats,
categorical cells are ordinal-encoded in order of first appearance. Labels
must be integer class ids; they are remapped to 0..C-1 preserving numeric
order. Scaling is fit on one matrix (training rows) and can be applied to
another with clipping, so test rows never leak into the scale fit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, LoadError


@dataclass
class Dataset:
    """Encoded feature matrix, optional labels and per-column metadata."""

    X: np.ndarray
    y: np.ndarray | None
    feature_names: list[str]
    column_kinds: list[str]
    name: str = ""

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        if self.y is None:
            raise ConfigError(f"dataset {self.name!r} has no label column")
        return int(self.y.max()) + 1


@dataclass
class ScaleParams:
    """Per-column min/max fitted on training rows."""

    col_min: np.ndarray
    col_max: np.ndarray

    @property
    def span(self) -> np.ndarray:
        return self.col_max - self.col_min


def _read_schema(schema_path) -> tuple[str | None, list[str]]:
    try:
        raw = json.loads(Path(schema_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise LoadError(f"cannot read schema {schema_path}: {exc}") from exc
    if not isinstance(raw, dict) or "label" not in raw or "categorical" not in raw:
        raise LoadError(f"schema {schema_path} needs 'label' and 'categorical' keys")
    label = raw["label"]
    categorical = raw["categorical"]
    if label is not None and not isinstance(label, str):
        raise LoadError(f"schema label must be a column name or null, got {label!r}")
    if not isinstance(categorical, list) or not all(isinstance(c, str) for c in categorical):
        raise LoadError("schema 'categorical' must be a list of column names")
    return label, categorical


def load_csv(csv_path, schema_path) -> Dataset:
    """Load a complete CSV per its schema into an encoded Dataset."""
    label_col, categorical = _read_schema(schema_path)
    path = Path(csv_path)
    try:
        with path.open(newline="") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise LoadError(f"{path} needs a header row and at least one data row")

    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise LoadError(f"{path} has duplicate column names in its header")
    for name in ([label_col] if label_col else []) + list(categorical):
        if name not in header:
            raise LoadError(f"schema column {name!r} not in {path} header")

    feature_names = [h for h in header if h != label_col]
    kinds = ["categorical" if h in categorical else "numerical" for h in feature_names]
    feat_idx = [header.index(h) for h in feature_names]
    label_idx = header.index(label_col) if label_col else None

    n, d = len(rows) - 1, len(feature_names)
    X = np.empty((n, d))
    labels = np.empty(n, dtype=np.int64) if label_col else None
    # first-appearance code books, one per categorical column
    codes: dict[int, dict[str, int]] = {j: {} for j, k in enumerate(kinds)
                                        if k == "categorical"}

    for i, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise LoadError(f"{path} row {i + 1}: {len(row)} cells, "
                            f"expected {len(header)}")
        for j, col in enumerate(feat_idx):
            cell = row[col].strip()
            if kinds[j] == "categorical":
                book = codes[j]
                if cell not in book:
                    book[cell] = len(book)
                X[i, j] = float(book[cell])
            else:
                try:
                    X[i, j] = float(cell)
                except ValueError:
                    raise LoadError(f"{path} row {i + 1}, column "
                                    f"{feature_names[j]!r}: cannot parse {cell!r}") from None
        if labels is not None:
            cell = row[label_idx].strip()
            try:
                labels[i] = int(cell)
            except ValueError:
                raise LoadError(f"{path} row {i + 1}, column {label_col!r}: "
                                f"label {cell!r} is not an integer class") from None

    if labels is not None:
        remap = {v: k for k, v in enumerate(sorted(set(labels.tolist())))}
        labels = np.array([remap[v] for v in labels], dtype=np.int64)

    return Dataset(X=X, y=labels, feature_names=feature_names,
                   column_kinds=kinds, name=path.stem)


def minmax_scale(X: np.ndarray) -> tuple[np.ndarray, ScaleParams]:
    """Scale each column to [0, 1]; constant columns map to zeros."""
    X = np.asarray(X, dtype=np.float64)
    params = ScaleParams(col_min=X.min(axis=0), col_max=X.max(axis=0))
    return apply_scale(X, params), params


def apply_scale(X: np.ndarray, params: ScaleParams, clip: bool = False) -> np.ndarray:
    """Scale with previously fitted params; clip=True bounds unseen rows to [0, 1]."""
    X = np.asarray(X, dtype=np.float64)
    span = params.span
    safe = np.where(span == 0.0, 1.0, span)
    out = (X - params.col_min) / safe
    out[:, span == 0.0] = 0.0
    if clip:
        np.clip(out, 0.0, 1.0, out=out)
    return out


def invert_scale(Xs: np.ndarray, params: ScaleParams) -> np.ndarray:
    """Map scaled values back to the original units; constant columns
    recover their fitted minimum exactly."""
    Xs = np.asarray(Xs, dtype=np.float64)
    return params.col_min + Xs * params.span


def make_folds(n: int, k: int, seed: int = 0) -> np.ndarray:
    """Assign each of n rows to one of k folds, sizes differing by at most 1."""
    if k < 2 or k > n:
        raise ConfigError(f"fold count {k} invalid for {n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % k
    return assignment
