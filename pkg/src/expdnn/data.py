"""Tabular datasets: CSV loading, one-hot targets, feature selection, bundled tables."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Malformed data or a request that does not match the dataset."""


class CsvFormatError(DataError):
    pass


class SchemaError(DataError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple[str, ...]
    target_names: tuple[str, ...]
    name: str = ""

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        targets = np.array(self.targets, dtype=np.float64)
        if targets.ndim == 1:
            targets = targets[:, None]
        if features.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        if features.shape[0] < 1 or features.shape[0] != targets.shape[0]:
            raise DataError(
                f"features have {features.shape[0]} rows but targets have {targets.shape[0]}"
            )
        names, tnames = tuple(self.feature_names), tuple(self.target_names)
        if len(names) != features.shape[1] or len(tnames) != targets.shape[1]:
            raise DataError("name lists do not match the column counts")
        for kind, lst in (("feature", names), ("target", tnames)):
            if len(set(lst)) != len(lst):
                raise DataError(f"duplicate {kind} names: {lst}")
        if not (np.all(np.isfinite(features)) and np.all(np.isfinite(targets))):
            raise DataError("dataset contains non-finite values")
        features.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "target_names", tnames)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.feature_names == other.feature_names
            and self.target_names == other.target_names
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.targets, other.targets)
        )

    __hash__ = None


@dataclass(frozen=True)
class CsvSchema:
    target_columns: tuple[str, ...]
    target_encoding: str = "numeric"

    def __post_init__(self):
        object.__setattr__(self, "target_columns", tuple(self.target_columns))
        if not self.target_columns:
            raise SchemaError("at least one target column is required")
        if self.target_encoding not in ("numeric", "one_hot_labels"):
            raise SchemaError(
                f"target_encoding must be 'numeric' or 'one_hot_labels', got {self.target_encoding!r}"
            )
        if self.target_encoding == "one_hot_labels" and len(self.target_columns) != 1:
            raise SchemaError("one_hot_labels encoding takes exactly one target column")


def one_hot(labels, classes) -> np.ndarray:
    index = {c: i for i, c in enumerate(classes)}
    out = np.zeros((len(labels), len(index)))
    for row, label in enumerate(labels):
        if label not in index:
            raise DataError(f"unknown label {label!r}; classes are {list(classes)}")
        out[row, index[label]] = 1.0
    return out


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise CsvFormatError(f"row {row}, column {col!r}: cannot parse {cell!r} as a number") from None
    if not math.isfinite(value):
        raise CsvFormatError(f"row {row}, column {col!r}: non-finite value {cell!r}")
    return value


def parse_csv(text: str, schema: CsvSchema, name: str = "") -> Dataset:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows:
        raise CsvFormatError("CSV file is empty; a header row is required")
    header = [h.strip() for h in rows[0]]
    for col in schema.target_columns:
        if col not in header:
            raise SchemaError(f"target column {col!r} not in header {header}")
    body = rows[1:]
    if not body:
        raise CsvFormatError("CSV file has a header but no data rows")
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise CsvFormatError(f"row {i} has {len(r)} fields, header has {len(header)}")

    feature_cols = [c for c in header if c not in schema.target_columns]
    idx = {c: header.index(c) for c in header}
    features = [
        [_parse_float(r[idx[c]].strip(), i, c) for c in feature_cols]
        for i, r in enumerate(body, start=2)
    ]
    if schema.target_encoding == "numeric":
        targets = [
            [_parse_float(r[idx[c]].strip(), i, c) for c in schema.target_columns]
            for i, r in enumerate(body, start=2)
        ]
        target_names = schema.target_columns
    else:
        labels = [r[idx[schema.target_columns[0]]].strip() for r in body]
        classes = list(dict.fromkeys(labels))
        targets = one_hot(labels, classes)
        target_names = tuple(classes)
    return Dataset(
        features=np.array(features, dtype=np.float64).reshape(len(body), len(feature_cols)),
        targets=targets,
        feature_names=tuple(feature_cols),
        target_names=target_names,
        name=name,
    )


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Read a headed, comma-separated UTF-8 file.

    Columns not listed in ``schema.target_columns`` become features in header
    order. With ``one_hot_labels`` the single target column holds class labels
    and is expanded with classes in order of first appearance.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_csv(text, schema, name=str(path))


def to_csv(d: Dataset) -> str:
    """Serialize with numeric targets; inverse of ``load_csv`` with that schema."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*d.feature_names, *d.target_names])
    for x, t in zip(d.features, d.targets):
        writer.writerow([repr(float(v)) for v in (*x, *t)])
    return buf.getvalue()


def select_features(d: Dataset, names) -> Dataset:
    names = tuple(names)
    missing = [n for n in names if n not in d.feature_names]
    if missing:
        raise DataError(f"unknown feature(s) {missing}; available: {list(d.feature_names)}")
    cols = [d.feature_names.index(n) for n in names]
    return Dataset(d.features[:, cols], d.targets, names, d.target_names, d.name)


def standardize(d: Dataset) -> Dataset:
    """Zero-mean, unit-variance feature columns; constant columns are left as-is."""
    mean = d.features.mean(axis=0)
    std = d.features.std(axis=0)
    safe = np.where(std > 0, std, 1.0)
    centered = np.where(std > 0, d.features - mean, d.features)
    return Dataset(centered / safe, d.targets, d.feature_names, d.target_names, d.name)


# g1..g5 -> h
_CASE1 = [
    [0.1, 0.1, 0.3, 0.5, 0.7, 0.3],
    [0.2, 0.1, 0.3, 0.5, 0.6, 0.4],
    [0.3, 0.1, 0.3, 0.5, 0.5, 0.5],
    [0.4, 0.1, 0.3, 0.5, 0.4, 0.6],
    [0.5, 0.1, 0.3, 0.5, 0.3, 0.7],
    [0.6, 0.1, 0.3, 0.5, 0.2, 0.8],
    [0.7, 0.1, 0.3, 0.5, 0.1, 0.9],
]

# q1..q4 -> r; q1 XOR q2, q3 constant 0, q4 constant 1
_CASE2 = [
    [0, 0, 0, 1, 0],
    [0, 1, 0, 1, 1],
    [1, 0, 0, 1, 1],
    [1, 1, 0, 1, 0],
]

BUILTIN_IDS = ("case1", "case2", "iris")


def builtin_dataset(case_id: str) -> Dataset:
    if case_id == "case1":
        a = np.array(_CASE1)
        return Dataset(a[:, :5], a[:, 5:], ("g1", "g2", "g3", "g4", "g5"), ("h",), "case1")
    if case_id == "case2":
        a = np.array(_CASE2, dtype=np.float64)
        return Dataset(a[:, :4], a[:, 4:], ("q1", "q2", "q3", "q4"), ("r",), "case2")
    if case_id == "iris":
        text = resources.files("expdnn.datasets").joinpath("iris.csv").read_text(encoding="utf-8")
        return parse_csv(text, CsvSchema(("species",), "one_hot_labels"), name="iris")
    raise DataError(f"unknown builtin dataset {case_id!r}; valid ids: {', '.join(BUILTIN_IDS)}")
