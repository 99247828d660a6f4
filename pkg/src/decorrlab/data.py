"""Dataset container, tabular CSV ingestion, splits, and serialization.

A LabeledDataset is the (S, X, Y) triple used everywhere: features X as
an (n, m) float array, an integer sensitive label S per row (possibly the
product of several raw attributes, e.g. gender x relationship), and an
optional integer target label Y.  Tabular ingestion one-hot encodes
categorical columns and min-max normalizes continuous columns into [0, 1],
always using statistics from the split the metadata was built on;
applying those statistics to a later file never mutates them, and values
that fall outside the training range are clamped (with a count kept on
the resulting dataset).
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import RngState

__all__ = [
    "ColumnCodec",
    "DatasetMeta",
    "LabeledDataset",
    "load_tabular_csv",
    "split_dataset",
    "save_dataset",
    "load_dataset",
]

DATASET_FORMAT_VERSION = 1

ROLES = ("sensitive", "target", "categorical", "continuous", "drop")


@dataclass
class ColumnCodec:
    """How one raw column maps into the encoded dataset."""

    name: str
    role: str
    categories: list[str] | None = None  # categorical/sensitive/target columns
    value_range: tuple[float, float] | None = None  # continuous columns
    x_start: int | None = None  # slice [x_start, x_stop) of X for this column
    x_stop: int | None = None


@dataclass
class DatasetMeta:
    columns: list[ColumnCodec]
    s_labels: list[str]
    y_labels: list[str] | None = None


@dataclass
class LabeledDataset:
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray | None = None
    meta: DatasetMeta | None = None
    clamped: int = 0  # continuous cells clamped into the training range

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.s = np.asarray(self.s, dtype=np.int64)
        if self.x.ndim != 2 or self.s.shape != (self.x.shape[0],):
            raise ValueError("x must be (n, m) and s must be (n,)")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.int64)
            if self.y.shape != self.s.shape:
                raise ValueError("y must match the number of rows")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(
            self.x[idx],
            self.s[idx],
            None if self.y is None else self.y[idx],
            self.meta,
            self.clamped,
        )


def _is_float(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file, expected a header row")
    return rows[0], rows[1:]


def load_tabular_csv(path, schema: dict, meta: DatasetMeta | None = None) -> LabeledDataset:
    """Read a header-ed CSV into a LabeledDataset.

    ``schema`` maps every column name to a role: sensitive | target |
    categorical | continuous | drop.  Several sensitive columns combine
    into a single product label.  Pass ``meta`` from a previously loaded
    (training) file to reuse its category maps and normalization ranges;
    unseen categories then raise, and out-of-range continuous values are
    clamped with a count recorded on the result.
    """
    header, rows = _read_csv(path)
    unknown = [c for c in header if c not in schema]
    if unknown:
        raise ValueError(f"{path}: schema does not cover columns {unknown}")
    for name, role in schema.items():
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r} for column {name!r}")
    col_idx = {name: i for i, name in enumerate(header)}
    sensitive_cols = [c for c in header if schema[c] == "sensitive"]
    target_cols = [c for c in header if schema[c] == "target"]
    if not sensitive_cols:
        raise ValueError("schema must mark at least one sensitive column")
    if len(target_cols) > 1:
        raise ValueError("at most one target column is supported")

    if meta is None:
        codecs = []
        for name in header:
            role = schema[name]
            codec = ColumnCodec(name=name, role=role)
            if role in ("sensitive", "target", "categorical"):
                codec.categories = sorted({row[col_idx[name]] for row in rows})
            elif role == "continuous":
                values = []
                for r, row in enumerate(rows):
                    cell = row[col_idx[name]]
                    if not _is_float(cell):
                        raise ValueError(
                            f"{path}: non-numeric value {cell!r} in continuous "
                            f"column {name!r} at data row {r}"
                        )
                    values.append(float(cell))
                lo, hi = min(values), max(values)
                codec.value_range = (lo, hi)
            codecs.append(codec)
        s_labels = None  # filled below
        y_labels = None
        meta_out = DatasetMeta(columns=codecs, s_labels=[], y_labels=None)
    else:
        by_name = {c.name: c for c in meta.columns}
        missing = [c for c in header if c not in by_name]
        if missing:
            raise ValueError(f"{path}: columns {missing} absent from supplied metadata")
        meta_out = meta

    codecs = {c.name: c for c in meta_out.columns}

    # Assemble X column layout.
    x_width = 0
    for name in header:
        codec = codecs[name]
        if codec.role == "categorical":
            codec.x_start = x_width
            codec.x_stop = x_width + len(codec.categories)
            x_width = codec.x_stop
        elif codec.role == "continuous":
            codec.x_start = x_width
            codec.x_stop = x_width + 1
            x_width = codec.x_stop

    n = len(rows)
    x = np.zeros((n, x_width))
    clamped = 0
    for r, row in enumerate(rows):
        for name in header:
            codec = codecs[name]
            cell = row[col_idx[name]]
            if codec.role == "categorical":
                try:
                    j = codec.categories.index(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}: unknown category {cell!r} in column {name!r} "
                        f"at data row {r} (known: {codec.categories})"
                    ) from None
                x[r, codec.x_start + j] = 1.0
            elif codec.role == "continuous":
                if not _is_float(cell):
                    raise ValueError(
                        f"{path}: non-numeric value {cell!r} in continuous "
                        f"column {name!r} at data row {r}"
                    )
                lo, hi = codec.value_range
                value = (float(cell) - lo) / (hi - lo) if hi > lo else 0.5
                if value < 0.0 or value > 1.0:
                    clamped += 1
                    value = min(max(value, 0.0), 1.0)
                x[r, codec.x_start] = value

    # Sensitive product label.
    def _lookup(codec, cell, r):
        try:
            return codec.categories.index(cell)
        except ValueError:
            raise ValueError(
                f"{path}: unknown category {cell!r} in column {codec.name!r} "
                f"at data row {r} (known: {codec.categories})"
            ) from None

    s = np.zeros(n, dtype=np.int64)
    sizes = [len(codecs[c].categories) for c in sensitive_cols]
    for r, row in enumerate(rows):
        code = 0
        for name, size in zip(sensitive_cols, sizes):
            code = code * size + _lookup(codecs[name], row[col_idx[name]], r)
        s[r] = code
    if not meta_out.s_labels:
        labels = [""]
        for name in sensitive_cols:
            labels = [
                (prefix + "|" if prefix else "") + cat
                for prefix in labels
                for cat in codecs[name].categories
            ]
        meta_out.s_labels = labels

    y = None
    if target_cols:
        codec = codecs[target_cols[0]]
        y = np.array([_lookup(codec, row[col_idx[target_cols[0]]], r) for r, row in enumerate(rows)], dtype=np.int64)
        if meta_out.y_labels is None:
            meta_out.y_labels = list(codec.categories)

    if clamped:
        warnings.warn(f"{path}: clamped {clamped} continuous cells into the training range")
    return LabeledDataset(x, s, y, meta_out, clamped)


def split_dataset(dataset: LabeledDataset, test_fraction: float, rng: RngState):
    """Disjoint, exhaustive train/test split, stratified by S.

    Within each sensitive group, floor(f * n_g + 0.5) rows go to the test
    side, so group proportions in the test split match the full dataset to
    within one sample.
    """
    if not (0.0 < test_fraction < 1.0):
        raise ValueError("test fraction must lie strictly between 0 and 1")
    test_idx = []
    train_idx = []
    for group in np.unique(dataset.s):
        members = np.flatnonzero(dataset.s == group)
        members = members[rng.permutation(members.size)]
        k = int(np.floor(test_fraction * members.size + 0.5))
        test_idx.append(members[:k])
        train_idx.append(members[k:])
    test_idx = np.sort(np.concatenate(test_idx))
    train_idx = np.sort(np.concatenate(train_idx))
    if test_idx.size == 0 or train_idx.size == 0:
        raise ValueError("split fraction leaves one side empty")
    return dataset.subset(train_idx), dataset.subset(test_idx)


def _meta_to_json(meta: DatasetMeta | None):
    if meta is None:
        return None
    return {
        "columns": [
            {
                "name": c.name,
                "role": c.role,
                "categories": c.categories,
                "value_range": list(c.value_range) if c.value_range else None,
                "x_start": c.x_start,
                "x_stop": c.x_stop,
            }
            for c in meta.columns
        ],
        "s_labels": meta.s_labels,
        "y_labels": meta.y_labels,
    }


def _meta_from_json(obj) -> DatasetMeta | None:
    if obj is None:
        return None
    return DatasetMeta(
        columns=[
            ColumnCodec(
                name=c["name"],
                role=c["role"],
                categories=c["categories"],
                value_range=tuple(c["value_range"]) if c["value_range"] else None,
                x_start=c["x_start"],
                x_stop=c["x_stop"],
            )
            for c in obj["columns"]
        ],
        s_labels=obj["s_labels"],
        y_labels=obj["y_labels"],
    )


def save_dataset(dataset: LabeledDataset, path) -> None:
    """Write <path> (CSV) plus a <path>.meta.json sidecar.

    Floats are serialized with repr, so the numeric payload round-trips
    bit-exactly through load_dataset.
    """
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = [f"x{j}" for j in range(dataset.dim)] + ["s"]
        if dataset.y is not None:
            header.append("y")
        writer.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.x[i]] + [str(int(dataset.s[i]))]
            if dataset.y is not None:
                row.append(str(int(dataset.y[i])))
            writer.writerow(row)
    sidecar = {
        "format_version": DATASET_FORMAT_VERSION,
        "n": dataset.n,
        "dim": dataset.dim,
        "has_y": dataset.y is not None,
        "clamped": dataset.clamped,
        "meta": _meta_to_json(dataset.meta),
    }
    with open(path.with_suffix(path.suffix + ".meta.json"), "w") as fh:
        json.dump(sidecar, fh, indent=1)


def load_dataset(path) -> LabeledDataset:
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".meta.json")
    if not sidecar_path.exists():
        raise FileNotFoundError(f"missing metadata sidecar {sidecar_path}")
    with open(sidecar_path) as fh:
        sidecar = json.load(fh)
    version = sidecar.get("format_version")
    if version != DATASET_FORMAT_VERSION:
        raise ValueError(
            f"unsupported dataset format version {version!r}; expected {DATASET_FORMAT_VERSION}"
        )
    header, rows = _read_csv(path)
    dim = sidecar["dim"]
    x = np.array([[float(row[j]) for j in range(dim)] for row in rows])
    s = np.array([int(row[dim]) for row in rows], dtype=np.int64)
    y = None
    if sidecar["has_y"]:
        y = np.array([int(row[dim + 1]) for row in rows], dtype=np.int64)
    return LabeledDataset(x, s, y, _meta_from_json(sidecar["meta"]), sidecar.get("clamped", 0))
