"""Tabular ingestion, preprocessing, vertical partitioning and batching.

CSV files are UTF-8, comma separated, with a header row. Missing values are
empty strings: a missing categorical becomes the ``unknown`` category, a
missing continuous value rejects the row.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import PartitionError, RowError, SchemaError

UNKNOWN = "<unknown>"


class Kind(str, enum.Enum):
    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class DatasetSchema:
    id_column: str
    label_column: str
    attributes: tuple[tuple[str, Kind], ...]

    def __post_init__(self) -> None:
        attrs = tuple((str(n), Kind(k)) for n, k in self.attributes)
        object.__setattr__(self, "attributes", attrs)
        names = [n for n, _ in attrs]
        if len(set(names)) != len(names):
            raise SchemaError("attribute names must be unique")
        if self.id_column in names or self.label_column in names:
            raise SchemaError("id and label columns cannot also be attributes")
        if self.id_column == self.label_column:
            raise SchemaError("id and label columns must differ")

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.attributes]

    def kind(self, name: str) -> Kind:
        return dict(self.attributes)[name]

    def subset(self, names: Sequence[str]) -> "DatasetSchema":
        keep = set(names)
        return DatasetSchema(self.id_column, self.label_column,
                             tuple(a for a in self.attributes if a[0] in keep))


def _schema(n_cont: int, n_cat: int, cont_prefix="num", cat_prefix="cat",
            order: Sequence[Kind] | None = None) -> DatasetSchema:
    if order is None:
        order = [Kind.CONTINUOUS] * n_cont + [Kind.CATEGORICAL] * n_cat
    attrs, ic, ik = [], 0, 0
    for kind in order:
        if kind is Kind.CONTINUOUS:
            attrs.append((f"{cont_prefix}{ic}", kind))
            ic += 1
        else:
            attrs.append((f"{cat_prefix}{ik}", kind))
            ik += 1
    return DatasetSchema("id", "label", tuple(attrs))


# Interleaved so that each guest's contiguous slice mixes both kinds.
ADULT_SCHEMA = _schema(6, 5, order=[Kind.CONTINUOUS, Kind.CATEGORICAL] * 5 + [Kind.CONTINUOUS])
AVAZU_SCHEMA = _schema(14, 7, order=[Kind.CONTINUOUS, Kind.CONTINUOUS, Kind.CATEGORICAL] * 7)
BUILTIN_SCHEMAS = {"adult": ADULT_SCHEMA, "avazu": AVAZU_SCHEMA}


@dataclass
class RawTable:
    """Typed cells of the accepted rows plus a report of rejected ones."""

    ids: list[str]
    labels: np.ndarray
    columns: dict[str, list]
    rejected: list[tuple[int, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.ids)

    def take(self, rows: Sequence[int]) -> "RawTable":
        rows = list(rows)
        return RawTable([self.ids[i] for i in rows], self.labels[rows].copy(),
                        {k: [v[i] for i in rows] for k, v in self.columns.items()}, [])


def load_csv(path: str | Path, schema: DatasetSchema) -> RawTable:
    """Read a CSV; rows with bad cells are skipped and listed in ``rejected``.

    Row indices in the report are 1-based data rows (the header is row 0).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        needed = [schema.id_column, schema.label_column] + schema.names
        missing = [c for c in needed if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        pos = {name: header.index(name) for name in needed}
        ids: list[str] = []
        labels: list[int] = []
        columns: dict[str, list] = {n: [] for n in schema.names}
        rejected: list[tuple[int, str]] = []
        for rownum, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                parsed = _parse_row(row, pos, schema, len(header))
            except RowError as exc:
                rejected.append((rownum, str(exc)))
                continue
            rid, label, cells = parsed
            ids.append(rid)
            labels.append(label)
            for name, value in cells.items():
                columns[name].append(value)
    return RawTable(ids, np.asarray(labels, dtype=np.int64), columns, rejected)


def _parse_row(row, pos, schema: DatasetSchema, width: int):
    if len(row) != width:
        raise RowError(f"expected {width} fields, found {len(row)}")
    rid = row[pos[schema.id_column]].strip()
    if not rid:
        raise RowError("empty id")
    raw_label = row[pos[schema.label_column]].strip()
    try:
        label = int(float(raw_label))
    except ValueError:
        raise RowError(f"unparsable label {raw_label!r}") from None
    if label not in (0, 1):
        raise RowError(f"label must be 0 or 1, got {raw_label!r}")
    cells = {}
    for name, kind in schema.attributes:
        text = row[pos[name]].strip()
        if kind is Kind.CONTINUOUS:
            try:
                value = float(text)
            except ValueError:
                raise RowError(f"column {name}: unparsable numeric {text!r}") from None
            if not math.isfinite(value):
                raise RowError(f"column {name}: non-finite value {text!r}")
            cells[name] = value
        else:
            cells[name] = text if text else UNKNOWN
    return rid, label, cells


def write_csv(table: RawTable, schema: DatasetSchema, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([schema.id_column] + schema.names + [schema.label_column])
        for i, rid in enumerate(table.ids):
            cells = []
            for name, kind in schema.attributes:
                v = table.columns[name][i]
                if kind is Kind.CONTINUOUS:
                    cells.append(repr(float(v)))
                else:
                    cells.append("" if v == UNKNOWN else v)
            w.writerow([rid] + cells + [int(table.labels[i])])


@dataclass(frozen=True)
class FitStatistics:
    means: dict[str, float]
    stds: dict[str, float]
    categories: dict[str, tuple[str, ...]]


@dataclass
class FeatureMatrix:
    ids: list[str]
    X: np.ndarray
    y: np.ndarray
    column_map: dict[str, tuple[int, int]]
    stats: FitStatistics

    @property
    def n(self) -> int:
        return self.X.shape[0]


def fit_statistics(raw: RawTable, schema: DatasetSchema) -> FitStatistics:
    means, stds, cats = {}, {}, {}
    for name, kind in schema.attributes:
        col = raw.columns[name]
        if kind is Kind.CONTINUOUS:
            a = np.asarray(col, dtype=np.float64)
            means[name] = float(a.mean()) if a.size else 0.0
            stds[name] = float(a.std()) if a.size else 0.0
        else:
            cats[name] = tuple(sorted({v for v in col if v != UNKNOWN}))
    return FitStatistics(means, stds, cats)


def preprocess(raw: RawTable, schema: DatasetSchema,
               fit_stats: FitStatistics | None = None) -> FeatureMatrix:
    """Z-score continuous columns and one-hot categorical ones.

    Statistics are fitted on ``raw`` unless ``fit_stats`` (from the training
    split) is supplied. Every categorical span ends with an ``unknown`` column.
    """
    stats = fit_stats if fit_stats is not None else fit_statistics(raw, schema)
    n = len(raw)
    blocks, column_map, start = [], {}, 0
    for name, kind in schema.attributes:
        col = raw.columns[name]
        if kind is Kind.CONTINUOUS:
            a = np.asarray(col, dtype=np.float64).reshape(n, 1)
            sd = stats.stds[name]
            if sd <= 0.0:
                warnings.warn(f"column {name!r} has zero variance; encoded as 0", RuntimeWarning,
                              stacklevel=2)
                block = np.zeros((n, 1))
            else:
                block = (a - stats.means[name]) / sd
        else:
            cats = stats.categories[name]
            index = {c: i for i, c in enumerate(cats)}
            block = np.zeros((n, len(cats) + 1))
            for r, v in enumerate(col):
                block[r, index.get(v, len(cats))] = 1.0
        blocks.append(block)
        column_map[name] = (start, start + block.shape[1])
        start += block.shape[1]
    X = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return FeatureMatrix(list(raw.ids), np.ascontiguousarray(X), raw.labels.astype(np.float64),
                         column_map, stats)


@dataclass
class GuestView:
    guest_id: int
    attribute_slice: list[str]
    X_local: np.ndarray

    @property
    def width(self) -> int:
        return self.X_local.shape[1]


def partition_sizes(d: int, k: int) -> list[int]:
    """Contiguous group sizes, remainder to the lowest-indexed groups."""
    if k < 1:
        raise PartitionError("need at least one participant")
    if k > d:
        raise PartitionError(f"cannot split {d} attributes across {k} participants")
    base, extra = divmod(d, k)
    return [base + (1 if g < extra else 0) for g in range(k)]


def split_attributes(names: Sequence[str], k: int = 3) -> list[list[str]]:
    out, start = [], 0
    for size in partition_sizes(len(names), k):
        out.append(list(names[start:start + size]))
        start += size
    return out


def vertical_partition(fm: FeatureMatrix, k: int = 3,
                       attributes: Sequence[str] | None = None) -> list[GuestView]:
    """Split ``fm`` by attribute count into ``k`` guest views.

    ``attributes`` defaults to the column-map order.
    """
    names = list(attributes) if attributes is not None else list(fm.column_map)
    views = []
    for g, group in enumerate(split_attributes(names, k)):
        cols = np.concatenate([np.arange(*fm.column_map[a]) for a in group])
        views.append(GuestView(g, group, np.ascontiguousarray(fm.X[:, cols])))
    return views


def batch_iter(n: int, batch_size: int, seed: int | None = None,
               shuffle: bool = True) -> list[np.ndarray]:
    """Index batches covering ``range(n)`` once; all participants share this plan."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(n)
    if shuffle:
        order = np.random.default_rng(seed).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def train_test_split(n: int, seed: int, test_fraction: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(n * test_fraction))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])
