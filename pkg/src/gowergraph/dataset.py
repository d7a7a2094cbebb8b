"""Mixed-type table ingestion and preprocessing.

Loads CSV tables against a declared schema, converts the raw target count to
a per-10,000 rate, min-max scales numeric features, one-hot encodes
categoricals, and bins the target at empirical quantiles for stratification.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateId,
    MissingCell,
    MissingColumn,
    NonNumericCell,
    NonpositivePopulation,
    UnknownCategory,
)

log = logging.getLogger(__name__)

KINDS = ("numeric", "categorical")
ROLES = ("feature", "target", "population", "id", "metadata")


@dataclass(frozen=True)
class SchemaEntry:
    name: str
    kind: str
    role: str
    weight: float = 1.0


@dataclass
class FeatureSchema:
    """Declares column kinds, roles, and nonnegative feature weights."""

    entries: list[SchemaEntry]

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("schema column names must be unique")
        for e in self.entries:
            if e.kind not in KINDS:
                raise ValueError(f"unknown kind {e.kind!r} for column {e.name!r}")
            if e.role not in ROLES:
                raise ValueError(f"unknown role {e.role!r} for column {e.name!r}")
            if not (e.weight >= 0):
                raise ValueError(f"negative weight for column {e.name!r}")
        if sum(1 for e in self.entries if e.role == "target") != 1:
            raise ValueError("schema must declare exactly one target column")
        if sum(1 for e in self.entries if e.role == "id") != 1:
            raise ValueError("schema must declare exactly one id column")
        if sum(1 for e in self.entries if e.role == "population") > 1:
            raise ValueError("schema may declare at most one population column")
        if not self.features:
            raise ValueError("schema must declare at least one feature column")
        for e in self.entries:
            if e.role in ("target", "population") and e.kind != "numeric":
                raise ValueError(f"{e.role} column {e.name!r} must be numeric")

    @property
    def features(self) -> list[SchemaEntry]:
        return [e for e in self.entries if e.role == "feature"]

    @property
    def numeric_features(self) -> list[SchemaEntry]:
        return [e for e in self.features if e.kind == "numeric"]

    @property
    def categorical_features(self) -> list[SchemaEntry]:
        return [e for e in self.features if e.kind == "categorical"]

    @property
    def metadata_columns(self) -> list[SchemaEntry]:
        return [e for e in self.entries if e.role == "metadata"]

    @property
    def target(self) -> str:
        return next(e.name for e in self.entries if e.role == "target")

    @property
    def id_column(self) -> str:
        return next(e.name for e in self.entries if e.role == "id")

    @property
    def population(self) -> str | None:
        return next((e.name for e in self.entries if e.role == "population"), None)

    def entry(self, name: str) -> SchemaEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    @classmethod
    def from_json(cls, path: str | Path) -> "FeatureSchema":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = [
            SchemaEntry(
                name=item["name"],
                kind=item["kind"],
                role=item.get("role", "feature"),
                weight=float(item.get("weight", 1.0)),
            )
            for item in raw
        ]
        return cls(entries)

    def to_json(self) -> list[dict]:
        return [
            {"name": e.name, "kind": e.kind, "role": e.role, "weight": e.weight}
            for e in self.entries
        ]


@dataclass
class Table:
    """Rectangular table with unique row ids.

    Numeric columns are float64 arrays, categorical/metadata columns are
    object arrays of strings.
    """

    ids: list[str]
    columns: dict[str, np.ndarray]
    n_dropped: int = 0

    def __post_init__(self):
        seen = set()
        for id_ in self.ids:
            if id_ in seen:
                raise DuplicateId(id_)
            seen.add(id_)
        n = len(self.ids)
        for name, col in self.columns.items():
            if len(col) != n:
                raise ValueError(f"column {name!r} has {len(col)} cells, expected {n}")

    @property
    def n_rows(self) -> int:
        return len(self.ids)

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise MissingColumn(name)
        return self.columns[name]

    def subset(self, rows: np.ndarray) -> "Table":
        return Table(
            ids=[self.ids[i] for i in rows],
            columns={name: col[rows] for name, col in self.columns.items()},
        )


@dataclass
class ScaledTable:
    """Preprocessed table: scaled numerics, per-10k target, frozen encodings."""

    base: Table
    scale_params: dict[str, tuple[float, float]]
    onehot_map: dict[str, list[str]]
    log_target: bool = False


def load_table(path: str | Path, schema: FeatureSchema, strict: bool = True) -> Table:
    """Read and validate a CSV file against the schema.

    In strict mode a missing cell in any schema column raises; in lenient
    mode the offending rows are dropped and the count logged.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for entry in schema.entries:
            if entry.name not in header:
                raise MissingColumn(entry.name)

        numeric_names = [
            e.name for e in schema.entries if e.kind == "numeric" and e.role != "id"
        ]
        ids: list[str] = []
        columns: dict[str, list] = {e.name: [] for e in schema.entries if e.role != "id"}
        id_col = schema.id_column
        n_dropped = 0

        for row_no, row in enumerate(reader):
            cells = {name: (row.get(name) or "").strip() for name in (id_col, *columns)}
            missing = [name for name, cell in cells.items() if cell == ""]
            if missing:
                if strict:
                    raise MissingCell(row_no, missing[0])
                n_dropped += 1
                continue
            parsed = {}
            for name in numeric_names:
                try:
                    value = float(cells[name])
                except ValueError:
                    raise NonNumericCell(row_no, name, cells[name])
                if not math.isfinite(value):
                    raise NonNumericCell(row_no, name, cells[name])
                parsed[name] = value
            ids.append(cells[id_col])
            for name in columns:
                columns[name].append(parsed.get(name, cells[name]))

    if n_dropped:
        log.info("dropped %d rows with missing cells from %s", n_dropped, path)

    arrays = {}
    for name, values in columns.items():
        if name in numeric_names:
            arrays[name] = np.asarray(values, dtype=float)
        else:
            arrays[name] = np.asarray(values, dtype=object)
    return Table(ids=ids, columns=arrays, n_dropped=n_dropped)


def normalize_target(count: float, population: float) -> float:
    """Rate per 10,000: count / population * 1e4."""
    if not population > 0:
        raise NonpositivePopulation(f"population must be positive, got {population}")
    if count < 0:
        raise ValueError(f"count must be nonnegative, got {count}")
    return count / population * 10_000.0


def scale_minmax(column: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Map a numeric column onto [0, 1]; constant columns map to all zeros."""
    col = np.asarray(column, dtype=float)
    if col.size == 0:
        raise ValueError("cannot scale an empty column")
    if not np.all(np.isfinite(col)):
        raise ValueError("column contains non-finite values")
    lo = float(col.min())
    hi = float(col.max())
    if hi == lo:
        return np.zeros_like(col), lo, hi
    return (col - lo) / (hi - lo), lo, hi


def one_hot(column: np.ndarray, categories: list[str]) -> np.ndarray:
    """Indicator matrix with one column per category, in the given order."""
    index = {label: j for j, label in enumerate(categories)}
    out = np.zeros((len(column), len(categories)))
    for i, label in enumerate(column):
        j = index.get(label)
        if j is None:
            raise UnknownCategory(str(label))
        out[i, j] = 1.0
    return out


def quantile_bins(values: np.ndarray, max_bins: int = 10) -> np.ndarray:
    """Label rows by quantile bin; duplicate cut points collapse bins.

    Returns integer labels 0..k-1 with k <= max_bins, every bin nonempty,
    and labels nondecreasing with the sorted values.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot bin an empty column")
    if max_bins < 1:
        raise ValueError("max_bins must be >= 1")
    qs = np.linspace(0.0, 1.0, max_bins + 1)[1:-1]
    cuts = np.unique(np.quantile(values, qs))
    raw = np.searchsorted(cuts, values, side="right")
    # collapse to dense labels so every bin is nonempty
    present = np.unique(raw)
    remap = {old: new for new, old in enumerate(present)}
    return np.asarray([remap[r] for r in raw], dtype=int)


def prepare(table: Table, schema: FeatureSchema, log_target: bool = False) -> ScaledTable:
    """Build the modeling table: per-10k target, scaled numerics, frozen category order."""
    columns: dict[str, np.ndarray] = {}
    scale_params: dict[str, tuple[float, float]] = {}
    onehot_map: dict[str, list[str]] = {}

    pop_name = schema.population
    counts = table.column(schema.target)
    if pop_name is not None:
        pops = table.column(pop_name)
        rate = np.asarray(
            [normalize_target(c, p) for c, p in zip(counts, pops)], dtype=float
        )
        columns[pop_name] = pops.copy()
    else:
        rate = counts.astype(float)
    if log_target:
        rate = np.log1p(rate)
    columns[schema.target] = rate

    for entry in schema.numeric_features:
        scaled, lo, hi = scale_minmax(table.column(entry.name))
        columns[entry.name] = scaled
        scale_params[entry.name] = (lo, hi)

    for entry in schema.categorical_features:
        col = table.column(entry.name)
        onehot_map[entry.name] = sorted({str(v) for v in col})
        columns[entry.name] = col.copy()

    for entry in schema.metadata_columns:
        columns[entry.name] = table.column(entry.name).copy()

    base = Table(ids=list(table.ids), columns=columns, n_dropped=table.n_dropped)
    return ScaledTable(
        base=base,
        scale_params=scale_params,
        onehot_map=onehot_map,
        log_target=log_target,
    )
