"""Typed tabular data: column schema, immutable tables, ingestion and transforms.

Tables hold continuous columns as float64 (NaN at missing cells) and discrete
columns as integer category codes (-1 at missing cells), alongside an explicit
boolean missing mask. All operations return new tables; a constructed table is
never mutated.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ContractViolation,
    CsvParseError,
    DegenerateInputError,
    DomainError,
    SchemaViolation,
)

CONTINUOUS = "continuous"
DISCRETE = "discrete"

STAGE_BASELINE = "baseline"
STAGE_TREATMENT = "treatment"
STAGE_POST_RANDOMIZATION = "post_randomization"
STAGE_OUTCOME = "outcome"

_STAGES = (STAGE_BASELINE, STAGE_TREATMENT, STAGE_POST_RANDOMIZATION, STAGE_OUTCOME)

#: Cell spellings read back as missing values.
MISSING_TOKENS = ("", "NA")


@dataclass(frozen=True)
class ColumnSchema:
    """Declared type, support and temporal role of one column.

    ``lower_bound`` is an admissibility floor for generated values (e.g. cell
    counts cannot go negative); it is carried here rather than hard-coded so
    other datasets can declare different supports. ``log_transform`` flags the
    column for optional natural-log pre-processing. ``stage_order`` orders
    columns within the post-randomization stage.
    """

    name: str
    kind: str
    categories: tuple[str, ...] = ()
    lower_bound: float | None = None
    log_transform: bool = False
    stage: str = STAGE_BASELINE
    stage_order: int = 0

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, DISCRETE):
            raise SchemaViolation(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.stage not in _STAGES:
            raise SchemaViolation(f"column {self.name!r}: unknown stage {self.stage!r}")
        object.__setattr__(self, "categories", tuple(self.categories))
        if self.kind == DISCRETE:
            if len(self.categories) < 2:
                raise SchemaViolation(
                    f"discrete column {self.name!r} needs at least 2 categories"
                )
            if len(set(self.categories)) != len(self.categories):
                raise SchemaViolation(f"column {self.name!r}: duplicate categories")
        elif self.categories:
            raise SchemaViolation(
                f"continuous column {self.name!r} must not declare categories"
            )

    @property
    def is_binary(self) -> bool:
        return self.kind == DISCRETE and len(self.categories) == 2


class DataTable:
    """Immutable table of typed columns with an aligned missing mask."""

    def __init__(self, schema, columns, mask=None):
        self.schema = tuple(schema)
        names = [c.name for c in self.schema]
        if len(set(names)) != len(names):
            raise SchemaViolation("duplicate column names in schema")
        self._by_name = {c.name: c for c in self.schema}

        n_rows = None
        cols: dict[str, np.ndarray] = {}
        masks: dict[str, np.ndarray] = {}
        for col in self.schema:
            try:
                raw = columns[col.name]
            except KeyError:
                raise SchemaViolation(f"missing data for column {col.name!r}") from None
            if col.kind == CONTINUOUS:
                arr = np.asarray(raw, dtype=np.float64).copy()
            else:
                arr = np.asarray(raw, dtype=np.int64).copy()
            if arr.ndim != 1:
                raise SchemaViolation(f"column {col.name!r} must be one-dimensional")
            if n_rows is None:
                n_rows = arr.shape[0]
            elif arr.shape[0] != n_rows:
                raise SchemaViolation(
                    f"column {col.name!r} has {arr.shape[0]} rows, expected {n_rows}"
                )
            if mask is not None and col.name in mask:
                m = np.asarray(mask[col.name], dtype=bool).copy()
                if m.shape != arr.shape:
                    raise SchemaViolation(f"mask shape mismatch for {col.name!r}")
            else:
                m = np.zeros(arr.shape, dtype=bool)
            if col.kind == CONTINUOUS:
                m |= np.isnan(arr)
                arr[m] = np.nan
                if not np.all(np.isfinite(arr[~m])):
                    raise SchemaViolation(
                        f"column {col.name!r} has non-finite observed values"
                    )
            else:
                m |= arr < 0
                arr[m] = -1
                if arr.max(initial=-1) >= len(col.categories):
                    raise SchemaViolation(
                        f"column {col.name!r} has category codes outside its schema"
                    )
            arr.flags.writeable = False
            m.flags.writeable = False
            cols[col.name] = arr
            masks[col.name] = m
        self._columns = cols
        self._mask = masks
        self._n_rows = 0 if n_rows is None else int(n_rows)

    @classmethod
    def from_columns(cls, schema, data) -> "DataTable":
        """Build a table from per-column sequences.

        Continuous columns accept floats with ``None``/NaN as missing; discrete
        columns accept category labels with ``None``/"" as missing.
        """
        schema = tuple(schema)
        columns: dict[str, np.ndarray] = {}
        mask: dict[str, np.ndarray] = {}
        for col in schema:
            seq = list(data[col.name])
            if col.kind == CONTINUOUS:
                vals = np.array(
                    [np.nan if v is None else float(v) for v in seq], dtype=np.float64
                )
                miss = np.isnan(vals)
            else:
                lookup = {label: i for i, label in enumerate(col.categories)}
                codes = np.empty(len(seq), dtype=np.int64)
                miss = np.zeros(len(seq), dtype=bool)
                for i, v in enumerate(seq):
                    if v is None or v in MISSING_TOKENS:
                        codes[i] = -1
                        miss[i] = True
                    elif isinstance(v, (int, np.integer)) and not isinstance(v, bool):
                        codes[i] = int(v)
                    else:
                        try:
                            codes[i] = lookup[v]
                        except KeyError:
                            raise SchemaViolation(
                                f"column {col.name!r}: unknown category {v!r}"
                            ) from None
                vals = codes
            columns[col.name] = vals
            mask[col.name] = miss
        return cls(schema, columns, mask)

    @property
    def n_rows(self) -> int:
        return self._n_rows

    @property
    def n_cols(self) -> int:
        return len(self.schema)

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.schema)

    def column_schema(self, name: str) -> ColumnSchema:
        try:
            return self._by_name[name]
        except KeyError:
            raise ValueError(f"unknown column {name!r}") from None

    def values(self, name: str) -> np.ndarray:
        """Raw column values: floats (continuous) or category codes (discrete)."""
        self.column_schema(name)
        return self._columns[name]

    def labels(self, name: str) -> np.ndarray:
        """Discrete column as an object array of category labels (None = missing)."""
        col = self.column_schema(name)
        if col.kind != DISCRETE:
            raise ValueError(f"column {name!r} is not discrete")
        codes = self._columns[name]
        out = np.empty(codes.shape, dtype=object)
        for i, code in enumerate(codes):
            out[i] = None if code < 0 else col.categories[code]
        return out

    def missing(self, name: str) -> np.ndarray:
        self.column_schema(name)
        return self._mask[name]

    def take(self, indices) -> "DataTable":
        idx = np.asarray(indices, dtype=np.int64)
        cols = {name: arr[idx] for name, arr in self._columns.items()}
        mask = {name: m[idx] for name, m in self._mask.items()}
        return DataTable(self.schema, cols, mask)

    def replace_column(self, name, values, missing=None) -> "DataTable":
        self.column_schema(name)
        cols = dict(self._columns)
        mask = dict(self._mask)
        cols[name] = np.asarray(values)
        mask[name] = (
            np.zeros(self._n_rows, dtype=bool)
            if missing is None
            else np.asarray(missing, dtype=bool)
        )
        return DataTable(self.schema, cols, mask)

    def select(self, names) -> "DataTable":
        schema = tuple(self.column_schema(n) for n in names)
        return DataTable(
            schema,
            {n: self._columns[n] for n in names},
            {n: self._mask[n] for n in names},
        )

    def equals(self, other: "DataTable") -> bool:
        if self.schema != other.schema or self.n_rows != other.n_rows:
            return False
        for col in self.schema:
            a, b = self._columns[col.name], other._columns[col.name]
            ma, mb = self._mask[col.name], other._mask[col.name]
            if not np.array_equal(ma, mb):
                return False
            obs = ~ma
            if col.kind == CONTINUOUS:
                if not np.array_equal(a[obs], b[obs]):
                    return False
            elif not np.array_equal(a, b):
                return False
        return True

    def __repr__(self):
        return f"DataTable({self.n_rows} rows, {self.n_cols} columns)"


def load_csv(path, schema) -> DataTable:
    """Read a comma-separated file against a schema.

    The header must match the schema names in order. Empty fields and "NA"
    set the missing mask; anything else must parse as a finite float
    (continuous) or one of the declared categories (discrete).
    """
    schema = tuple(schema)
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError(f"{path}: empty file") from None
        expected = [c.name for c in schema]
        if header != expected:
            raise SchemaViolation(
                f"{path}: header {header!r} does not match schema columns {expected!r}"
            )
        raw_rows = list(reader)

    n = len(raw_rows)
    columns: dict[str, np.ndarray] = {}
    mask: dict[str, np.ndarray] = {}
    for j, col in enumerate(schema):
        if col.kind == CONTINUOUS:
            vals = np.empty(n, dtype=np.float64)
        else:
            vals = np.empty(n, dtype=np.int64)
            lookup = {label: i for i, label in enumerate(col.categories)}
        miss = np.zeros(n, dtype=bool)
        for i, row in enumerate(raw_rows):
            if len(row) != len(schema):
                raise CsvParseError(
                    f"expected {len(schema)} fields, found {len(row)}", row=i + 1
                )
            cell = row[j]
            if cell in MISSING_TOKENS:
                vals[i] = np.nan if col.kind == CONTINUOUS else -1
                miss[i] = True
                continue
            if col.kind == CONTINUOUS:
                try:
                    value = float(cell)
                except ValueError:
                    raise CsvParseError(
                        f"cannot parse {cell!r} as a number", row=i + 1, column=col.name
                    ) from None
                if not math.isfinite(value):
                    raise CsvParseError(
                        f"non-finite value {cell!r}", row=i + 1, column=col.name
                    )
                vals[i] = value
            else:
                try:
                    vals[i] = lookup[cell]
                except KeyError:
                    raise SchemaViolation(
                        f"column {col.name!r}, row {i + 1}: {cell!r} is not one of "
                        f"{list(col.categories)}"
                    ) from None
        columns[col.name] = vals
        mask[col.name] = miss
    return DataTable(schema, columns, mask)


def write_csv(table: DataTable, path) -> None:
    """Write a table as CSV; missing cells become empty fields.

    Continuous values are written with ``repr`` so a read-back reproduces
    them bit for bit.
    """
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(table.column_names)
        cols = []
        for col in table.schema:
            vals = table.values(col.name)
            miss = table.missing(col.name)
            if col.kind == CONTINUOUS:
                rendered = [
                    "" if m else repr(float(v)) for v, m in zip(vals, miss)
                ]
            else:
                rendered = [
                    "" if m else col.categories[v] for v, m in zip(vals, miss)
                ]
            cols.append(rendered)
        for row in zip(*cols) if cols else []:
            writer.writerow(row)


def train_test_split(table: DataTable, test_fraction: float, seed: int):
    """Seeded disjoint row partition; train size is round((1 - f) * n)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if table.n_rows < 2:
        raise DegenerateInputError("need at least 2 rows to split")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(table.n_rows)
    n_train = round((1.0 - test_fraction) * table.n_rows)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return table.take(train_idx), table.take(test_idx)


def complete_cases(table: DataTable, columns) -> DataTable:
    """Rows with no missing value in any of the listed columns, order kept."""
    keep = np.ones(table.n_rows, dtype=bool)
    for name in columns:
        keep &= ~table.missing(name)
    return table.take(np.flatnonzero(keep))


def empirical_quantile(sorted_values: np.ndarray, q: float) -> float:
    """Left-continuous step inverse: smallest order statistic with ECDF >= q."""
    n = len(sorted_values)
    idx = int(math.ceil(q * n)) - 1
    return float(sorted_values[min(max(idx, 0), n - 1)])


def quartile_bin(values) -> np.ndarray:
    """Map values to ordinal bins 1..4 by empirical quartiles.

    Missing entries (NaN) stay missing, reported as -1. Boundary values fall
    in the lower bin, so a constant input collapses to bin 1.
    """
    vals = np.asarray(values, dtype=np.float64)
    observed = vals[~np.isnan(vals)]
    if observed.size < 4:
        raise DegenerateInputError("quartile binning needs at least 4 observed values")
    cuts = quartile_boundaries(observed)
    return bin_by_boundaries(vals, cuts)


def quartile_boundaries(values) -> tuple[float, float, float]:
    observed = np.sort(np.asarray(values, dtype=np.float64))
    return tuple(empirical_quantile(observed, q) for q in (0.25, 0.5, 0.75))


def bin_by_boundaries(values, cuts) -> np.ndarray:
    vals = np.asarray(values, dtype=np.float64)
    out = np.ones(vals.shape, dtype=np.int64)
    for cut in cuts:
        out += (vals > cut).astype(np.int64)
    out[np.isnan(vals)] = -1
    return out


def apply_transform(table: DataTable, direction: str) -> DataTable:
    """Natural-log pre-processing of flagged columns, and its inverse.

    ``forward`` replaces every column with ``log_transform=True`` by its
    natural log (observed cells must be strictly positive); ``inverse``
    exponentiates them back.
    """
    if direction not in ("forward", "inverse"):
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    columns = {}
    mask = {}
    for col in table.schema:
        vals = table.values(col.name)
        miss = table.missing(col.name)
        if col.kind == CONTINUOUS and col.log_transform:
            obs = ~miss
            out = np.full_like(vals, np.nan)
            if direction == "forward":
                bad = np.flatnonzero(obs & (vals <= 0.0))
                if bad.size:
                    raise DomainError(
                        f"column {col.name!r}, row {int(bad[0]) + 1}: value "
                        f"{vals[bad[0]]!r} is not strictly positive, cannot take log"
                    )
                np.log(vals, where=obs, out=out)
            else:
                np.exp(vals, where=obs, out=out)
            vals = out
        columns[col.name] = vals
        mask[col.name] = miss
    return DataTable(table.schema, columns, mask)


def validate_lower_bounds(table: DataTable) -> None:
    """Raise if any observed value sits below its column's declared floor."""
    for col in table.schema:
        if col.kind == CONTINUOUS and col.lower_bound is not None:
            vals = table.values(col.name)
            obs = ~table.missing(col.name)
            bad = np.flatnonzero(obs & (vals < col.lower_bound))
            if bad.size:
                raise SchemaViolation(
                    f"column {col.name!r}, row {int(bad[0]) + 1}: value "
                    f"{vals[bad[0]]} below lower bound {col.lower_bound}"
                )


def require_no_missing(table: DataTable, columns) -> None:
    for name in columns:
        if table.missing(name).any():
            raise ContractViolation(
                f"column {name!r} has missing cells; filter with complete_cases first"
            )
