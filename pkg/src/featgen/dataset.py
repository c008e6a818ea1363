"""Tabular ingestion, validation, and interval normalization.

A run starts from a CSV file, cleans it into an immutable ``DataTable``,
and rescales every feature column onto a symmetric interval so that the
downstream policy networks see inputs of comparable magnitude. The target
column is never rescaled.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import DuplicateHeader, EmptyAfterCleaning, MissingTarget

logger = logging.getLogger(__name__)

# Characters with grammatical meaning in generated feature names. Ingested
# base names must avoid them so rendered expressions stay parseable.
RESERVED_CHARS = "()+-*/,"

STAT_NAMES = ("mean", "std", "min", "p25", "median", "p75", "max")


class TaskKind(Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"
    ANOMALY = "anomaly"


@dataclass(frozen=True)
class DataTable:
    """Column-major numeric table with named features and a target.

    ``X`` has shape (n_rows, n_features); ``y`` has shape (n_rows,).
    Instances are immutable: every transformation returns a new table.
    """

    feature_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    task: TaskKind
    target_name: str = "target"

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.X, dtype=np.float64))
        y = np.asarray(self.y, dtype=np.float64)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.ndim != 2:
            raise ValueError("X must be 2-dimensional")
        n, m = X.shape
        if len(self.feature_names) != m:
            raise ValueError("feature_names length does not match column count")
        if y.shape != (n,):
            raise ValueError("target length does not match row count")
        if n < 2:
            raise EmptyAfterCleaning(f"need at least 2 rows, got {n}")
        if len(set(self.feature_names)) != m:
            raise DuplicateHeader("feature names must be unique")
        if any(not name for name in self.feature_names):
            raise ValueError("feature names must be nonempty")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise ValueError("table must be finite after cleaning")
        X.flags.writeable = False
        y.flags.writeable = False

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def column(self, index: int) -> np.ndarray:
        return self.X[:, index]

    def index_of(self, name: str) -> int:
        return self.feature_names.index(name)

    def with_new_columns(self, names, columns) -> "DataTable":
        """Append generated columns; names must not collide with existing ones."""
        names = tuple(names)
        if not names:
            return self
        cols = np.column_stack([np.asarray(c, dtype=np.float64) for c in columns])
        return replace(
            self,
            feature_names=self.feature_names + names,
            X=np.hstack([self.X, cols]),
        )

    def select(self, names) -> "DataTable":
        """Keep only the given features, preserving current column order."""
        wanted = set(names)
        idx = [j for j, n in enumerate(self.feature_names) if n in wanted]
        return replace(
            self,
            feature_names=tuple(self.feature_names[j] for j in idx),
            X=self.X[:, idx],
        )


@dataclass(frozen=True)
class NormalizationParams:
    """Per-column extrema and the target interval, kept for audit."""

    col_min: np.ndarray
    col_max: np.ndarray
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("interval bounds must satisfy a < b")


@dataclass
class CsvCleaning:
    """Ingestion report: how many raw rows were dropped and why."""

    total_rows: int = 0
    dropped_rows: int = 0
    reasons: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "total_rows": self.total_rows,
            "dropped_rows": self.dropped_rows,
            "reasons": dict(self.reasons),
        }


def _parse_cell(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("non-finite cell")
    return value


def read_csv(path, target_column: str, task: TaskKind) -> tuple[DataTable, CsvCleaning]:
    """Parse a CSV file into a validated table plus its cleaning report.

    Rows containing any non-parsable or non-finite cell are dropped and
    counted. Classification targets must be integer-valued class labels.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyAfterCleaning("file has no header row") from None
        rows = list(reader)

    if len(set(header)) != len(header):
        raise DuplicateHeader(f"repeated column name in header: {header}")
    if target_column not in header:
        raise MissingTarget(f"no column named {target_column!r} in header")
    for name in header:
        if not name:
            raise ValueError("empty column name in header")
        if name != target_column and any(ch in RESERVED_CHARS for ch in name):
            raise ValueError(
                f"feature name {name!r} contains a reserved character ({RESERVED_CHARS})"
            )

    target_idx = header.index(target_column)
    feature_names = tuple(n for i, n in enumerate(header) if i != target_idx)

    cleaning = CsvCleaning(total_rows=len(rows))
    kept_features: list[list[float]] = []
    kept_targets: list[float] = []
    for row in rows:
        if len(row) != len(header):
            cleaning.dropped_rows += 1
            cleaning.reasons["ragged"] = cleaning.reasons.get("ragged", 0) + 1
            continue
        try:
            values = [_parse_cell(cell) for cell in row]
        except ValueError:
            cleaning.dropped_rows += 1
            cleaning.reasons["unparsable"] = cleaning.reasons.get("unparsable", 0) + 1
            continue
        target = values[target_idx]
        if task is not TaskKind.REGRESSION and target != int(target):
            cleaning.dropped_rows += 1
            cleaning.reasons["non_integer_label"] = (
                cleaning.reasons.get("non_integer_label", 0) + 1
            )
            continue
        kept_features.append([v for i, v in enumerate(values) if i != target_idx])
        kept_targets.append(target)

    if len(kept_targets) < 2:
        raise EmptyAfterCleaning(
            f"{len(kept_targets)} usable rows after dropping {cleaning.dropped_rows}"
        )
    if cleaning.dropped_rows:
        logger.info(
            "dropped %d of %d rows during ingestion (%s)",
            cleaning.dropped_rows,
            cleaning.total_rows,
            cleaning.reasons,
        )
    table = DataTable(
        feature_names=feature_names,
        X=np.array(kept_features, dtype=np.float64),
        y=np.array(kept_targets, dtype=np.float64),
        task=task,
        target_name=target_column,
    )
    return table, cleaning


def load_csv(path, target_column: str, task: TaskKind) -> DataTable:
    """Ingest a CSV file; see `read_csv` for the cleaning report variant."""
    table, _ = read_csv(path, target_column, task)
    return table


def normalize(table: DataTable, a: float = -1.0, b: float = 1.0) -> tuple[DataTable, NormalizationParams]:
    """Affinely map each feature column onto [a, b]; the target is untouched.

    Non-constant columns get exact endpoints (min -> a, max -> b). Constant
    columns map to the interval midpoint so column count and indices stay
    stable. Idempotent on its own output up to float rounding.
    """
    if not a < b:
        raise ValueError("interval bounds must satisfy a < b")
    col_min = table.X.min(axis=0)
    col_max = table.X.max(axis=0)
    span = col_max - col_min
    out = np.empty_like(table.X)
    mid = (a + b) / 2.0
    for j in range(table.n_features):
        if span[j] == 0.0:
            out[:, j] = mid
        else:
            out[:, j] = (table.X[:, j] - col_min[j]) / span[j] * (b - a) + a
    normalized = replace(table, X=out)
    return normalized, NormalizationParams(col_min=col_min, col_max=col_max, a=a, b=b)


def column_stats(vector) -> np.ndarray:
    """Seven descriptive statistics of a finite vector.

    Order: mean, population std, min, 25th percentile, median,
    75th percentile, max. Percentiles interpolate linearly between
    closest ranks, so the encoding is convention-stable.
    """
    v = np.asarray(vector, dtype=np.float64)
    if v.size == 0:
        raise ValueError("vector must be nonempty")
    q = np.percentile(v, [25.0, 50.0, 75.0])
    return np.array(
        [v.mean(), v.std(), v.min(), q[0], q[1], q[2], v.max()], dtype=np.float64
    )
