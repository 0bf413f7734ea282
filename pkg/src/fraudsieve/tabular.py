"""Tabular data loading, label bookkeeping, and split machinery.

A :class:`RawTable` is an immutable column store parsed from CSV under an
explicit schema. Labels live in a :class:`LabelVector` whose entries are
legit (0), fraud (1), or unknown (-1); the unknown entries model rows
whose true label exists but is unobserved. Splitting utilities produce
stratified cross-validation folds and stratified labeled/unlabeled masks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import DataError
from .rand import OP_FOLDS, OP_LABEL_MASK, derived_rng

LEGIT = 0
FRAUD = 1
UNKNOWN = -1

COLUMN_KINDS = ("numeric", "categorical", "date")

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_DATE_FORMATS = (
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%d",
    "%m/%d/%Y %H:%M:%S",
    "%m/%d/%Y %H:%M",
    "%m/%d/%Y",
)


def _parse_date(text: str) -> float:
    """Parse a date string to fractional days since the Unix epoch."""
    for fmt in _DATE_FORMATS:
        try:
            dt = datetime.strptime(text, fmt).replace(tzinfo=timezone.utc)
        except ValueError:
            continue
        return (dt - _EPOCH).total_seconds() / 86400.0
    raise ValueError(f"unrecognized date format: {text!r}")


@dataclass(frozen=True, eq=False)
class RawTable:
    """Immutable columnar table.

    Numeric and date columns are float64 arrays with NaN marking missing
    cells (dates are stored as fractional days since the Unix epoch);
    categorical columns are object arrays of str with None for missing.
    """

    column_names: tuple[str, ...]
    kinds: tuple[str, ...]
    columns: tuple[np.ndarray, ...]
    row_count: int

    def __post_init__(self):
        if len(set(self.column_names)) != len(self.column_names):
            raise DataError("duplicate column names in table")
        if not (len(self.column_names) == len(self.kinds) == len(self.columns)):
            raise DataError("column_names, kinds and columns must align")
        for name, kind, col in zip(self.column_names, self.kinds, self.columns):
            if kind not in COLUMN_KINDS:
                raise DataError(f"column {name!r}: unknown kind {kind!r}")
            if len(col) != self.row_count:
                raise DataError(
                    f"column {name!r} has {len(col)} rows, expected {self.row_count}"
                )

    def __eq__(self, other) -> bool:
        if not isinstance(other, RawTable):
            return NotImplemented
        if (self.column_names, self.kinds, self.row_count) != (
            other.column_names,
            other.kinds,
            other.row_count,
        ):
            return False
        for a, b, kind in zip(self.columns, other.columns, self.kinds):
            if kind == "categorical":
                if any(x != y for x, y in zip(a, b)):
                    return False
            elif not np.array_equal(a, b, equal_nan=True):
                return False
        return True

    def column(self, name: str) -> np.ndarray:
        try:
            i = self.column_names.index(name)
        except ValueError:
            raise DataError(f"no such column: {name!r}") from None
        return self.columns[i]

    def kind_of(self, name: str) -> str:
        return self.kinds[self.column_names.index(name)]

    def select_rows(self, indices) -> "RawTable":
        idx = np.asarray(indices)
        cols = tuple(c[idx].copy() for c in self.columns)
        return RawTable(self.column_names, self.kinds, cols, len(idx))

    def drop_column(self, name: str) -> "RawTable":
        keep = [i for i, n in enumerate(self.column_names) if n != name]
        return RawTable(
            tuple(self.column_names[i] for i in keep),
            tuple(self.kinds[i] for i in keep),
            tuple(self.columns[i] for i in keep),
            self.row_count,
        )


@dataclass(frozen=True)
class LabelVector:
    """Per-row labels: 0 legit, 1 fraud, -1 unknown (unobserved)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int8)
        if v.ndim != 1:
            raise DataError("labels must be a 1-d vector")
        bad = ~np.isin(v, (LEGIT, FRAUD, UNKNOWN))
        if bad.any():
            raise DataError(f"labels must be in {{0, 1, -1}}; got {v[bad][0]}")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def observed_mask(self) -> np.ndarray:
        return self.values != UNKNOWN

    def observed_indices(self) -> np.ndarray:
        return np.flatnonzero(self.observed_mask)

    def unknown_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.observed_mask)

    def class_counts(self) -> tuple[int, int]:
        """(n_legit, n_fraud) over observed rows."""
        return int(np.sum(self.values == LEGIT)), int(np.sum(self.values == FRAUD))


class EvalOnlyLabels:
    """Holds the full true labels of a masked dataset.

    Training code receives only the masked :class:`LabelVector`; the true
    labels of the unlabeled portion stay behind this accessor so they can
    only be consumed deliberately, at evaluation time.
    """

    def __init__(self, values: np.ndarray):
        self.__values = np.asarray(values, dtype=np.int8).copy()

    def reveal_for_evaluation(self, indices) -> np.ndarray:
        return self.__values[np.asarray(indices)].copy()


@dataclass(frozen=True)
class SplitSpec:
    """Cross-validation split parameters."""

    labeled_fraction: float = 0.10
    n_folds: int = 10
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.labeled_fraction <= 1.0):
            raise DataError("labeled_fraction must lie in (0, 1]")
        if self.n_folds < 2:
            raise DataError("n_folds must be at least 2")


def load_csv(path, schema: dict[str, str]) -> RawTable:
    """Load a CSV file under a declared per-column schema.

    The header row must match the schema names in order. Empty cells are
    missing markers; they become NaN (numeric, date) or None
    (categorical). Parsing never imputes.
    """
    for name, kind in schema.items():
        if kind not in COLUMN_KINDS:
            raise DataError(f"schema column {name!r}: unknown kind {kind!r}")
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty, expected a header row") from None
        names = list(schema)
        if header != names:
            for got, want in zip(header, names):
                if got != want:
                    raise DataError(
                        f"{path}: header/schema mismatch at column {want!r} (file has {got!r})"
                    )
            raise DataError(
                f"{path}: header has {len(header)} columns, schema declares {len(names)}"
            )
        kinds = [schema[n] for n in names]
        raw_cols: list[list] = [[] for _ in names]
        row_num = 0
        for row in reader:
            if not row:  # blank line, not a record
                continue
            row_num += 1
            if len(row) != len(names):
                raise DataError(
                    f"{path}: row {row_num} has {len(row)} cells, expected {len(names)}"
                )
            for j, text in enumerate(row):
                raw_cols[j].append(text)
        n = len(raw_cols[0]) if names else 0

        columns = []
        for name, kind, cells in zip(names, kinds, raw_cols):
            if kind == "categorical":
                col = np.array(
                    [c if c != "" else None for c in cells], dtype=object
                )
            else:
                col = np.empty(n, dtype=np.float64)
                parse = float if kind == "numeric" else _parse_date
                for i, text in enumerate(cells):
                    if text == "":
                        col[i] = np.nan
                        continue
                    try:
                        col[i] = parse(text)
                    except ValueError:
                        raise DataError(
                            f"{path}: row {i + 1}, column {name!r}: "
                            f"cannot parse {text!r} as {kind}"
                        ) from None
            columns.append(col)
    return RawTable(tuple(names), tuple(kinds), tuple(columns), n)


def _fold_sizes(n: int, k: int) -> np.ndarray:
    sizes = np.full(k, n // k, dtype=np.int64)
    sizes[: n % k] += 1
    return sizes


def _largest_remainder(shares: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation summing to `total`, each entry within 1 of its
    real-valued share (ties broken by lower index)."""
    base = np.floor(shares).astype(np.int64)
    remainder = int(total - base.sum())
    frac = shares - base
    order = np.lexsort((np.arange(len(shares)), -frac))
    base[order[:remainder]] += 1
    return base


def stratified_folds(labels: LabelVector, spec: SplitSpec) -> list[np.ndarray]:
    """Partition observed-label rows into stratified folds.

    Per-fold positive counts stay within one sample of perfect
    proportionality, fold sizes differ by at most one, and the result is
    a pure function of (labels, spec). A class rarer than n_folds is
    allowed; it simply misses from some folds, and downstream consumers
    handle the resulting degeneracy.
    """
    if (~labels.observed_mask).any():
        raise DataError("stratified_folds requires fully observed labels")
    y = labels.values
    n = len(y)
    k = spec.n_folds
    if n < k:
        raise DataError(f"cannot split {n} rows into {k} nonempty folds")
    pos_idx = np.flatnonzero(y == FRAUD)
    neg_idx = np.flatnonzero(y == LEGIT)
    if len(pos_idx) == 0 or len(neg_idx) == 0:
        raise DataError(
            f"both classes must be present (got {len(pos_idx)} fraud, "
            f"{len(neg_idx)} legit)"
        )
    sizes = _fold_sizes(n, k)
    pos_per_fold = _largest_remainder(sizes * (len(pos_idx) / n), len(pos_idx))
    neg_per_fold = sizes - pos_per_fold

    rng = derived_rng(spec.seed, OP_FOLDS)
    pos_shuffled = rng.permutation(pos_idx)
    neg_shuffled = rng.permutation(neg_idx)

    folds = []
    p0 = n0 = 0
    for f in range(k):
        p1, n1 = p0 + pos_per_fold[f], n0 + neg_per_fold[f]
        fold = np.sort(np.concatenate([pos_shuffled[p0:p1], neg_shuffled[n0:n1]]))
        folds.append(fold)
        p0, n0 = p1, n1
    return folds


def label_mask_split(
    labels: LabelVector, fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Stratified labeled/unlabeled index split over observed rows.

    The labeled set has round(fraction * n) rows; the minority-class
    quota is floored, with the remainder topped up from the majority, so
    per-class proportions stay within one sample of the full set.
    """
    if not (0.0 < fraction <= 1.0):
        raise DataError("fraction must lie in (0, 1]")
    if (~labels.observed_mask).any():
        raise DataError("label_mask_split requires fully observed labels")
    y = labels.values
    n = len(y)
    pos_idx = np.flatnonzero(y == FRAUD)
    neg_idx = np.flatnonzero(y == LEGIT)
    if len(pos_idx) == 0 or len(neg_idx) == 0:
        raise DataError("both classes must be present")

    target = int(round(fraction * n))
    # Fraud is the minority on ties, which matches fraud-detection data.
    if len(pos_idx) <= len(neg_idx):
        minority, majority = pos_idx, neg_idx
    else:
        minority, majority = neg_idx, pos_idx
    k_min = min(math.floor(fraction * len(minority)), len(minority))
    k_maj = min(target - k_min, len(majority))
    k_min = target - k_maj  # absorb overflow if the majority ran short

    rng = derived_rng(seed, OP_LABEL_MASK)
    min_shuffled = rng.permutation(minority)
    maj_shuffled = rng.permutation(majority)
    labeled = np.sort(np.concatenate([min_shuffled[:k_min], maj_shuffled[:k_maj]]))
    mask = np.zeros(n, dtype=bool)
    mask[labeled] = True
    return labeled, np.flatnonzero(~mask)


def apply_label_mask(
    labels: LabelVector, labeled_indices
) -> tuple[LabelVector, EvalOnlyLabels]:
    """Hide every label outside `labeled_indices`.

    Returns the masked labels for training plus an evaluation-only
    accessor over the original values.
    """
    masked = np.full(len(labels), UNKNOWN, dtype=np.int8)
    idx = np.asarray(labeled_indices)
    masked[idx] = labels.values[idx]
    return LabelVector(masked), EvalOnlyLabels(labels.values)
