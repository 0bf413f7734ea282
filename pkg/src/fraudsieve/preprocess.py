"""Four-stage feature pipeline: imputation, encoding, scaling, selection.

Fit on a training table (optionally with observed labels for target
encoding), then apply to any table with the same schema. Every fitted
statistic comes from the fit table alone.

Column roles and their treatment:

* ``numeric``          grouped-median impute, standardize
* ``percentage``       grouped-median impute, min-max to [0, 1]
* ``skewed_financial`` grouped-median impute, signed log1p (no rescale)
* ``cyclic``           grouped-median impute, (sin, cos) pair of 2*pi*v/period
* ``date``             forward-fill in row order, day number, standardize
* ``categorical``      mode impute; one-hot when cardinality <= limit,
                       smoothed target encoding above (override with
                       ``encoding="one_hot" | "target"``)
* ``drop``             excluded from the feature matrix

Selection drops input columns whose fit-table missing rate exceeds the
missing threshold, then for every output pair correlated beyond the
correlation threshold drops the later column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .tabular import LabelVector, RawTable

ROLE_KINDS = (
    "numeric",
    "categorical",
    "percentage",
    "skewed_financial",
    "cyclic",
    "date",
    "drop",
)
_NUMERIC_ROLES = ("numeric", "percentage", "skewed_financial", "cyclic")


@dataclass(frozen=True)
class ColumnRole:
    kind: str
    period: float | None = None  # cyclic roles only
    encoding: str | None = None  # categorical roles: None (auto) | one_hot | target

    def __post_init__(self):
        if self.kind not in ROLE_KINDS:
            raise DataError(f"unknown role kind {self.kind!r}")
        if self.kind == "cyclic" and (self.period is None or self.period <= 0):
            raise DataError("cyclic roles need a positive period")
        if self.encoding not in (None, "one_hot", "target"):
            raise DataError(f"unknown encoding {self.encoding!r}")


@dataclass(frozen=True)
class PreprocessConfig:
    roles: dict[str, ColumnRole]
    group_by: str | None = None
    one_hot_max_cardinality: int = 10
    missing_drop_threshold: float = 0.80
    correlation_drop_threshold: float = 0.95
    target_smoothing: float = 10.0

    def __post_init__(self):
        for name, thr in (
            ("missing_drop_threshold", self.missing_drop_threshold),
            ("correlation_drop_threshold", self.correlation_drop_threshold),
        ):
            if not (0.0 < thr <= 1.0):
                raise DataError(f"{name} must lie in (0, 1]")


@dataclass(frozen=True)
class PreprocessModel:
    config: PreprocessConfig
    schema_names: tuple[str, ...]
    schema_kinds: tuple[str, ...]
    missing_filtered: tuple[str, ...]
    # per input column: {"global": float, "groups": {key: float}} for
    # numeric-ish, {"mode": str} for categorical, {"lead": float} for dates
    imputation: dict[str, dict]
    # per categorical column: {"type": "one_hot", "categories": [...]} or
    # {"type": "target", "mapping": {cat: value}, "default": float}
    encoders: dict[str, dict]
    # per output column: ("standard", mean, std) | ("minmax", lo, hi) | ("none",)
    scalers: dict[str, tuple]
    output_names_all: tuple[str, ...]
    correlation_filtered: tuple[str, ...]
    retained_outputs: tuple[str, ...]

    @property
    def output_dim(self) -> int:
        return len(self.retained_outputs)


def pearson_correlation(x, y) -> float:
    """Sample Pearson coefficient; errors on constant input."""
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.shape != yv.shape or xv.ndim != 1 or len(xv) < 2:
        raise DataError("pearson_correlation needs two equal-length vectors (n >= 2)")
    dx = xv - xv.mean()
    dy = yv - yv.mean()
    sx = float(np.dot(dx, dx))
    sy = float(np.dot(dy, dy))
    if sx == 0.0 or sy == 0.0:
        raise DataError("pearson_correlation is undefined for constant input")
    return float(np.dot(dx, dy) / math.sqrt(sx * sy))


def _missing_rate(col: np.ndarray, kind: str) -> float:
    if kind == "categorical":
        return sum(1 for v in col if v is None) / len(col) if len(col) else 0.0
    return float(np.mean(np.isnan(col))) if len(col) else 0.0


def _mode(col: np.ndarray) -> str:
    counts: dict[str, int] = {}
    for v in col:
        if v is not None:
            counts[v] = counts.get(v, 0) + 1
    if not counts:
        raise DataError("cannot impute an all-missing categorical column")
    # highest count, ties to the lexicographically smallest value
    return min(counts, key=lambda c: (-counts[c], c))


def _group_keys(table: RawTable, group_by: str | None):
    if group_by is None:
        return None
    if group_by not in table.column_names:
        raise DataError(f"group_by column {group_by!r} not in table")
    if table.kind_of(group_by) != "categorical":
        raise DataError(f"group_by column {group_by!r} must be categorical")
    return table.column(group_by)


def _fit_numeric_imputer(values: np.ndarray, keys, name: str) -> dict:
    observed = values[~np.isnan(values)]
    if len(observed) == 0:
        raise DataError(f"column {name!r} is entirely missing with no group fallback")
    stats = {"global": float(np.median(observed))}
    if keys is not None:
        groups: dict[str, float] = {}
        for key in sorted({k for k in keys if k is not None}):
            member_vals = values[np.array([k == key for k in keys])]
            member_vals = member_vals[~np.isnan(member_vals)]
            if len(member_vals):
                groups[key] = float(np.median(member_vals))
        stats["groups"] = groups
    return stats


def _impute_numeric(values: np.ndarray, keys, stats: dict) -> np.ndarray:
    out = values.copy()
    missing = np.isnan(out)
    if not missing.any():
        return out
    fill = np.full(len(out), stats["global"])
    if keys is not None and "groups" in stats:
        groups = stats["groups"]
        for i in np.flatnonzero(missing):
            k = keys[i]
            if k is not None and k in groups:
                fill[i] = groups[k]
    out[missing] = fill[missing]
    return out


def _forward_fill(values: np.ndarray, lead: float) -> np.ndarray:
    out = values.copy()
    missing = np.isnan(out)
    if missing.any():
        idx = np.where(~missing, np.arange(len(out)), 0)
        np.maximum.accumulate(idx, out=idx)
        out = out[idx]
        out[np.isnan(out)] = lead  # gaps before the first observed value
    return out


def _fit_target_encoder(col, labels: LabelVector, smoothing: float) -> dict:
    observed = labels.observed_mask
    if not observed.any():
        raise DataError("target encoding requires observed labels")
    y = labels.values[observed].astype(np.float64)
    global_mean = float(y.mean())
    cats: dict[str, list] = {}
    for v, lab in zip(col[observed], y):
        cats.setdefault(v, []).append(lab)
    mapping = {}
    for cat in sorted(cats):
        vals = cats[cat]
        mapping[cat] = (len(vals) * float(np.mean(vals)) + smoothing * global_mean) / (
            len(vals) + smoothing
        )
    return {"type": "target", "mapping": mapping, "default": global_mean}


def _validate_roles(table: RawTable, config: PreprocessConfig) -> None:
    compat = {
        "numeric": "numeric",
        "percentage": "numeric",
        "skewed_financial": "numeric",
        "cyclic": "numeric",
        "categorical": "categorical",
        "date": "date",
    }
    for name, kind in zip(table.column_names, table.kinds):
        role = config.roles.get(name)
        if role is None:
            raise DataError(f"column {name!r} has no role and is not dropped")
        if role.kind == "drop":
            continue
        if compat[role.kind] != kind:
            raise DataError(
                f"column {name!r}: role {role.kind!r} incompatible with {kind} column"
            )
    for name in config.roles:
        if name not in table.column_names:
            raise DataError(f"role declared for unknown column {name!r}")


def _encode_column(name, role, values, encoder) -> tuple[list[str], list[np.ndarray]]:
    """Encoded (output names, output columns) for one imputed input column."""
    if role.kind == "cyclic":
        angle = 2.0 * np.pi * values / role.period
        return [f"{name}.sin", f"{name}.cos"], [np.sin(angle), np.cos(angle)]
    if role.kind == "skewed_financial":
        return [name], [np.sign(values) * np.log1p(np.abs(values))]
    if role.kind == "categorical":
        if encoder["type"] == "one_hot":
            cats = encoder["categories"]
            cols = [
                np.fromiter((1.0 if v == c else 0.0 for v in values), dtype=np.float64)
                for c in cats
            ]
            return [f"{name}={c}" for c in cats], cols
        mapping, default = encoder["mapping"], encoder["default"]
        return [name], [
            np.fromiter((mapping.get(v, default) for v in values), dtype=np.float64)
        ]
    return [name], [values]


def fit_pipeline(
    table: RawTable, labels: LabelVector, config: PreprocessConfig
) -> PreprocessModel:
    """Fit the pipeline on a table; `labels` may contain unknowns, only
    observed entries feed target encoding."""
    if table.row_count == 0:
        raise DataError("cannot fit preprocessing on an empty table")
    if len(labels) != table.row_count:
        raise DataError("labels must align with the table rows")
    _validate_roles(table, config)
    keys = _group_keys(table, config.group_by)

    missing_filtered = []
    active = []
    for name, kind in zip(table.column_names, table.kinds):
        role = config.roles[name]
        if role.kind == "drop":
            continue
        if _missing_rate(table.column(name), kind) > config.missing_drop_threshold:
            missing_filtered.append(name)
        else:
            active.append(name)

    imputation: dict[str, dict] = {}
    encoders: dict[str, dict] = {}
    out_names: list[str] = []
    out_cols: list[np.ndarray] = []
    out_roles: list[str] = []
    for name in active:
        role = config.roles[name]
        col = table.column(name)
        if role.kind in _NUMERIC_ROLES:
            imputation[name] = _fit_numeric_imputer(col, keys, name)
            imputed = _impute_numeric(col, keys, imputation[name])
        elif role.kind == "date":
            observed = col[~np.isnan(col)]
            if len(observed) == 0:
                raise DataError(f"date column {name!r} is entirely missing")
            imputation[name] = {"lead": float(observed[0])}
            imputed = _forward_fill(col, imputation[name]["lead"])
        else:  # categorical
            imputation[name] = {"mode": _mode(col)}
            imputed = np.array(
                [v if v is not None else imputation[name]["mode"] for v in col],
                dtype=object,
            )
            cats = sorted(set(imputed))
            encoding = role.encoding
            if encoding is None:
                encoding = (
                    "one_hot" if len(cats) <= config.one_hot_max_cardinality else "target"
                )
            if encoding == "one_hot":
                if len(cats) > config.one_hot_max_cardinality:
                    raise DataError(
                        f"column {name!r}: {len(cats)} categories exceed the one-hot "
                        f"limit of {config.one_hot_max_cardinality}"
                    )
                encoders[name] = {"type": "one_hot", "categories": cats}
            else:
                encoders[name] = _fit_target_encoder(
                    imputed, labels, config.target_smoothing
                )
        names, cols = _encode_column(name, role, imputed, encoders.get(name))
        out_names.extend(names)
        out_cols.extend(cols)
        out_roles.extend([role.kind] * len(names))
    if len(set(out_names)) != len(out_names):
        raise DataError("encoded output names collide; rename the offending columns")

    scalers: dict[str, tuple] = {}
    scaled_cols = []
    for out_name, col, role_kind in zip(out_names, out_cols, out_roles):
        if role_kind in ("numeric", "date"):
            scalers[out_name] = ("standard", float(col.mean()), float(col.std(ddof=0)))
        elif role_kind == "percentage":
            scalers[out_name] = ("minmax", float(col.min()), float(col.max()))
        else:
            scalers[out_name] = ("none",)
        scaled_cols.append(_apply_scaler(col, scalers[out_name]))

    matrix = np.column_stack(scaled_cols) if scaled_cols else np.empty((table.row_count, 0))
    retained: list[int] = []
    correlation_filtered: list[str] = []
    stds = matrix.std(axis=0, ddof=0) if matrix.size else np.empty(0)
    thr = config.correlation_drop_threshold
    for j in range(matrix.shape[1]):
        offending = False
        if stds[j] > 0:
            for i in retained:
                if stds[i] == 0:
                    continue
                if abs(pearson_correlation(matrix[:, i], matrix[:, j])) > thr:
                    offending = True
                    break
        if offending:
            correlation_filtered.append(out_names[j])
        else:
            retained.append(j)

    return PreprocessModel(
        config=config,
        schema_names=table.column_names,
        schema_kinds=table.kinds,
        missing_filtered=tuple(missing_filtered),
        imputation=imputation,
        encoders=encoders,
        scalers=scalers,
        output_names_all=tuple(out_names),
        correlation_filtered=tuple(correlation_filtered),
        retained_outputs=tuple(out_names[j] for j in retained),
    )


def _apply_scaler(col: np.ndarray, scaler: tuple) -> np.ndarray:
    if scaler[0] == "standard":
        _, mean, std = scaler
        return (col - mean) / (std if std > 0 else 1.0)
    if scaler[0] == "minmax":
        _, lo, hi = scaler
        return (col - lo) / (hi - lo) if hi > lo else np.zeros_like(col)
    return col


def transform(model: PreprocessModel, table: RawTable) -> np.ndarray:
    """Apply the fitted pipeline; returns an (n, output_dim) float matrix
    with columns ordered as model.retained_outputs."""
    if (table.column_names, table.kinds) != (model.schema_names, model.schema_kinds):
        raise DataError("table schema does not match the fitted schema")
    keys = _group_keys(table, model.config.group_by)
    produced: dict[str, np.ndarray] = {}
    for name in model.schema_names:
        role = model.config.roles[name]
        if role.kind == "drop" or name in model.missing_filtered:
            continue
        col = table.column(name)
        if role.kind in _NUMERIC_ROLES:
            imputed = _impute_numeric(col, keys, model.imputation[name])
        elif role.kind == "date":
            imputed = _forward_fill(col, model.imputation[name]["lead"])
        else:
            mode = model.imputation[name]["mode"]
            imputed = np.array(
                [v if v is not None else mode for v in col], dtype=object
            )
        names, cols = _encode_column(name, role, imputed, model.encoders.get(name))
        for out_name, out_col in zip(names, cols):
            produced[out_name] = _apply_scaler(out_col, model.scalers[out_name])
    if table.row_count == 0:
        return np.empty((0, model.output_dim))
    return np.column_stack([produced[n] for n in model.retained_outputs]) if model.retained_outputs else np.empty((table.row_count, 0))
