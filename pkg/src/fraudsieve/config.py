"""YAML run-config parsing and dataset materialization.

The documented key set in README.md is the stability contract; unknown
keys are rejected so typos fail loudly. Defaults follow the published
hyperparameters: 100 trees, subsample 256, alpha 1.5, contamination
0.05, theta_base 0.85, beta 0.3, at most 10 self-training iterations,
10 folds, labeled fraction 0.10, C/gamma grid {0.1,1,10,100} x
{0.001,0.01,0.1,1}.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError, DataError
from .experiment import ALL_METHODS, ExperimentConfig, IForestConfig, SvmConfig
from .iforest import ThresholdConfig
from .preprocess import ColumnRole, PreprocessConfig
from .selftrain import SelfTrainConfig
from .synth import SyntheticSpec
from .tabular import FRAUD, LEGIT, UNKNOWN, LabelVector, RawTable, load_csv

DEFAULT_EVAL_FRACTIONS = (0.05, 0.10, 0.20)


@dataclass(frozen=True)
class CsvDataConfig:
    path: str
    schema: dict[str, str]
    label_column: str
    fraud_values: tuple[str, ...] | None = None  # categorical label columns only


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    output_dir: str = "runs/out"
    csv: CsvDataConfig | None = None
    synthetic: SyntheticSpec | None = None
    preprocess: PreprocessConfig | None = None  # None = all-numeric auto roles
    iforest: IForestConfig = field(default_factory=IForestConfig)
    svm: SvmConfig = field(default_factory=SvmConfig.paper_default_grid)
    selftrain: SelfTrainConfig = field(default_factory=SelfTrainConfig)
    train_labeled_fraction: float = 0.10
    eval_methods: tuple[str, ...] = ALL_METHODS
    eval_folds: int = 10
    eval_fractions: tuple[float, ...] = DEFAULT_EVAL_FRACTIONS


def config_hash(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _require_keys(section, allowed: set[str], where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected a mapping")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _parse_role(name: str, value) -> ColumnRole:
    try:
        if isinstance(value, str):
            return ColumnRole(value)
        if isinstance(value, dict):
            _require_keys(value, {"kind", "period", "encoding"}, f"roles.{name}")
            return ColumnRole(
                value["kind"], value.get("period"), value.get("encoding")
            )
    except DataError as exc:
        raise ConfigError(f"roles.{name}: {exc}") from exc
    raise ConfigError(f"roles.{name}: expected a kind string or mapping")


def _parse_preprocess(section: dict) -> PreprocessConfig:
    _require_keys(
        section,
        {
            "roles",
            "drop",
            "group_by",
            "one_hot_max_cardinality",
            "missing_drop_threshold",
            "correlation_drop_threshold",
            "target_smoothing",
        },
        "preprocess",
    )
    roles = {n: _parse_role(n, v) for n, v in (section.get("roles") or {}).items()}
    for name in section.get("drop") or []:
        roles[name] = ColumnRole("drop")
    try:
        return PreprocessConfig(
            roles=roles,
            group_by=section.get("group_by"),
            one_hot_max_cardinality=section.get("one_hot_max_cardinality", 10),
            missing_drop_threshold=section.get("missing_drop_threshold", 0.80),
            correlation_drop_threshold=section.get("correlation_drop_threshold", 0.95),
            target_smoothing=section.get("target_smoothing", 10.0),
        )
    except DataError as exc:
        raise ConfigError(f"preprocess: {exc}") from exc


def _parse_data(section: dict) -> tuple[CsvDataConfig | None, SyntheticSpec | None]:
    _require_keys(section, {"csv", "synthetic"}, "data")
    csv_cfg = None
    synth = None
    if "csv" in section:
        sub = section["csv"]
        _require_keys(sub, {"path", "schema", "label"}, "data.csv")
        for key in ("path", "schema", "label"):
            if key not in sub:
                raise ConfigError(f"data.csv: missing required key {key!r}")
        label = sub["label"]
        _require_keys(label, {"column", "fraud_values"}, "data.csv.label")
        if "column" not in label:
            raise ConfigError("data.csv.label: missing required key 'column'")
        fraud_values = label.get("fraud_values")
        csv_cfg = CsvDataConfig(
            path=sub["path"],
            schema=dict(sub["schema"]),
            label_column=label["column"],
            fraud_values=tuple(str(v) for v in fraud_values) if fraud_values else None,
        )
    if "synthetic" in section:
        sub = section["synthetic"]
        _require_keys(
            sub,
            {
                "n",
                "n_features",
                "fraud_rate",
                "n_clusters",
                "cluster_std",
                "cluster_spread",
                "mode",
                "fraud_offset",
                "fraud_std",
            },
            "data.synthetic",
        )
        try:
            synth = SyntheticSpec(**sub)
        except (DataError, TypeError) as exc:
            raise ConfigError(f"data.synthetic: {exc}") from exc
    if (csv_cfg is None) == (synth is None):
        raise ConfigError("data: exactly one of 'csv' or 'synthetic' is required")
    return csv_cfg, synth


def _parse_svm(section: dict) -> SvmConfig:
    _require_keys(
        section, {"params", "grid", "grid_folds", "tol", "max_passes"}, "svm"
    )
    kwargs: dict = {
        "grid_folds": section.get("grid_folds", 5),
        "tol": section.get("tol", 1e-3),
        "max_passes": section.get("max_passes", 200),
    }
    if "grid" in section:
        grid = section["grid"]
        _require_keys(grid, {"C", "gamma"}, "svm.grid")
        kwargs["grid_c"] = tuple(float(v) for v in grid["C"])
        kwargs["grid_gamma"] = tuple(float(v) for v in grid["gamma"])
    elif "params" in section:
        params = section["params"]
        _require_keys(params, {"C", "gamma"}, "svm.params")
        kwargs["c"] = float(params["C"])
        kwargs["gamma"] = float(params["gamma"])
    else:
        kwargs["grid_c"] = SvmConfig.paper_default_grid().grid_c
        kwargs["grid_gamma"] = SvmConfig.paper_default_grid().grid_gamma
    return SvmConfig(**kwargs)


def load_run_config(path) -> RunConfig:
    """Parse and validate a YAML run-config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    _require_keys(
        raw,
        {
            "seed",
            "output_dir",
            "data",
            "preprocess",
            "iforest",
            "svm",
            "selftrain",
            "train",
            "evaluate",
        },
        "config",
    )
    if "data" not in raw:
        raise ConfigError("config: missing required section 'data'")
    csv_cfg, synth = _parse_data(raw["data"])

    preprocess = None
    if "preprocess" in raw:
        preprocess = _parse_preprocess(raw["preprocess"] or {})

    ifr = raw.get("iforest") or {}
    _require_keys(
        ifr, {"n_trees", "subsample_size", "alpha", "contamination"}, "iforest"
    )
    try:
        iforest = IForestConfig(
            n_trees=ifr.get("n_trees", 100),
            subsample_size=ifr.get("subsample_size", 256),
            threshold=ThresholdConfig(
                alpha=ifr.get("alpha", 1.5),
                contamination=ifr.get("contamination", 0.05),
            ),
        )
    except DataError as exc:
        raise ConfigError(f"iforest: {exc}") from exc

    st = raw.get("selftrain") or {}
    _require_keys(
        st,
        {
            "theta_base",
            "beta",
            "n_target",
            "max_iterations",
            "delta_f1_tol",
            "min_batch",
            "validation_fraction",
        },
        "selftrain",
    )
    try:
        selftrain = SelfTrainConfig(**st)
    except (DataError, TypeError) as exc:
        raise ConfigError(f"selftrain: {exc}") from exc

    tr = raw.get("train") or {}
    _require_keys(tr, {"labeled_fraction"}, "train")
    ev = raw.get("evaluate") or {}
    _require_keys(ev, {"methods", "n_folds", "labeled_fractions"}, "evaluate")
    methods = tuple(ev.get("methods", ALL_METHODS))
    for m in methods:
        if m not in ALL_METHODS:
            raise ConfigError(f"evaluate.methods: unknown method {m!r}")

    return RunConfig(
        seed=int(raw.get("seed", 0)),
        output_dir=str(raw.get("output_dir", "runs/out")),
        csv=csv_cfg,
        synthetic=synth,
        preprocess=preprocess,
        iforest=iforest,
        svm=_parse_svm(raw.get("svm") or {}),
        selftrain=selftrain,
        train_labeled_fraction=float(tr.get("labeled_fraction", 0.10)),
        eval_methods=methods,
        eval_folds=int(ev.get("n_folds", 10)),
        eval_fractions=tuple(float(f) for f in ev.get("labeled_fractions", DEFAULT_EVAL_FRACTIONS)),
    )


def _labels_from_column(col: np.ndarray, kind: str, fraud_values) -> LabelVector:
    if kind == "categorical":
        if not fraud_values:
            raise ConfigError(
                "a categorical label column needs data.csv.label.fraud_values"
            )
        vals = np.array(
            [UNKNOWN if v is None else (FRAUD if v in fraud_values else LEGIT) for v in col],
            dtype=np.int8,
        )
        return LabelVector(vals)
    if kind == "numeric":
        vals = np.full(len(col), UNKNOWN, dtype=np.int8)
        observed = ~np.isnan(col)
        bad = observed & ~np.isin(col, (0.0, 1.0))
        if bad.any():
            raise DataError(
                f"label column contains non-binary value {col[bad][0]!r}"
            )
        vals[observed] = col[observed].astype(np.int8)
        return LabelVector(vals)
    raise ConfigError("label column must be numeric or categorical")


def load_dataset(cfg: RunConfig) -> tuple[RawTable, LabelVector]:
    """Materialize (features table, labels) from either data source.

    For CSV sources the label column is split out of the feature table;
    empty label cells mean the row's true label is unobserved.
    """
    if cfg.synthetic is not None:
        from .synth import as_table

        return as_table(cfg.synthetic, cfg.seed)
    csv_cfg = cfg.csv
    table = load_csv(csv_cfg.path, csv_cfg.schema)
    if csv_cfg.label_column not in table.column_names:
        raise ConfigError(
            f"label column {csv_cfg.label_column!r} is not in the schema"
        )
    labels = _labels_from_column(
        table.column(csv_cfg.label_column),
        table.kind_of(csv_cfg.label_column),
        csv_cfg.fraud_values,
    )
    return table.drop_column(csv_cfg.label_column), labels


def resolve_preprocess(cfg: RunConfig, table: RawTable) -> PreprocessConfig:
    """Explicit preprocess section, or auto all-numeric roles when every
    feature column is numeric."""
    if cfg.preprocess is not None:
        return cfg.preprocess
    if any(k != "numeric" for k in table.kinds):
        raise ConfigError(
            "non-numeric feature columns require an explicit preprocess section"
        )
    return PreprocessConfig(
        roles={name: ColumnRole("numeric") for name in table.column_names}
    )


def experiment_config(
    cfg: RunConfig, preprocess: PreprocessConfig, labeled_fraction: float
) -> ExperimentConfig:
    return ExperimentConfig(
        preprocess=preprocess,
        methods=cfg.eval_methods,
        n_folds=cfg.eval_folds,
        labeled_fraction=labeled_fraction,
        seed=cfg.seed,
        iforest=cfg.iforest,
        svm=cfg.svm,
        selftrain=cfg.selftrain,
    )
