"""Cross-validated comparison of detection methods.

For each stratified fold: hide all but a fraction of the training
labels, fit preprocessing on the training portion (label statistics from
the visible subset only), run each configured method, and evaluate on
the held-out fold with its labels revealed. Aggregates carry mean +/-
sample std per metric plus pairwise signed-rank tests of the two-phase
method against each baseline.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .iforest import (
    IsolationForestModel,
    ThresholdConfig,
    adaptive_threshold,
    anomaly_scores,
    build_forest,
    candidate_set,
)
from .metrics import MetricsReport, WilcoxonResult, metrics_report, wilcoxon_signed_rank
from .preprocess import PreprocessConfig, fit_pipeline, transform
from .rand import OP_CV_FOLD, derived_rng
from .selftrain import SelfTrainConfig, self_train
from .svm import (
    DEFAULT_C_GRID,
    DEFAULT_GAMMA_GRID,
    KernelParams,
    decision_values,
    grid_search,
    inverse_frequency_weights,
    train_svm,
)
from .tabular import LabelVector, RawTable, SplitSpec, apply_label_mask, label_mask_split, stratified_folds

METHOD_IFOREST_ONLY = "iforest_only"
METHOD_SVM_SUPERVISED = "svm_supervised"
METHOD_TWO_PHASE = "two_phase"
ALL_METHODS = (METHOD_IFOREST_ONLY, METHOD_SVM_SUPERVISED, METHOD_TWO_PHASE)

METRIC_ORDER = ("precision", "recall", "f1", "auc_roc", "auc_pr", "fpr")
# Headline table mirrors the comparison-table column order.
TABLE_ORDER = ("precision", "recall", "f1", "auc_roc", "auc_pr")


@dataclass(frozen=True)
class IForestConfig:
    n_trees: int = 100
    subsample_size: int = 256
    threshold: ThresholdConfig = field(default_factory=ThresholdConfig)


@dataclass(frozen=True)
class SvmConfig:
    """Fixed (C, gamma) by default; setting both grids enables a
    per-fold grid search on the labeled subset."""

    c: float = 10.0
    gamma: float = 0.1
    grid_c: tuple[float, ...] | None = None
    grid_gamma: tuple[float, ...] | None = None
    grid_folds: int = 5
    tol: float = 1e-3
    max_passes: int = 200

    @property
    def use_grid(self) -> bool:
        return self.grid_c is not None and self.grid_gamma is not None

    @classmethod
    def paper_default_grid(cls) -> "SvmConfig":
        return cls(grid_c=DEFAULT_C_GRID, grid_gamma=DEFAULT_GAMMA_GRID)


@dataclass(frozen=True)
class ExperimentConfig:
    preprocess: PreprocessConfig
    methods: tuple[str, ...] = ALL_METHODS
    n_folds: int = 10
    labeled_fraction: float = 0.10
    seed: int = 0
    iforest: IForestConfig = field(default_factory=IForestConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    selftrain: SelfTrainConfig = field(default_factory=SelfTrainConfig)

    def __post_init__(self):
        for m in self.methods:
            if m not in ALL_METHODS:
                raise DataError(f"unknown method {m!r}; choose from {ALL_METHODS}")
        if not self.methods:
            raise DataError("at least one method is required")


@dataclass
class CvReport:
    methods: tuple[str, ...]
    n_folds: int
    labeled_fraction: float
    seed: int
    per_fold: dict[str, list[MetricsReport]]
    aggregates: dict[str, dict[str, tuple[float, float]]]
    wilcoxon: dict[str, dict[str, WilcoxonResult]]

    def to_csv(self, path) -> None:
        """One row per (method, fold) with the full metric set."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "fold", *METRIC_ORDER, "tp", "fp", "fn", "tn"])
            for method in self.methods:
                for f, rep in enumerate(self.per_fold[method]):
                    d = rep.as_dict()
                    writer.writerow(
                        [method, f]
                        + [repr(d[m]) for m in METRIC_ORDER]
                        + [rep.confusion.tp, rep.confusion.fp, rep.confusion.fn, rep.confusion.tn]
                    )

    def to_text(self) -> str:
        out = io.StringIO()
        title = (
            f"{self.n_folds}-fold CV, labeled fraction "
            f"{self.labeled_fraction:g}, seed {self.seed}"
        )
        out.write(title + "\n")
        header = ["Method"] + [
            {"precision": "Precision", "recall": "Recall", "f1": "F1",
             "auc_roc": "AUC-ROC", "auc_pr": "AUC-PR"}[m]
            for m in TABLE_ORDER
        ] + ["FPR"]
        rows = [header]
        for method in self.methods:
            agg = self.aggregates[method]
            cells = [method]
            for m in (*TABLE_ORDER, "fpr"):
                mean, std = agg[m]
                cells.append(f"{mean:.3f} ± {std:.3f}")
            rows.append(cells)
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        for r in rows:
            out.write("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n")
        if self.wilcoxon:
            out.write("\nSigned-rank tests: two_phase vs baseline (W, two-sided p)\n")
            for baseline, per_metric in self.wilcoxon.items():
                for metric in (*TABLE_ORDER, "fpr"):
                    res = per_metric[metric]
                    if res.inconclusive:
                        out.write(f"  {baseline:16s} {metric:10s} inconclusive "
                                  f"({res.n_nonzero} nonzero differences)\n")
                    else:
                        out.write(
                            f"  {baseline:16s} {metric:10s} W={res.statistic:g} "
                            f"p={res.p_value:.6g} ({res.method})\n"
                        )
        return out.getvalue()


def _fold_seed(seed: int, fold: int) -> int:
    return int(derived_rng(seed, OP_CV_FOLD, fold).integers(1 << 62))


def _paired_test(a: np.ndarray, b: np.ndarray) -> WilcoxonResult:
    """Signed-rank test, degrading to an inconclusive result when there
    are too few folds to test."""
    try:
        return wilcoxon_signed_rank(a, b)
    except DataError:
        return WilcoxonResult(float("nan"), float("nan"), 0, True, "none")


def _resolve_params(cfg: SvmConfig, X_l, y_l, seed: int) -> KernelParams:
    if cfg.use_grid:
        return grid_search(
            X_l,
            y_l,
            c_grid=cfg.grid_c,
            gamma_grid=cfg.grid_gamma,
            k=cfg.grid_folds,
            seed=seed,
            tol=cfg.tol,
            max_passes=cfg.max_passes,
        )
    w_legit, w_fraud = inverse_frequency_weights(y_l)
    return KernelParams(cfg.gamma, cfg.c, w_fraud, w_legit)


def _run_fold_methods(config: ExperimentConfig, fold_seed: int, X_train, X_test,
                      labeled_idx, unlabeled_idx, y_labeled):
    """(predictions, ranking scores) per method for one fold."""
    need_forest = (
        METHOD_IFOREST_ONLY in config.methods or METHOD_TWO_PHASE in config.methods
    )
    forest: IsolationForestModel | None = None
    if need_forest:
        forest = build_forest(
            X_train,
            n_trees=config.iforest.n_trees,
            subsample_size=config.iforest.subsample_size,
            seed=fold_seed,
        )
    results = {}
    for method in config.methods:
        if method == METHOD_IFOREST_ONLY:
            train_scores = anomaly_scores(forest, X_train)
            tau = adaptive_threshold(train_scores, config.iforest.threshold.alpha)
            test_scores = anomaly_scores(forest, X_test)
            results[method] = ((test_scores >= tau).astype(np.int8), test_scores)
        elif method == METHOD_SVM_SUPERVISED:
            params = _resolve_params(config.svm, X_train[labeled_idx], y_labeled, fold_seed)
            model = train_svm(
                X_train[labeled_idx], y_labeled, params,
                tol=config.svm.tol, max_passes=config.svm.max_passes,
            )
            f = decision_values(model, X_test)
            results[method] = ((f > 0.0).astype(np.int8), f)
        else:  # two_phase
            if len(unlabeled_idx) > 0:
                du_scores = anomaly_scores(forest, X_train[unlabeled_idx])
                cand_rel = candidate_set(du_scores, config.iforest.threshold)
                X_cand = X_train[unlabeled_idx][cand_rel]
            else:
                X_cand = np.empty((0, X_train.shape[1]))
            params = _resolve_params(config.svm, X_train[labeled_idx], y_labeled, fold_seed)
            model, _ = self_train(
                X_train[labeled_idx], y_labeled, X_cand, params,
                cfg=config.selftrain, seed=fold_seed,
                tol=config.svm.tol, max_passes=config.svm.max_passes,
            )
            f = decision_values(model, X_test)
            results[method] = ((f > 0.0).astype(np.int8), f)
    return results


def run_cv(table: RawTable, labels: LabelVector, config: ExperimentConfig) -> CvReport:
    """Run the full stratified-CV comparison; deterministic given the seed."""
    if (~labels.observed_mask).any():
        raise DataError("run_cv requires fully observed labels")
    folds = stratified_folds(
        labels,
        SplitSpec(config.labeled_fraction, config.n_folds, config.seed),
    )
    per_fold: dict[str, list[MetricsReport]] = {m: [] for m in config.methods}
    all_idx = np.arange(table.row_count)
    for f, test_idx in enumerate(folds):
        try:
            mask = np.ones(table.row_count, dtype=bool)
            mask[test_idx] = False
            train_idx = all_idx[mask]
            fold_seed = _fold_seed(config.seed, f)

            train_labels = LabelVector(labels.values[train_idx])
            labeled_rel, unlabeled_rel = label_mask_split(
                train_labels, config.labeled_fraction, fold_seed
            )
            masked_labels, _hidden = apply_label_mask(train_labels, labeled_rel)

            train_table = table.select_rows(train_idx)
            pp = fit_pipeline(train_table, masked_labels, config.preprocess)
            X_train = transform(pp, train_table)
            X_test = transform(pp, table.select_rows(test_idx))
            y_labeled = masked_labels.values[labeled_rel]
            y_test = labels.values[test_idx]

            results = _run_fold_methods(
                config, fold_seed, X_train, X_test, labeled_rel, unlabeled_rel, y_labeled
            )
            for method, (pred, scores) in results.items():
                per_fold[method].append(metrics_report(y_test, pred, scores))
        except Exception as exc:
            raise DataError(f"fold {f} failed: {exc}") from exc

    aggregates = {
        method: {
            m: (
                float(np.mean([r.as_dict()[m] for r in reps])),
                float(np.std([r.as_dict()[m] for r in reps], ddof=1)),
            )
            for m in METRIC_ORDER
        }
        for method, reps in per_fold.items()
    }
    wilcoxon: dict[str, dict[str, WilcoxonResult]] = {}
    if METHOD_TWO_PHASE in config.methods and len(config.methods) > 1:
        tp_values = {
            m: np.array([r.as_dict()[m] for r in per_fold[METHOD_TWO_PHASE]])
            for m in METRIC_ORDER
        }
        for method in config.methods:
            if method == METHOD_TWO_PHASE:
                continue
            wilcoxon[method] = {
                m: _paired_test(
                    tp_values[m], np.array([r.as_dict()[m] for r in per_fold[method]])
                )
                for m in METRIC_ORDER
            }
    return CvReport(
        methods=config.methods,
        n_folds=config.n_folds,
        labeled_fraction=config.labeled_fraction,
        seed=config.seed,
        per_fold=per_fold,
        aggregates=aggregates,
        wilcoxon=wilcoxon,
    )
