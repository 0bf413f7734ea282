"""Iterative pseudo-labeling of pre-filtered candidates.

Each round the current SVM predicts the remaining candidates, candidate
confidences are decision magnitudes normalized by the round's maximum,
and a candidate is absorbed into the labeled pool when its confidence
clears a class-specific bar that rises as that class accumulates
pseudo-labels. Training stops on a small validation-F1 gain, a small
batch, exhausted candidates, or the iteration cap, and the model from
the best-validation iteration is returned.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .metrics import confusion, prf_metrics
from .rand import OP_SELFTRAIN_HOLDOUT, derived_rng
from .svm import KernelParams, SvmModel, decision_values, inverse_frequency_weights, train_svm

THETA_CAP = 0.999


@dataclass(frozen=True)
class SelfTrainConfig:
    theta_base: float = 0.85
    beta: float = 0.3
    n_target: int | None = None  # default 0.5 * |labeled| per class
    max_iterations: int = 10
    delta_f1_tol: float = 0.001
    min_batch: int = 50
    validation_fraction: float = 0.2

    def __post_init__(self):
        if not (0.0 < self.theta_base < 1.0):
            raise DataError("theta_base must lie in (0, 1)")
        if self.beta < 0:
            raise DataError("beta must be nonnegative")
        if not (0.0 < self.validation_fraction < 1.0):
            raise DataError("validation_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class PseudoLabelBatch:
    """Selected candidates: positions into the candidate matrix, their
    predicted labels, and confidences at selection time."""

    indices: np.ndarray
    labels: np.ndarray
    confidences: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)

    def count(self, label: int) -> int:
        return int(np.sum(self.labels == label))


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    val_f1: float
    delta_f1: float  # NaN for iteration 0
    added_fraud: int
    added_legit: int
    theta_fraud: float  # NaN for iteration 0
    theta_legit: float
    labeled_size: int
    batch: PseudoLabelBatch | None = field(repr=False, default=None)


@dataclass
class SelfTrainHistory:
    records: list[IterationRecord]

    def __len__(self) -> int:
        return len(self.records)

    @property
    def best_iteration(self) -> int:
        f1s = [r.val_f1 for r in self.records]
        return int(np.argmax(f1s))  # earliest wins ties

    CSV_COLUMNS = (
        "iteration",
        "val_f1",
        "delta_f1",
        "added_fraud",
        "added_legit",
        "theta_fraud",
        "theta_legit",
        "labeled_size",
    )

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.CSV_COLUMNS)
            for r in self.records:
                writer.writerow(
                    [
                        r.iteration,
                        repr(r.val_f1),
                        "" if math.isnan(r.delta_f1) else repr(r.delta_f1),
                        r.added_fraud,
                        r.added_legit,
                        "" if math.isnan(r.theta_fraud) else repr(r.theta_fraud),
                        "" if math.isnan(r.theta_legit) else repr(r.theta_legit),
                        r.labeled_size,
                    ]
                )


def confidence(decision_vals) -> np.ndarray:
    """|f| / max|f| over the batch; all zeros when the max is zero."""
    f = np.asarray(decision_vals, dtype=np.float64)
    if f.size == 0:
        raise DataError("confidence needs a nonempty vector")
    m = float(np.max(np.abs(f)))
    if m == 0.0:
        return np.zeros_like(f)
    return np.abs(f) / m


def class_threshold(n_c: int, n_target: int, theta_base: float, beta: float) -> float:
    """theta_base + beta * ln(max(n_c, 1) / n_target), clamped to
    [0, 0.999]. Rises as class c accumulates pseudo-labels."""
    if n_target < 1:
        raise DataError("n_target must be at least 1")
    raw = theta_base + beta * math.log(max(n_c, 1) / n_target)
    return min(max(raw, 0.0), THETA_CAP)


def select_pseudo_labels(
    candidates,
    model: SvmModel,
    counts: tuple[int, int],
    cfg: SelfTrainConfig,
    n_target: int,
) -> tuple[PseudoLabelBatch, float, float]:
    """Predict the candidates and keep those whose confidence clears
    their predicted class's threshold.

    counts is (pseudo-labeled legit so far, pseudo-labeled fraud so far).
    Returns (batch, theta_fraud, theta_legit).
    """
    X = np.ascontiguousarray(candidates, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("candidates must be a nonempty 2-d matrix")
    f = decision_values(model, X)
    pred = (f > 0.0).astype(np.int8)
    conf = confidence(f)
    theta_legit = class_threshold(counts[0], n_target, cfg.theta_base, cfg.beta)
    theta_fraud = class_threshold(counts[1], n_target, cfg.theta_base, cfg.beta)
    keep = conf >= np.where(pred == 1, theta_fraud, theta_legit)
    idx = np.flatnonzero(keep)
    return (
        PseudoLabelBatch(idx, pred[idx].copy(), conf[idx].copy()),
        theta_fraud,
        theta_legit,
    )


def _stratified_holdout(y: np.ndarray, fraction: float, seed: int):
    """(train_idx, val_idx); at least one member per class stays in each
    side whenever the class has two or more members."""
    rng = derived_rng(seed, OP_SELFTRAIN_HOLDOUT)
    val_parts = []
    for label in (0, 1):
        members = rng.permutation(np.flatnonzero(y == label))
        k = int(round(fraction * len(members)))
        k = min(max(k, 1 if len(members) > 1 else 0), len(members) - 1)
        val_parts.append(members[:k])
    val = np.sort(np.concatenate(val_parts))
    mask = np.ones(len(y), dtype=bool)
    mask[val] = False
    return np.flatnonzero(mask), val


def _fit(X, y, base: KernelParams, tol, max_passes) -> SvmModel:
    w_legit, w_fraud = inverse_frequency_weights(y)
    params = KernelParams(base.gamma, base.C, w_fraud, w_legit)
    return train_svm(X, y, params, tol=tol, max_passes=max_passes)


def self_train(
    X_labeled,
    y_labeled,
    X_candidates,
    params: KernelParams,
    cfg: SelfTrainConfig = SelfTrainConfig(),
    seed: int = 0,
    tol: float = 1e-3,
    max_passes: int = 200,
) -> tuple[SvmModel, SelfTrainHistory]:
    """Run the pseudo-labeling refinement loop.

    A stratified validation_fraction of the labeled rows is held out for
    F1 monitoring; class weights are recomputed over the augmented pool
    at every retrain. The returned model is the one from the iteration
    with the best validation F1 (never worse than the initial model).
    """
    X_l = np.ascontiguousarray(X_labeled, dtype=np.float64)
    y_l = np.asarray(y_labeled, dtype=np.int8)
    X_c = np.ascontiguousarray(X_candidates, dtype=np.float64)
    if X_c.ndim != 2:
        X_c = X_c.reshape(0, X_l.shape[1])
    n_target = cfg.n_target if cfg.n_target is not None else max(1, round(0.5 * len(y_l)))

    train_idx, val_idx = _stratified_holdout(y_l, cfg.validation_fraction, seed)
    X_val, y_val = X_l[val_idx], y_l[val_idx]

    pool_X = X_l[train_idx]
    pool_y = y_l[train_idx]

    def val_f1(model: SvmModel) -> float:
        pred = (decision_values(model, X_val) > 0.0).astype(np.int8)
        return prf_metrics(confusion(y_val, pred))[2]

    model = _fit(pool_X, pool_y, params, tol, max_passes)
    f1 = val_f1(model)
    records = [
        IterationRecord(0, f1, float("nan"), 0, 0, float("nan"), float("nan"), len(pool_y))
    ]
    models = [model]

    remaining = X_c
    counts = (0, 0)  # (legit, fraud) pseudo-labels accumulated
    prev_f1 = f1
    for t in range(1, cfg.max_iterations + 1):
        if remaining.shape[0] == 0:
            break
        batch, theta_fraud, theta_legit = select_pseudo_labels(
            remaining, model, counts, cfg, n_target
        )
        if len(batch) < max(cfg.min_batch, 1):  # sub-minimum batches are discarded
            break
        pool_X = np.vstack([pool_X, remaining[batch.indices]])
        pool_y = np.concatenate([pool_y, batch.labels])
        keep_mask = np.ones(remaining.shape[0], dtype=bool)
        keep_mask[batch.indices] = False
        remaining = remaining[keep_mask]
        counts = (counts[0] + batch.count(0), counts[1] + batch.count(1))

        model = _fit(pool_X, pool_y, params, tol, max_passes)
        f1 = val_f1(model)
        delta = f1 - prev_f1
        records.append(
            IterationRecord(
                t,
                f1,
                delta,
                batch.count(1),
                batch.count(0),
                theta_fraud,
                theta_legit,
                len(pool_y),
                batch,
            )
        )
        models.append(model)
        prev_f1 = f1
        if delta < cfg.delta_f1_tol:
            break

    history = SelfTrainHistory(records)
    return models[history.best_iteration], history
