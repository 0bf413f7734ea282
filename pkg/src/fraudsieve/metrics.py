"""Imbalance-aware binary classification metrics and paired significance
testing, with fraud (1) as the positive class."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DataError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    fpr: float
    auc_roc: float
    auc_pr: float
    confusion: ConfusionMatrix

    def as_dict(self) -> dict[str, float]:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "fpr": self.fpr,
            "auc_roc": self.auc_roc,
            "auc_pr": self.auc_pr,
        }


@dataclass(frozen=True)
class WilcoxonResult:
    """Signed-rank test outcome. `inconclusive` is set when fewer than 5
    nonzero differences remain, in which case p_value is NaN."""

    statistic: float
    p_value: float
    n_nonzero: int
    inconclusive: bool
    method: str  # "exact" | "normal" | "none"


def _check_binary(y, name: str) -> np.ndarray:
    arr = np.asarray(y)
    if not np.isin(arr, (0, 1)).all():
        raise DataError(f"{name} must contain only 0/1 labels")
    return arr.astype(np.int64)


def confusion(y_true, y_pred) -> ConfusionMatrix:
    """Count tp/fp/fn/tn with fraud=1 positive."""
    t = _check_binary(y_true, "y_true")
    p = _check_binary(y_pred, "y_pred")
    if len(t) != len(p):
        raise DataError(f"length mismatch: {len(t)} true vs {len(p)} predicted")
    tp = int(np.sum((t == 1) & (p == 1)))
    fp = int(np.sum((t == 0) & (p == 1)))
    fn = int(np.sum((t == 1) & (p == 0)))
    tn = int(np.sum((t == 0) & (p == 0)))
    return ConfusionMatrix(tp, fp, fn, tn)


def prf_metrics(cm: ConfusionMatrix) -> tuple[float, float, float, float]:
    """(precision, recall, f1, fpr); every 0/0 evaluates to 0."""
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    fpr = cm.fp / (cm.fp + cm.tn) if cm.fp + cm.tn else 0.0
    return precision, recall, f1, fpr


def auc_roc(scores, y_true) -> float:
    """Probability that a random positive outscores a random negative,
    ties counting one half (rank / Mann-Whitney formulation)."""
    s = np.asarray(scores, dtype=np.float64)
    y = _check_binary(y_true, "y_true")
    n_pos = int(np.sum(y == 1))
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("auc_roc needs both classes present")
    ranks = rankdata(s, method="average")
    pos_rank_sum = float(np.sum(ranks[y == 1]))
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auc_pr(scores, y_true) -> float:
    """Average precision: sum of precision * recall-increment over a
    descending-score sweep, with tied scores processed as one block."""
    s = np.asarray(scores, dtype=np.float64)
    y = _check_binary(y_true, "y_true")
    n_pos = int(np.sum(y == 1))
    if n_pos == 0:
        raise DataError("auc_pr needs at least one positive")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    ap = 0.0
    tp = fp = 0
    i = 0
    n = len(s_sorted)
    while i < n:
        j = i
        while j < n and s_sorted[j] == s_sorted[i]:
            j += 1
        block_tp = int(np.sum(y_sorted[i:j]))
        tp += block_tp
        fp += (j - i) - block_tp
        if block_tp:
            ap += (block_tp / n_pos) * (tp / (tp + fp))
        i = j
    return ap


def metrics_report(y_true, y_pred, scores) -> MetricsReport:
    """Assemble the full per-run metric set from labels and ranking scores."""
    cm = confusion(y_true, y_pred)
    precision, recall, f1, fpr = prf_metrics(cm)
    return MetricsReport(
        precision, recall, f1, fpr, auc_roc(scores, y_true), auc_pr(scores, y_true), cm
    )


_EXACT_LIMIT = 20


def _exact_min_rank_sum_pvalue(ranks: np.ndarray, w_obs: float) -> float:
    """P(min(W+, W-) <= w_obs) over all equiprobable sign assignments.

    Ranks may be half-integers (tied averages); doubling makes every
    subset sum an integer, so a subset-sum count gives the exact
    distribution of W+ without enumerating 2^m assignments one by one.
    """
    doubled = np.rint(2.0 * ranks).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in doubled:  # r >= 2 since every rank >= 1
        counts[r:] = counts[r:] + counts[:-r]
    w2 = int(math.floor(2.0 * w_obs + 1e-9))
    hits = int(np.sum(counts[: min(w2, total) + 1]))  # W+ <= w_obs
    lo_mirror = total - w2  # W- <= w_obs  <=>  W+ >= total - w2
    hits += int(np.sum(counts[max(lo_mirror, 0):]))
    if lo_mirror <= w2:  # overlap counted twice
        hits -= int(np.sum(counts[max(lo_mirror, 0): w2 + 1]))
    return hits / float(2 ** len(ranks))


def wilcoxon_signed_rank(a, b) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped; |differences| are ranked with average
    ranks for ties; the statistic is W = min(W+, W-). The p-value is
    exact (sign-assignment distribution) up to 20 nonzero differences and
    a tie-corrected normal approximation with continuity correction
    above. Fewer than 5 nonzero differences is reported inconclusive.
    """
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape or av.ndim != 1:
        raise DataError("paired samples must be equal-length 1-d vectors")
    if len(av) < 5:
        raise DataError("wilcoxon_signed_rank needs at least 5 pairs")
    d = av - bv
    d = d[d != 0.0]
    m = len(d)
    if m < 5:
        return WilcoxonResult(float("nan"), float("nan"), m, True, "none")
    ranks = rankdata(np.abs(d), method="average")
    w_plus = float(np.sum(ranks[d > 0]))
    w_minus = float(np.sum(ranks[d < 0]))
    w = min(w_plus, w_minus)
    if m <= _EXACT_LIMIT:
        p = _exact_min_rank_sum_pvalue(ranks, w)
        return WilcoxonResult(w, min(p, 1.0), m, False, "exact")
    mean = m * (m + 1) / 4.0
    var = m * (m + 1) * (2 * m + 1) / 24.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var -= float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    if var <= 0.0:  # all differences tied at one magnitude with m > 20
        var = 1e-12
    z = (w - mean + 0.5) / math.sqrt(var)  # continuity correction toward the mean
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return WilcoxonResult(w, min(p, 1.0), m, False, "normal")
