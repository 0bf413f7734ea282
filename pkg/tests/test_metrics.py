import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import rankdata

from fraudsieve.errors import DataError
from fraudsieve.metrics import (
    ConfusionMatrix,
    auc_pr,
    auc_roc,
    confusion,
    metrics_report,
    prf_metrics,
    wilcoxon_signed_rank,
)


class TestConfusion:
    def test_perfect(self):
        y = np.zeros(100, dtype=int)
        y[:5] = 1
        cm = confusion(y, y)
        assert (cm.tp, cm.fp, cm.fn, cm.tn) == (5, 0, 0, 95)

    def test_all_negative_predictions(self):
        y = np.array([1, 0, 1, 0])
        cm = confusion(y, np.zeros(4, dtype=int))
        assert cm.tp == 0 and cm.fp == 0 and cm.fn == 2 and cm.tn == 2

    def test_counts_sum(self):
        cm = ConfusionMatrix(8, 2, 2, 88)
        assert cm.total == 100

    def test_length_mismatch(self):
        with pytest.raises(DataError, match="length"):
            confusion([0, 1], [0])

    def test_out_of_domain(self):
        with pytest.raises(DataError):
            confusion([0, 2], [0, 1])


class TestPrf:
    def test_worked_example(self):
        p, r, f1, fpr = prf_metrics(ConfusionMatrix(8, 2, 2, 88))
        assert p == pytest.approx(0.8)
        assert r == pytest.approx(0.8)
        assert f1 == pytest.approx(0.8)
        assert fpr == pytest.approx(2 / 90)

    def test_perfect(self):
        p, r, f1, fpr = prf_metrics(ConfusionMatrix(10, 0, 0, 90))
        assert (p, r, f1, fpr) == (1.0, 1.0, 1.0, 0.0)

    def test_zero_over_zero_convention(self):
        p, r, f1, fpr = prf_metrics(ConfusionMatrix(0, 0, 0, 10))
        assert (p, r, f1) == (0.0, 0.0, 0.0)


def pairwise_auc(scores, y):
    """Brute-force concordance oracle: P(pos > neg) + 0.5 P(tie)."""
    pos = [s for s, t in zip(scores, y) if t == 1]
    neg = [s for s, t in zip(scores, y) if t == 0]
    total = 0.0
    for sp in pos:
        for sn in neg:
            total += 1.0 if sp > sn else (0.5 if sp == sn else 0.0)
    return total / (len(pos) * len(neg))


class TestAucRoc:
    def test_separated(self):
        y = np.array([0, 0, 1, 1])
        assert auc_roc([0.1, 0.2, 0.8, 0.9], y) == 1.0

    def test_single_discordant_pair(self):
        assert auc_roc([0.4, 0.6], [1, 0]) == 0.0

    def test_all_ties(self):
        assert auc_roc([0.5] * 6, [0, 1, 0, 1, 0, 1]) == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(DataError):
            auc_roc([0.1, 0.2], [1, 1])

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32), n=st.integers(5, 200), ties=st.booleans())
    def test_matches_pairwise_oracle(self, seed, n, ties):
        rng = np.random.default_rng(seed)
        scores = rng.random(n)
        if ties:
            scores = np.round(scores, 1)
        y = rng.integers(0, 2, n)
        if y.sum() in (0, n):
            y[0] = 1 - y[0]
        assert auc_roc(scores, y) == pytest.approx(pairwise_auc(scores, y), abs=1e-9)


class TestAucPr:
    def test_positives_first(self):
        y = np.array([1, 1, 0, 0])
        assert auc_pr([0.9, 0.8, 0.2, 0.1], y) == 1.0

    def test_single_positive_last(self):
        y = np.array([0, 0, 0, 1])
        assert auc_pr([0.9, 0.8, 0.7, 0.1], y) == pytest.approx(0.25)

    def test_tie_block_processed_once(self):
        # all scores equal: one block, precision = base rate at full recall
        y = np.array([1, 0, 0, 0])
        assert auc_pr([0.5] * 4, y) == pytest.approx(0.25)

    def test_no_positive_rejected(self):
        with pytest.raises(DataError):
            auc_pr([0.1, 0.2], [0, 0])

    def test_random_scores_approach_positive_rate(self):
        aps = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            n = 2000
            y = np.zeros(n, dtype=int)
            y[rng.permutation(n)[:30]] = 1  # 1.5% positives
            aps.append(auc_pr(rng.random(n), y))
        assert abs(float(np.mean(aps)) - 0.015) <= 0.01


def enumerate_min_rank_sum_p(diffs):
    """Literal 2^m enumeration of sign assignments."""
    d = np.asarray(diffs, dtype=float)
    d = d[d != 0]
    ranks = rankdata(np.abs(d))
    w_plus = ranks[d > 0].sum()
    w_minus = ranks[d < 0].sum()
    w_obs = min(w_plus, w_minus)
    hits = 0
    m = len(ranks)
    for signs in itertools.product((1, -1), repeat=m):
        wp = sum(r for r, s in zip(ranks, signs) if s > 0)
        wm = ranks.sum() - wp
        if min(wp, wm) <= w_obs + 1e-12:
            hits += 1
    return w_obs, hits / 2**m


class TestWilcoxon:
    def test_all_positive_small(self):
        res = wilcoxon_signed_rank([2, 3, 4, 5, 6], [1, 1, 1, 1, 1])
        assert res.statistic == 0.0
        assert res.p_value == 0.0625  # 2/32 exactly
        assert res.method == "exact"

    def test_identical_inputs_inconclusive(self):
        res = wilcoxon_signed_rank([1, 2, 3, 4, 5], [1, 2, 3, 4, 5])
        assert res.inconclusive
        assert math.isnan(res.p_value)

    def test_alternating_ten(self):
        a = np.array([-1, 2, -3, 4, -5, 6, -7, 8, -9, 10], dtype=float)
        res = wilcoxon_signed_rank(a, np.zeros(10))
        w_oracle, p_oracle = enumerate_min_rank_sum_p(a)
        assert res.statistic == w_oracle == 25.0
        assert res.p_value == pytest.approx(p_oracle, abs=1e-12)

    def test_too_short_rejected(self):
        with pytest.raises(DataError):
            wilcoxon_signed_rank([1, 2], [0, 0])

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32), n=st.integers(5, 12), ties=st.booleans())
    def test_exact_matches_enumeration(self, seed, n, ties):
        rng = np.random.default_rng(seed)
        d = rng.normal(size=n)
        if ties:
            d = np.round(d * 2) / 2.0
        res = wilcoxon_signed_rank(d, np.zeros(n))
        if res.inconclusive:
            assert np.count_nonzero(d) < 5
            return
        w_oracle, p_oracle = enumerate_min_rank_sum_p(d)
        assert res.statistic == pytest.approx(w_oracle)
        assert res.p_value == pytest.approx(p_oracle, abs=1e-12)

    def test_normal_branch_near_exact(self):
        # m = 21 uses the normal approximation; sanity-check against the
        # exact distribution computed by enumeration-equivalent DP at m=20
        rng = np.random.default_rng(0)
        a = rng.normal(size=25) + 0.8
        res = wilcoxon_signed_rank(a, np.zeros(25))
        assert res.method == "normal"
        assert 0.0 < res.p_value < 0.05


class TestMetricsReport:
    def test_fields_consistent(self):
        y = np.array([1, 0, 1, 0, 0, 1, 0, 0])
        pred = np.array([1, 0, 0, 0, 1, 1, 0, 0])
        scores = np.array([0.9, 0.2, 0.4, 0.1, 0.7, 0.8, 0.3, 0.2])
        rep = metrics_report(y, pred, scores)
        p, r, f1, fpr = prf_metrics(rep.confusion)
        assert (rep.precision, rep.recall, rep.f1, rep.fpr) == (p, r, f1, fpr)
        assert rep.auc_roc == pytest.approx(pairwise_auc(scores, y))
