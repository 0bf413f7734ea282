import math

import numpy as np
import pytest

from fraudsieve.errors import DataError
from fraudsieve.selftrain import (
    SelfTrainConfig,
    class_threshold,
    confidence,
    select_pseudo_labels,
    self_train,
)
from fraudsieve.svm import KernelParams, SvmModel, decision_values, train_svm


def blob_problem(rng, n_labeled=60, n_candidates=40, offset=4.0):
    half = n_labeled // 2
    X_l = np.vstack([
        rng.normal((0.0, 0.0), 0.6, size=(half, 2)),
        rng.normal((offset, 0.0), 0.6, size=(n_labeled - half, 2)),
    ])
    y_l = np.array([0] * half + [1] * (n_labeled - half))
    X_c = np.vstack([
        rng.normal((0.0, 0.0), 0.6, size=(n_candidates // 2, 2)),
        rng.normal((offset, 0.0), 0.6, size=(n_candidates - n_candidates // 2, 2)),
    ])
    return X_l, y_l, X_c


def fixed_model(bias=0.0) -> SvmModel:
    return SvmModel(
        support_vectors=np.empty((0, 2)),
        dual_coeffs=np.empty(0),
        bias=bias,
        params=KernelParams(1.0, 1.0),
        max_abs_decision_on_train=abs(bias),
        kkt_violation=0.0,
        converged=True,
    )


class TestConfidence:
    def test_direct_ratio(self):
        assert confidence([2.0, -1.0, 0.5]).tolist() == [1.0, 0.5, 0.25]

    def test_equal_magnitudes(self):
        assert confidence([-3.0, 3.0, 3.0]).tolist() == [1.0, 1.0, 1.0]

    def test_all_zero(self):
        assert confidence([0.0, 0.0]).tolist() == [0.0, 0.0]

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            confidence([])


class TestClassThreshold:
    def test_at_target(self):
        assert class_threshold(100, 100, 0.85, 0.3) == 0.85

    def test_double_target_clamps(self):
        # raw 0.85 + 0.3*ln 2 = 1.0579... -> cap
        assert class_threshold(200, 100, 0.85, 0.3) == 0.999

    def test_half_target(self):
        expected = 0.85 - 0.3 * math.log(2.0)
        assert class_threshold(50, 100, 0.85, 0.3) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.6421, abs=1e-4)

    def test_zero_count_treated_as_one(self):
        assert class_threshold(0, 100, 0.85, 0.3) == class_threshold(1, 100, 0.85, 0.3)

    def test_clamped_to_zero_below(self):
        assert class_threshold(0, 10**9, 0.85, 0.3) == 0.0

    def test_monotone_in_count(self):
        values = [class_threshold(n, 50, 0.85, 0.3) for n in range(0, 200, 7)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_bad_target(self):
        with pytest.raises(DataError):
            class_threshold(1, 0, 0.85, 0.3)


class TestSelectPseudoLabels:
    def test_threshold_gates_selection(self, rng):
        X_l, y_l, _ = blob_problem(rng)
        model = train_svm(X_l, y_l, KernelParams(0.5, 10.0), tol=1e-4)
        candidates = np.array([[4.0, 0.0], [2.0, 0.0]])  # confident fraud, boundary
        f = decision_values(model, candidates)
        conf = np.abs(f) / np.abs(f).max()
        cfg = SelfTrainConfig(theta_base=0.85, beta=0.0)
        batch, theta_fraud, theta_legit = select_pseudo_labels(
            candidates, model, (0, 0), cfg, n_target=10
        )
        assert theta_fraud == theta_legit == 0.85
        expected = {i for i in range(2) if conf[i] >= 0.85}
        assert set(batch.indices.tolist()) == expected

    def test_confidences_recorded_meet_threshold(self, rng):
        X_l, y_l, X_c = blob_problem(rng)
        model = train_svm(X_l, y_l, KernelParams(0.5, 10.0), tol=1e-4)
        cfg = SelfTrainConfig(theta_base=0.6, beta=0.0)
        batch, theta_fraud, theta_legit = select_pseudo_labels(
            X_c, model, (0, 0), cfg, n_target=10
        )
        for label, conf in zip(batch.labels, batch.confidences):
            assert conf >= (theta_fraud if label == 1 else theta_legit)

    def test_empty_batch_is_valid(self):
        # zero decision values give zero confidences below any positive bar
        model = fixed_model(bias=0.0)
        cfg = SelfTrainConfig(theta_base=0.85, beta=0.0)
        batch, _, _ = select_pseudo_labels(np.zeros((3, 2)), model, (0, 0), cfg, 10)
        assert len(batch) == 0

    def test_max_confidence_always_selectable_at_cap(self):
        # thresholds clamp at 0.999 and the per-batch max confidence is 1.0
        model = fixed_model(bias=2.0)  # every candidate predicted fraud, conf 1.0
        cfg = SelfTrainConfig(theta_base=0.85, beta=0.3)
        counts = (0, 10**9)  # fraud bar clamped to 0.999
        batch, theta_fraud, _ = select_pseudo_labels(
            np.zeros((4, 2)), model, counts, cfg, n_target=5
        )
        assert theta_fraud == 0.999
        assert len(batch) == 4  # all tie at confidence exactly 1.0

    def test_all_legit_batch(self, rng):
        model = fixed_model(bias=-1.5)
        cfg = SelfTrainConfig(theta_base=0.5, beta=0.0)
        batch, _, _ = select_pseudo_labels(rng.normal(size=(5, 2)), model, (0, 0), cfg, 10)
        assert set(batch.labels.tolist()) == {0}


class TestSelfTrain:
    def test_empty_candidates_returns_initial(self, rng):
        X_l, y_l, _ = blob_problem(rng)
        model, history = self_train(
            X_l, y_l, np.empty((0, 2)), KernelParams(0.5, 10.0),
            SelfTrainConfig(min_batch=1), seed=0,
        )
        assert len(history) == 1
        assert history.records[0].iteration == 0
        assert math.isnan(history.records[0].delta_f1)

    def test_iteration_cap(self, rng):
        X_l, y_l, X_c = blob_problem(rng, n_candidates=200)
        cfg = SelfTrainConfig(min_batch=1, max_iterations=10, delta_f1_tol=-1.0)
        model, history = self_train(X_l, y_l, X_c, KernelParams(0.5, 10.0), cfg, seed=0)
        assert len(history) <= 11

    def test_pool_strictly_grows_and_batches_tracked(self, rng):
        X_l, y_l, X_c = blob_problem(rng, n_candidates=120)
        cfg = SelfTrainConfig(min_batch=1, theta_base=0.6)
        model, history = self_train(X_l, y_l, X_c, KernelParams(0.5, 10.0), cfg, seed=1)
        sizes = [r.labeled_size for r in history.records]
        assert all(b > a for a, b in zip(sizes, sizes[1:]))
        for rec in history.records[1:]:
            assert rec.added_fraud + rec.added_legit == len(rec.batch)
            for label, conf in zip(rec.batch.labels, rec.batch.confidences):
                bar = rec.theta_fraud if label == 1 else rec.theta_legit
                assert conf >= bar

    def test_sub_min_batch_discarded(self, rng):
        X_l, y_l, X_c = blob_problem(rng, n_candidates=20)
        cfg = SelfTrainConfig(min_batch=10**6)
        model, history = self_train(X_l, y_l, X_c, KernelParams(0.5, 10.0), cfg, seed=0)
        assert len(history) == 1  # the batch never enters the pool

    def test_best_iteration_returned(self, rng):
        X_l, y_l, X_c = blob_problem(rng, n_candidates=150)
        cfg = SelfTrainConfig(min_batch=1, theta_base=0.5)
        model, history = self_train(X_l, y_l, X_c, KernelParams(0.5, 10.0), cfg, seed=2)
        best = history.best_iteration
        f1s = [r.val_f1 for r in history.records]
        assert f1s[best] == max(f1s)
        assert f1s[best] >= f1s[0]

    def test_delta_f1_recorded_exactly(self, rng):
        X_l, y_l, X_c = blob_problem(rng, n_candidates=150)
        cfg = SelfTrainConfig(min_batch=1, theta_base=0.5, delta_f1_tol=-1.0)
        _, history = self_train(X_l, y_l, X_c, KernelParams(0.5, 10.0), cfg, seed=3)
        for prev, cur in zip(history.records, history.records[1:]):
            assert cur.delta_f1 == cur.val_f1 - prev.val_f1

    def test_single_class_labeled_rejected(self, rng):
        X = rng.normal(size=(10, 2))
        with pytest.raises(DataError):
            self_train(X, np.ones(10, dtype=int), np.empty((0, 2)),
                       KernelParams(0.5, 10.0), SelfTrainConfig(), seed=0)

    def test_history_csv_round_layout(self, rng, tmp_path):
        X_l, y_l, X_c = blob_problem(rng, n_candidates=80)
        cfg = SelfTrainConfig(min_batch=1, theta_base=0.6)
        _, history = self_train(X_l, y_l, X_c, KernelParams(0.5, 10.0), cfg, seed=0)
        path = tmp_path / "history.csv"
        history.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].split(",") == list(history.CSV_COLUMNS)
        assert len(lines) == len(history) + 1

    def test_adversarial_configs_terminate(self, rng):
        # randomized configs: the loop bound must always hold
        for trial in range(20):
            trng = np.random.default_rng(trial)
            X_l, y_l, X_c = blob_problem(
                trng,
                n_labeled=int(trng.integers(20, 60)),
                n_candidates=int(trng.integers(0, 120)),
                offset=float(trng.uniform(1.0, 6.0)),
            )
            cfg = SelfTrainConfig(
                theta_base=float(trng.uniform(0.05, 0.95)),
                beta=float(trng.uniform(0.0, 1.0)),
                n_target=int(trng.integers(1, 80)),
                max_iterations=10,
                delta_f1_tol=float(trng.uniform(-0.5, 0.1)),
                min_batch=int(trng.integers(1, 30)),
            )
            model, history = self_train(
                X_l, y_l, X_c, KernelParams(0.5, 10.0), cfg, seed=trial
            )
            assert len(history) <= 11
            sizes = [r.labeled_size for r in history.records]
            assert all(b > a for a, b in zip(sizes, sizes[1:]))
