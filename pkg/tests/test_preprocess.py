import math

import numpy as np
import pytest

from fraudsieve.errors import DataError
from fraudsieve.preprocess import (
    ColumnRole,
    PreprocessConfig,
    fit_pipeline,
    pearson_correlation,
    transform,
)
from fraudsieve.tabular import LabelVector, RawTable

from conftest import make_labels


def table_from(columns: dict[str, tuple[str, list]]) -> RawTable:
    names = tuple(columns)
    kinds = tuple(columns[n][0] for n in names)
    cols = []
    for n in names:
        kind, values = columns[n]
        if kind == "categorical":
            cols.append(np.array(values, dtype=object))
        else:
            cols.append(np.array([np.nan if v is None else v for v in values], dtype=np.float64))
    return RawTable(names, kinds, tuple(cols), len(cols[0]))


class TestPearson:
    def test_identity(self):
        x = np.array([1.0, 2.0, 5.0])
        assert pearson_correlation(x, x) == pytest.approx(1.0)

    def test_negation(self):
        x = np.array([1.0, 2.0, 5.0])
        assert pearson_correlation(x, -x) == pytest.approx(-1.0)

    def test_hand_arithmetic(self):
        # dx = [-1,0,1]; dy = [-4/3,-1/3,5/3]; r = 3 / sqrt(2 * 14/3)
        expected = 3.0 / math.sqrt(2.0 * 14.0 / 3.0)
        assert pearson_correlation([1, 2, 3], [1, 2, 4]) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.9819, abs=1e-4)

    def test_constant_rejected(self):
        with pytest.raises(DataError, match="constant"):
            pearson_correlation([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


class TestImputation:
    def test_grouped_median_with_global_fallback(self):
        table = table_from({
            "g": ("categorical", ["a", "a", "b", "b", "c"]),
            "x": ("numeric", [1.0, None, 10.0, 20.0, None]),
        })
        cfg = PreprocessConfig(
            roles={"g": ColumnRole("drop"), "x": ColumnRole("numeric")},
            group_by="g",
        )
        labels = make_labels([0, 0, 1, 0, 1])
        model = fit_pipeline(table, labels, cfg)
        stats = model.imputation["x"]
        assert stats["groups"] == {"a": 1.0, "b": 15.0}
        assert stats["global"] == pytest.approx(np.median([1.0, 10.0, 20.0]))
        X = transform(model, table)
        # row 1 imputed with group-a median, row 4 (group c all-missing) global
        raw = X[:, 0] * model.scalers["x"][2] + model.scalers["x"][1]
        assert raw[1] == pytest.approx(1.0)
        assert raw[4] == pytest.approx(10.0)

    def test_all_missing_numeric_rejected(self):
        # threshold 1.0 keeps the column past the missing filter, so the
        # imputer is the one that has to fail
        table = table_from({"x": ("numeric", [None, None, None])})
        cfg = PreprocessConfig(
            roles={"x": ColumnRole("numeric")}, missing_drop_threshold=1.0
        )
        with pytest.raises(DataError, match="entirely missing"):
            fit_pipeline(table, make_labels([0, 1, 0]), cfg)

    def test_categorical_mode(self):
        table = table_from({"c": ("categorical", ["x", "y", None, "y", "x", "y"])})
        cfg = PreprocessConfig(roles={"c": ColumnRole("categorical")})
        model = fit_pipeline(table, make_labels([0, 1, 0, 1, 0, 1]), cfg)
        assert model.imputation["c"]["mode"] == "y"

    def test_forward_fill_dates(self):
        table = table_from({"d": ("date", [None, 5.0, None, None, 9.0])})
        cfg = PreprocessConfig(roles={"d": ColumnRole("date")})
        model = fit_pipeline(table, make_labels([0, 1, 0, 1, 0]), cfg)
        _, mean, std = model.scalers["d"]
        filled = transform(model, table)[:, 0] * std + mean
        assert filled.tolist() == pytest.approx([5.0, 5.0, 5.0, 5.0, 9.0])


class TestEncoding:
    def test_one_hot_and_unseen_category(self):
        fit = table_from({"c": ("categorical", ["a", "b", "c", "a", "b", "c"])})
        cfg = PreprocessConfig(roles={"c": ColumnRole("categorical")})
        model = fit_pipeline(fit, make_labels([0, 1, 0, 1, 0, 1]), cfg)
        assert model.retained_outputs == ("c=a", "c=b", "c=c")
        new = table_from({"c": ("categorical", ["b", "zzz"])})
        X = transform(model, new)
        assert X[0].tolist() == [0.0, 1.0, 0.0]
        assert X[1].tolist() == [0.0, 0.0, 0.0]  # unseen maps to the zero block

    def test_binary_one_hot_complement_pruned(self):
        # a two-category one-hot pair is perfectly anti-correlated, so
        # the correlation filter drops the later column
        fit = table_from({"c": ("categorical", ["a", "b", "a", "b"])})
        cfg = PreprocessConfig(roles={"c": ColumnRole("categorical")})
        model = fit_pipeline(fit, make_labels([0, 1, 0, 1]), cfg)
        assert model.correlation_filtered == ("c=b",)
        assert model.retained_outputs == ("c=a",)

    def test_one_hot_cardinality_overflow_rejected(self):
        values = [f"v{i}" for i in range(12)]
        fit = table_from({"c": ("categorical", values)})
        cfg = PreprocessConfig(
            roles={"c": ColumnRole("categorical", encoding="one_hot")},
            one_hot_max_cardinality=10,
        )
        with pytest.raises(DataError, match="one-hot"):
            fit_pipeline(fit, make_labels([0, 1] * 6), cfg)

    def test_high_cardinality_auto_targets(self):
        values = [f"v{i % 12}" for i in range(24)]
        fit = table_from({"c": ("categorical", values)})
        cfg = PreprocessConfig(roles={"c": ColumnRole("categorical")})
        model = fit_pipeline(fit, make_labels([0, 1] * 12), cfg)
        assert model.encoders["c"]["type"] == "target"
        assert model.retained_outputs == ("c",)

    def test_target_encoding_smoothing(self):
        # category "a": 3 rows, mean 1.0; global mean 0.5; m = 10
        # encoded = (3*1 + 10*0.5) / 13
        fit = table_from({"c": ("categorical", ["a", "a", "a", "b", "b", "b"])})
        cfg = PreprocessConfig(
            roles={"c": ColumnRole("categorical", encoding="target")},
            target_smoothing=10.0,
        )
        model = fit_pipeline(fit, make_labels([1, 1, 1, 0, 0, 0]), cfg)
        mapping = model.encoders["c"]["mapping"]
        assert mapping["a"] == pytest.approx((3 * 1.0 + 10 * 0.5) / 13)
        assert mapping["b"] == pytest.approx((3 * 0.0 + 10 * 0.5) / 13)
        # unseen category gets the global smoothed mean
        new = table_from({"c": ("categorical", ["nope"])})
        assert transform(model, new)[0, 0] == pytest.approx(0.5)

    def test_target_encoding_uses_observed_labels_only(self):
        fit = table_from({"c": ("categorical", ["a", "a", "b", "b"])})
        cfg = PreprocessConfig(roles={"c": ColumnRole("categorical", encoding="target")})
        labels = LabelVector(np.array([1, -1, 0, -1], dtype=np.int8))
        model = fit_pipeline(fit, labels, cfg)
        mapping = model.encoders["c"]["mapping"]
        assert mapping["a"] == pytest.approx((1 * 1.0 + 10 * 0.5) / 11)

    def test_target_encoding_without_labels_rejected(self):
        fit = table_from({"c": ("categorical", ["a", "b"])})
        cfg = PreprocessConfig(roles={"c": ColumnRole("categorical", encoding="target")})
        labels = LabelVector(np.array([-1, -1], dtype=np.int8))
        with pytest.raises(DataError, match="observed labels"):
            fit_pipeline(fit, labels, cfg)

    def test_cyclic_encoding(self):
        fit = table_from({"m": ("numeric", [3.0, 0.0, 6.0, 9.0])})
        cfg = PreprocessConfig(roles={"m": ColumnRole("cyclic", period=12)})
        model = fit_pipeline(fit, make_labels([0, 1, 0, 1]), cfg)
        X = transform(model, fit)
        assert model.retained_outputs == ("m.sin", "m.cos")
        assert X[0].tolist() == pytest.approx([1.0, 0.0], abs=1e-12)  # month 3
        assert X[1].tolist() == pytest.approx([0.0, 1.0], abs=1e-12)
        norms = (X**2).sum(axis=1)
        assert np.abs(norms - 1.0).max() <= 1e-12

    def test_skewed_financial_log1p(self):
        fit = table_from({"s": ("numeric", [0.0, 100.0, -5.0, 3.0])})
        cfg = PreprocessConfig(roles={"s": ColumnRole("skewed_financial")})
        model = fit_pipeline(fit, make_labels([0, 1, 0, 1]), cfg)
        X = transform(model, fit)
        assert X[0, 0] == 0.0  # log1p(0) passes through untouched
        assert X[1, 0] == pytest.approx(math.log1p(100.0))
        assert X[2, 0] == pytest.approx(-math.log1p(5.0))


class TestScaling:
    def test_standardized_back_on_fit_table(self, rng):
        data = rng.normal(3.0, 2.5, size=40)
        fit = table_from({"x": ("numeric", list(data))})
        cfg = PreprocessConfig(roles={"x": ColumnRole("numeric")})
        model = fit_pipeline(fit, make_labels(rng.integers(0, 2, 40)), cfg)
        X = transform(model, fit)
        assert X[:, 0].mean() == pytest.approx(0.0, abs=1e-9)
        assert X[:, 0].std(ddof=0) == pytest.approx(1.0, abs=1e-9)

    def test_percentage_minmax(self):
        fit = table_from({"p": ("numeric", [10.0, 20.0, 60.0])})
        cfg = PreprocessConfig(roles={"p": ColumnRole("percentage")})
        model = fit_pipeline(fit, make_labels([0, 1, 0]), cfg)
        X = transform(model, fit)
        assert X[:, 0].tolist() == pytest.approx([0.0, 0.2, 1.0])


class TestSelection:
    def test_missing_filter(self, rng):
        values = [None if i < 17 else float(i) for i in range(20)]  # 85% missing
        fit = table_from({
            "bad": ("numeric", values),
            "good": ("numeric", list(rng.normal(size=20))),
        })
        cfg = PreprocessConfig(
            roles={"bad": ColumnRole("numeric"), "good": ColumnRole("numeric")}
        )
        model = fit_pipeline(fit, make_labels(rng.integers(0, 2, 20)), cfg)
        assert model.missing_filtered == ("bad",)
        assert model.retained_outputs == ("good",)

    def test_identical_columns_drop_later(self, rng):
        data = list(rng.normal(size=30))
        fit = table_from({
            "x1": ("numeric", data),
            "x2": ("numeric", data),
        })
        cfg = PreprocessConfig(
            roles={"x1": ColumnRole("numeric"), "x2": ColumnRole("numeric")}
        )
        model = fit_pipeline(fit, make_labels(rng.integers(0, 2, 30)), cfg)
        assert model.correlation_filtered == ("x2",)
        assert model.retained_outputs == ("x1",)

    def test_filter_is_order_stable(self, rng):
        cols = {f"x{i}": ("numeric", list(rng.normal(size=25))) for i in range(6)}
        cols["x3"] = ("numeric", [v * 1.0001 for v in cols["x1"][1]])
        fit = table_from(cols)
        cfg = PreprocessConfig(roles={n: ColumnRole("numeric") for n in cols})
        labels = make_labels(rng.integers(0, 2, 25))
        first = fit_pipeline(fit, labels, cfg)
        second = fit_pipeline(fit, labels, cfg)
        assert first.retained_outputs == second.retained_outputs == tuple(
            n for n in cols if n != "x3"
        )


class TestContracts:
    def test_unroled_column_rejected(self):
        fit = table_from({"x": ("numeric", [1.0, 2.0])})
        with pytest.raises(DataError, match="no role"):
            fit_pipeline(fit, make_labels([0, 1]), PreprocessConfig(roles={}))

    def test_schema_mismatch_on_transform(self, rng):
        fit = table_from({"x": ("numeric", [1.0, 2.0, 3.0])})
        cfg = PreprocessConfig(roles={"x": ColumnRole("numeric")})
        model = fit_pipeline(fit, make_labels([0, 1, 0]), cfg)
        other = table_from({"y": ("numeric", [1.0])})
        with pytest.raises(DataError, match="schema"):
            transform(model, other)

    def test_fit_transform_idempotent(self, rng):
        fit = table_from({
            "x": ("numeric", list(rng.normal(size=15))),
            "c": ("categorical", list(rng.choice(["a", "b", "c"], 15))),
        })
        cfg = PreprocessConfig(
            roles={"x": ColumnRole("numeric"), "c": ColumnRole("categorical")}
        )
        labels = make_labels(rng.integers(0, 2, 15))
        model = fit_pipeline(fit, labels, cfg)
        X1 = transform(model, fit)
        X2 = transform(model, fit)
        assert np.array_equal(X1, X2)

    def test_no_leakage_from_held_out_rows(self, rng):
        # fitting never reads rows outside the fit table: perturbing a
        # held-out row cannot change the transform of training rows
        data = rng.normal(size=(30, 2))
        fit = table_from({
            "x": ("numeric", list(data[:, 0])),
            "y": ("numeric", list(data[:, 1])),
        })
        cfg = PreprocessConfig(
            roles={"x": ColumnRole("numeric"), "y": ColumnRole("numeric")}
        )
        labels = make_labels(rng.integers(0, 2, 30))
        model = fit_pipeline(fit, labels, cfg)
        held_out = table_from({"x": ("numeric", [999.0]), "y": ("numeric", [-999.0])})
        transform(model, held_out)  # scoring a wild row
        X_before = transform(model, fit)
        model2 = fit_pipeline(fit, labels, cfg)  # refit: identical state
        assert np.array_equal(X_before, transform(model2, fit))
        assert model.scalers == model2.scalers

    def test_dataco_style_52_to_47(self, rng):
        n = 300
        names, cols, roles = [], {}, {}
        for j in range(52):
            name = f"c{j:02d}"
            col = list(rng.normal(size=n))
            if j in (7, 21, 40):
                col = [None if rng.random() < 0.85 else v for v in col]
            cols[name] = ("numeric", col)
            roles[name] = ColumnRole("numeric")
            names.append(name)
        base3 = [0.0 if v is None else v for v in cols["c03"][1]]
        base12 = [0.0 if v is None else v for v in cols["c12"][1]]
        cols["c30"] = ("numeric", [2.0 * v for v in base3])
        cols["c45"] = ("numeric", [-1.5 * v + 0.001 for v in base12])
        fit = table_from(cols)
        model = fit_pipeline(fit, make_labels(rng.integers(0, 2, n)), PreprocessConfig(roles=roles))
        assert len(model.missing_filtered) == 3
        assert len(model.correlation_filtered) == 2
        assert model.output_dim == 47
        assert transform(model, fit).shape == (n, 47)
