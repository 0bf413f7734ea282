"""Synthetic transaction generator: Gaussian legit clusters plus fraud
rows that are either an offset cluster (separable with noise) or uniform
scatter over an enlarged bounding box (classic anomalies)."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .rand import OP_SYNTH, derived_rng
from .tabular import FRAUD, LEGIT, LabelVector, RawTable

FRAUD_MODES = ("offset_cluster", "uniform_scatter")


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 10_000
    n_features: int = 8
    fraud_rate: float = 0.015
    n_clusters: int = 3
    cluster_std: float = 1.0
    cluster_spread: float = 8.0  # box half-width for legit cluster centers
    mode: str = "offset_cluster"
    fraud_offset: float = 6.0  # distance from a legit center, offset_cluster mode
    fraud_std: float = 1.2

    def __post_init__(self):
        if self.n < 2 or self.n_features < 1 or self.n_clusters < 1:
            raise DataError("n, n_features and n_clusters must be positive (n >= 2)")
        if not (0.0 <= self.fraud_rate < 1.0):
            raise DataError("fraud_rate must lie in [0, 1)")
        if self.mode not in FRAUD_MODES:
            raise DataError(f"mode must be one of {FRAUD_MODES}")
        if self.cluster_std <= 0 or self.fraud_std <= 0:
            raise DataError("cluster_std and fraud_std must be positive")


def generate(spec: SyntheticSpec, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """(X, y) with exactly round(fraud_rate * n) fraud rows, shuffled."""
    rng = derived_rng(seed, OP_SYNTH)
    n_fraud = int(round(spec.fraud_rate * spec.n))
    n_legit = spec.n - n_fraud
    d = spec.n_features

    centers = rng.uniform(-spec.cluster_spread, spec.cluster_spread, (spec.n_clusters, d))
    assignment = rng.integers(spec.n_clusters, size=n_legit)
    X_legit = centers[assignment] + rng.normal(0.0, spec.cluster_std, (n_legit, d))

    if n_fraud > 0:
        if spec.mode == "offset_cluster":
            base = centers[rng.integers(spec.n_clusters)]
            direction = rng.normal(size=d)
            direction /= np.linalg.norm(direction)
            fraud_center = base + spec.fraud_offset * direction
            X_fraud = fraud_center + rng.normal(0.0, spec.fraud_std, (n_fraud, d))
        else:
            lo = X_legit.min(axis=0) - 2.0 * spec.cluster_std
            hi = X_legit.max(axis=0) + 2.0 * spec.cluster_std
            X_fraud = rng.uniform(lo, hi, (n_fraud, d))
        X = np.vstack([X_legit, X_fraud])
        y = np.concatenate([np.full(n_legit, LEGIT), np.full(n_fraud, FRAUD)])
    else:
        X, y = X_legit, np.full(n_legit, LEGIT)

    order = rng.permutation(spec.n)
    return X[order], y[order].astype(np.int8)


def feature_names(spec: SyntheticSpec) -> list[str]:
    return [f"f{i}" for i in range(spec.n_features)]


def as_table(spec: SyntheticSpec, seed: int) -> tuple[RawTable, LabelVector]:
    """Generate directly into the tabular representation."""
    X, y = generate(spec, seed)
    names = feature_names(spec)
    table = RawTable(
        tuple(names),
        tuple("numeric" for _ in names),
        tuple(np.ascontiguousarray(X[:, j]) for j in range(spec.n_features)),
        spec.n,
    )
    return table, LabelVector(y)


def write_csv(path, spec: SyntheticSpec, seed: int, label_column: str = "fraud") -> None:
    """Write the generated dataset as CSV with a trailing 0/1 label column."""
    X, y = generate(spec, seed)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(feature_names(spec) + [label_column])
        for row, label in zip(X, y):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
