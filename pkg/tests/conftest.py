import numpy as np
import pytest

from fraudsieve.tabular import LabelVector, RawTable


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_numeric_table(X: np.ndarray, prefix: str = "f") -> RawTable:
    names = tuple(f"{prefix}{j}" for j in range(X.shape[1]))
    return RawTable(
        names,
        tuple("numeric" for _ in names),
        tuple(np.ascontiguousarray(X[:, j], dtype=np.float64) for j in range(X.shape[1])),
        X.shape[0],
    )


def make_labels(y) -> LabelVector:
    return LabelVector(np.asarray(y, dtype=np.int8))
