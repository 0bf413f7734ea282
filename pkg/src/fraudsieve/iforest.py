"""Isolation forest anomaly scoring and adaptive candidate selection.

Trees isolate points by recursive random axis-aligned splits; the
anomaly score maps the mean isolation depth through
``2 ** (-depth / c(psi))`` where ``c(n)`` is the expected unsuccessful
BST search length. Candidate selection thresholds scores at
``mean + alpha * std`` with a contamination-based minimum-size floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .rand import OP_FOREST, derived_rng

DEFAULT_N_TREES = 100
DEFAULT_SUBSAMPLE = 256


def c_factor(n: int) -> float:
    """Expected unsuccessful-search path length in a BST of n points:
    2*H(n-1) - 2(n-1)/n, with the exact harmonic sum. 0 for n <= 1."""
    if n <= 1:
        return 0.0
    harmonic = float(np.sum(1.0 / np.arange(1, n, dtype=np.float64)))
    return 2.0 * harmonic - 2.0 * (n - 1) / n


@dataclass(frozen=True)
class IsolationTree:
    """Flat-array binary tree.

    Internal nodes carry (split_feature, split_value); leaves have
    split_feature == -1 and a training-point count in leaf_size. Node 0
    is the root; node_depth caches edge counts from the root.
    """

    split_feature: np.ndarray  # int32, -1 for leaves
    split_value: np.ndarray  # float64
    left: np.ndarray  # int32 child ids, -1 for leaves
    right: np.ndarray  # int32
    leaf_size: np.ndarray  # int32, 0 for internal nodes
    node_depth: np.ndarray  # int32
    height_limit: int

    @property
    def n_nodes(self) -> int:
        return len(self.split_feature)


@dataclass(frozen=True)
class IsolationForestModel:
    trees: tuple[IsolationTree, ...]
    subsample_size: int
    n_trees: int
    normalizer: float  # c_factor(subsample_size)
    seed: int
    n_features: int
    # c_factor lookup for every possible leaf size, used by scoring
    leaf_adjust: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class ThresholdConfig:
    """Candidate-selection knobs: score threshold sensitivity and the
    assumed anomaly fraction used as a minimum candidate-count floor.
    contamination = 0 disables the floor."""

    alpha: float = 1.5
    contamination: float = 0.05

    def __post_init__(self):
        if self.alpha < 0:
            raise DataError("alpha must be nonnegative")
        if not (0.0 <= self.contamination < 1.0):
            raise DataError("contamination must lie in [0, 1)")


class _TreeBuilder:
    def __init__(self, X: np.ndarray, rng: np.random.Generator, height_limit: int):
        self.X = X
        self.rng = rng
        self.height_limit = height_limit
        self.split_feature: list[int] = []
        self.split_value: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.leaf_size: list[int] = []
        self.depth: list[int] = []

    def _new_node(self, depth: int) -> int:
        self.split_feature.append(-1)
        self.split_value.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.leaf_size.append(0)
        self.depth.append(depth)
        return len(self.split_feature) - 1

    def build(self, indices: np.ndarray, depth: int) -> int:
        node = self._new_node(depth)
        rows = self.X[indices]
        if depth >= self.height_limit or len(indices) <= 1:
            self.leaf_size[node] = len(indices)
            return node
        lo = rows.min(axis=0)
        hi = rows.max(axis=0)
        usable = np.flatnonzero(hi > lo)  # zero-range features never split
        if len(usable) == 0:
            self.leaf_size[node] = len(indices)
            return node
        feat = int(usable[self.rng.integers(len(usable))])
        split = float(self.rng.uniform(lo[feat], hi[feat]))
        if split <= lo[feat]:  # keep the split interval open on the left
            split = float(np.nextafter(lo[feat], hi[feat]))
        go_left = rows[:, feat] < split
        self.split_feature[node] = feat
        self.split_value[node] = split
        self.left[node] = self.build(indices[go_left], depth + 1)
        self.right[node] = self.build(indices[~go_left], depth + 1)
        return node

    def finish(self) -> IsolationTree:
        return IsolationTree(
            np.asarray(self.split_feature, dtype=np.int32),
            np.asarray(self.split_value, dtype=np.float64),
            np.asarray(self.left, dtype=np.int32),
            np.asarray(self.right, dtype=np.int32),
            np.asarray(self.leaf_size, dtype=np.int32),
            np.asarray(self.depth, dtype=np.int32),
            self.height_limit,
        )


def build_forest(
    X,
    n_trees: int = DEFAULT_N_TREES,
    subsample_size: int = DEFAULT_SUBSAMPLE,
    seed: int = 0,
) -> IsolationForestModel:
    """Grow `n_trees` isolation trees on uniform without-replacement
    subsamples of min(subsample_size, n) rows. Structurally deterministic
    given the seed."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError("build_forest needs a 2-d matrix with at least 2 rows")
    if subsample_size < 2:
        raise DataError("subsample_size must be at least 2")
    n = X.shape[0]
    psi = min(subsample_size, n)
    height_limit = math.ceil(math.log2(psi))
    trees = []
    for t in range(n_trees):
        rng = derived_rng(seed, OP_FOREST, t)
        sample = rng.choice(n, size=psi, replace=False)
        builder = _TreeBuilder(X, rng, height_limit)
        builder.build(sample, 0)
        trees.append(builder.finish())
    adjust = np.array([c_factor(k) for k in range(psi + 1)])
    return IsolationForestModel(
        trees=tuple(trees),
        subsample_size=psi,
        n_trees=n_trees,
        normalizer=c_factor(psi),
        seed=seed,
        n_features=X.shape[1],
        leaf_adjust=adjust,
    )


def path_length(tree: IsolationTree, x) -> float:
    """Edges from the root to the leaf reached by x, plus
    c_factor(leaf size) for the unresolved subtree."""
    x = np.asarray(x, dtype=np.float64)
    node = 0
    edges = 0
    while tree.split_feature[node] >= 0:
        f = tree.split_feature[node]
        if f >= len(x):
            raise DataError(
                f"feature dimension {len(x)} too small for split on feature {f}"
            )
        node = int(tree.left[node] if x[f] < tree.split_value[node] else tree.right[node])
        edges += 1
    return edges + c_factor(int(tree.leaf_size[node]))


def tree_path_lengths(tree: IsolationTree, X: np.ndarray, leaf_adjust=None) -> np.ndarray:
    """Vectorized path_length over the rows of X."""
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    for _ in range(tree.height_limit + 1):
        feat = tree.split_feature[node]
        active = feat >= 0
        if not active.any():
            break
        idx = np.flatnonzero(active)
        f = feat[idx]
        go_left = X[idx, f] < tree.split_value[node[idx]]
        node[idx] = np.where(go_left, tree.left[node[idx]], tree.right[node[idx]])
    sizes = tree.leaf_size[node]
    if leaf_adjust is None:
        leaf_adjust = np.array([c_factor(k) for k in range(int(sizes.max()) + 1)])
    return tree.node_depth[node] + leaf_adjust[sizes]


def score_from_mean_path(mean_path, normalizer: float):
    """The anomaly-score map: 2 ** (-mean_path / normalizer)."""
    return np.power(2.0, -np.asarray(mean_path, dtype=np.float64) / normalizer)


def anomaly_scores(model: IsolationForestModel, X) -> np.ndarray:
    """Anomaly score in (0, 1) per row: high means easily isolated."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("anomaly_scores expects a 2-d matrix")
    if not model.trees:
        raise DataError("empty forest")
    if X.shape[1] != model.n_features:
        raise DataError(
            f"feature dimension mismatch: model has {model.n_features}, got {X.shape[1]}"
        )
    total = np.zeros(X.shape[0], dtype=np.float64)
    for tree in model.trees:
        total += tree_path_lengths(tree, X, model.leaf_adjust)
    return score_from_mean_path(total / len(model.trees), model.normalizer)


def anomaly_score(model: IsolationForestModel, x) -> float:
    return float(anomaly_scores(model, np.asarray(x, dtype=np.float64)[None, :])[0])


def adaptive_threshold(scores, alpha: float) -> float:
    """tau = mean + alpha * population std of the scores."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size < 2:
        raise DataError("adaptive_threshold needs at least 2 scores")
    return float(s.mean() + alpha * s.std(ddof=0))


def candidate_set(scores, cfg: ThresholdConfig) -> np.ndarray:
    """Indices of candidate anomalies, sorted ascending.

    Every score >= tau is a candidate; if that set is smaller than
    ceil(contamination * n), it is extended with the next-highest scores
    (boundary ties broken by lower index).
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise DataError("candidate_set needs a nonempty score vector")
    tau = adaptive_threshold(s, cfg.alpha)
    floor = math.ceil(cfg.contamination * s.size)
    k = max(int(np.sum(s >= tau)), floor)
    order = np.lexsort((np.arange(s.size), -s))  # score desc, index asc
    return np.sort(order[:k])
