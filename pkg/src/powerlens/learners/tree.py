"""CART-style regression trees (squared-error splits)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..core import KHZ_PER_GHZ, ModelKind, PowerModel
from ..errors import InsufficientData
from .polynomial import group_by_frequency

LEAF = -1


@dataclass(frozen=True)
class RegressionTree:
    """Flat node arrays; node 0 is the root.

    An internal node sends a sample right when ``x[feature] >= threshold``.
    Leaves have ``feature == -1`` and predict ``value``.
    """

    feature: tuple[int, ...]
    threshold: tuple[float, ...]
    left: tuple[int, ...]
    right: tuple[int, ...]
    value: tuple[float, ...]
    n_features: int = 1

    def predict_one(self, x) -> float:
        node = 0
        while self.feature[node] != LEAF:
            node = self.right[node] if x[self.feature[node]] >= self.threshold[node] else self.left[node]
        return self.value[node]

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.n_features)
        return np.array([self.predict_one(row) for row in X])

    def leaf_index(self, x) -> int:
        node = 0
        while self.feature[node] != LEAF:
            node = self.right[node] if x[self.feature[node]] >= self.threshold[node] else self.left[node]
        return node

    @property
    def depth(self) -> int:
        def walk(node):
            if self.feature[node] == LEAF:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))
        return walk(0)


def split_tolerance(y) -> float:
    # improvements below this are rounding noise
    return 1e-12 * math.fsum(v * v for v in y)


def _best_split(X, y, min_leaf, tol):
    """Best (feature, threshold, sse) over all features, or None."""
    best = None
    for feature in range(X.shape[1]):
        order = np.argsort(X[:, feature], kind="stable")
        xs = np.ascontiguousarray(X[order, feature])
        ys = np.ascontiguousarray(y[order])
        pos, sse = _kernels.best_split(xs, ys, min_leaf, tol)
        if pos < 0:
            continue
        if best is None or sse < best[2] - tol:
            best = (feature, float(xs[pos]), sse)
    return best


def grow_tree(X, y, max_depth=4, min_leaf=3) -> RegressionTree:
    """Grow a tree on feature matrix ``X`` (n x d) and targets ``y``.

    A node splits when it is shallower than ``max_depth``, both children keep
    ``min_leaf`` samples, and the split lowers the squared error. Among equal
    splits the first feature and the smaller threshold win.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0 or len(X) != len(y):
        raise InsufficientData("tree needs a nonempty, aligned sample")
    tol = split_tolerance(y)
    feature, threshold, left, right, value = [], [], [], [], []

    def build(idx, depth):
        node = len(feature)
        ys = y[idx]
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(math.fsum(ys) / len(ys))
        if depth >= max_depth or len(idx) < 2 * min_leaf:
            return node
        found = _best_split(X[idx], ys, min_leaf, tol)
        if found is None:
            return node
        f, thr, sse = found
        parent_sse = math.fsum((v - value[node]) ** 2 for v in ys)
        if not sse < parent_sse - tol:
            return node
        go_right = X[idx, f] >= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = build(idx[~go_right], depth + 1)
        right[node] = build(idx[go_right], depth + 1)
        return node

    build(np.arange(len(y)), 0)
    return RegressionTree(tuple(feature), tuple(threshold), tuple(left), tuple(right),
                          tuple(value), X.shape[1])


def fit_tree(dataset, config=None) -> PowerModel:
    """One tree per frequency on utilization, or one joint tree with ``tree_global``."""
    max_depth = config.tree_max_depth if config else 4
    min_leaf = config.tree_min_leaf if config else 3
    dataset = list(dataset)
    if config is not None and config.tree_global:
        if not dataset:
            raise InsufficientData("dataset is empty")
        X = [(r.freq_khz / KHZ_PER_GHZ, r.utilization.value) for r in dataset]
        y = [r.power_w for r in dataset]
        table = tuple(sorted({int(r.freq_khz) for r in dataset}))
        return PowerModel(ModelKind.GLOBAL_TREE, grow_tree(X, y, max_depth, min_leaf), table)
    groups = group_by_frequency(dataset)
    trees = []
    for recs in groups.values():
        u = [r.utilization.value for r in recs]
        p = [r.power_w for r in recs]
        trees.append(grow_tree(u, p, max_depth, min_leaf))
    return PowerModel(ModelKind.PER_FREQUENCY_TREE, tuple(trees), tuple(groups))
