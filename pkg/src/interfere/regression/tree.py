"""CART regression trees grown greedily on squared error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = 12
    min_samples_leaf: int = 2
    max_features: int | None = None  # None: every feature at every split

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """Flat array encoding: node 0 is the root; leaves have ``feature == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    n_features: int
    params: TreeParams

    @property
    def node_count(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.node_count, dtype=int)
        for i in range(self.node_count):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = _check_X(X, self.n_features)
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "max_depth": self.params.max_depth,
            "min_samples_leaf": self.params.min_samples_leaf,
            "max_features": self.params.max_features,
            "n_features": self.n_features,
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=float),
            n_samples=np.asarray(d["n_samples"], dtype=np.int64),
            n_features=int(d["n_features"]),
            params=TreeParams(d["max_depth"], d["min_samples_leaf"], d["max_features"]),
        )


def _check_X(X, n_features: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray, min_samples_leaf: int):
    """SSE-optimal (feature, threshold) over ``features``, or None if no valid split.

    Thresholds are midpoints between adjacent distinct values. Ties go to the
    first feature in ``features`` (callers pass them ascending), then to the
    lowest threshold.
    """
    n = len(y)
    if n < 2 * min_samples_leaf:
        return None
    Xf = X[:, features]
    order = np.argsort(Xf, axis=0, kind="stable")
    xs = np.take_along_axis(Xf, order, axis=0)
    csum = np.cumsum(y[order], axis=0)
    left_sum, total = csum[:-1], csum[-1]
    n_left = np.arange(1, n, dtype=float)[:, None]
    n_right = n - n_left
    # maximizing this is equivalent to minimizing the summed child SSE
    score = left_sum**2 / n_left + (total - left_sum) ** 2 / n_right
    valid = (xs[1:] > xs[:-1]) & (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
    score = np.where(valid, score, -np.inf).T.ravel()
    j = int(np.argmax(score))
    if not np.isfinite(score[j]):
        return None
    f, pos = divmod(j, n - 1)
    return int(features[f]), 0.5 * (xs[pos, f] + xs[pos + 1, f])


def fit_tree(X, y, params: TreeParams = TreeParams(), seed: int = 0) -> RegressionTree:
    X = _check_X(X)
    y = np.asarray(y, dtype=float).ravel()
    n, n_features = X.shape
    if n == 0:
        raise ValueError("cannot fit a tree on empty data")
    if len(y) != n:
        raise ValueError(f"X has {n} rows but y has {len(y)}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data contains non-finite values")
    k = n_features if params.max_features is None else min(params.max_features, n_features)
    rng = np.random.default_rng(seed)
    max_depth = np.inf if params.max_depth is None else params.max_depth
    msl = params.min_samples_leaf

    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(y[idx].mean()))
        count.append(len(idx))
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yn = y[idx]
        if depth >= max_depth or np.all(yn == yn[0]):
            continue
        if k < n_features:
            feats = np.sort(rng.choice(n_features, size=k, replace=False))
        else:
            feats = np.arange(n_features)
        split = best_split(X[idx], yn, feats, msl)
        if split is None:
            continue
        f, t = split
        mask = X[idx, f] <= t
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, float(t)
        left[node], right[node] = new_node(li), new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return RegressionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=float),
        n_samples=np.array(count, dtype=np.int64),
        n_features=n_features,
        params=params,
    )


def predict_tree(tree: RegressionTree, x) -> float:
    """Single-row prediction by explicit root-to-leaf descent."""
    x = np.asarray(x, dtype=float)
    if x.shape != (tree.n_features,):
        raise ValueError(f"expected {tree.n_features} features, got shape {x.shape}")
    node = 0
    while tree.feature[node] != LEAF:
        node = tree.left[node] if x[tree.feature[node]] <= tree.threshold[node] else tree.right[node]
    return float(tree.value[node])
