"""Bagged random forests of CART trees, one forest per output column."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..seeding import derive_seed
from .tree import RegressionTree, TreeParams, _check_X, fit_tree


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = 12
    min_samples_leaf: int = 2
    max_features: int | None = None  # None: ceil(n_features / 3)
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")

    def features_per_split(self, n_features: int) -> int:
        k = math.ceil(n_features / 3) if self.max_features is None else self.max_features
        if not 1 <= k <= n_features:
            raise ValueError(f"features per split {k} outside [1, {n_features}]")
        return k


@dataclass(frozen=True, eq=False)
class RandomForest:
    trees: tuple[RegressionTree, ...]
    seeds: tuple[int, ...]
    max_features: int
    bootstrap: bool
    oob_r2: float | None = field(default=None)

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    def tree_predictions(self, X) -> np.ndarray:
        """(n_trees, n_rows) matrix of per-tree outputs."""
        X = _check_X(X, self.n_features)
        return np.array([t.predict(X) for t in self.trees])

    def predict(self, X) -> np.ndarray:
        # fixed tree-by-tree accumulation: a row's prediction must not depend
        # on which batch it arrives in (numpy's mean reorders sums by shape)
        X = _check_X(X, self.n_features)
        total = np.zeros(len(X))
        for t in self.trees:
            total += t.predict(X)
        return total / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "max_features": self.max_features,
            "bootstrap": self.bootstrap,
            "seeds": list(self.seeds),
            "oob_r2": self.oob_r2,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        return cls(
            trees=tuple(RegressionTree.from_dict(t) for t in d["trees"]),
            seeds=tuple(int(s) for s in d["seeds"]),
            max_features=int(d["max_features"]),
            bootstrap=bool(d["bootstrap"]),
            oob_r2=d.get("oob_r2"),
        )


def bootstrap_indices(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(derive_seed(seed, "bootstrap")).integers(0, n, size=n)


def _fit_one(X, y, params: ForestParams, seed: int, oob: bool) -> RandomForest:
    n, f = X.shape
    k = params.features_per_split(f)
    tp = TreeParams(params.max_depth, params.min_samples_leaf, None if k == f else k)
    # seeds are fixed up front so tree i never depends on the fitting order
    seeds = tuple(derive_seed(seed, "tree", i) for i in range(params.n_trees))
    trees = []
    oob_sum, oob_cnt = np.zeros(n), np.zeros(n)
    for s in seeds:
        if params.bootstrap:
            idx = bootstrap_indices(n, s)
            tree = fit_tree(X[idx], y[idx], tp, seed=s)
            if oob:
                out = np.setdiff1d(np.arange(n), idx)
                if out.size:
                    oob_sum[out] += tree.predict(X[out])
                    oob_cnt[out] += 1
        else:
            tree = fit_tree(X, y, tp, seed=s)
        trees.append(tree)
    oob_r2 = None
    if oob and params.bootstrap:
        seen = oob_cnt > 0
        if seen.sum() >= 2:
            yt, yp = y[seen], oob_sum[seen] / oob_cnt[seen]
            ss_tot = float(((yt - yt.mean()) ** 2).sum())
            if ss_tot > 0:
                oob_r2 = 1.0 - float(((yt - yp) ** 2).sum()) / ss_tot
    return RandomForest(tuple(trees), seeds, k, params.bootstrap, oob_r2)


def fit_forest(X, Y, params: ForestParams = ForestParams(), seed: int = 0,
               oob: bool = False) -> list[RandomForest]:
    """Fit one independent forest per column of ``Y``."""
    X = _check_X(X)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n = X.shape[0]
    if n == 0 or Y.shape[0] == 0:
        raise ValueError("cannot fit a forest on empty data")
    if n < 2:
        raise ValueError("a forest needs at least 2 samples")
    if Y.shape[0] != n:
        raise ValueError(f"X has {n} rows but Y has {Y.shape[0]}")
    return [_fit_one(X, Y[:, j], params, derive_seed(seed, "output", j), oob) for j in range(Y.shape[1])]


def predict_forest(forest: RandomForest, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (forest.n_features,):
        raise ValueError(f"expected {forest.n_features} features, got shape {x.shape}")
    return float(forest.predict(x[None, :])[0])
