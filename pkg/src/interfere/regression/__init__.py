from .forest import ForestParams, RandomForest, fit_forest, predict_forest
from .metrics import MetricReport, ape, ape_cdf, metrics, r2_score
from .tree import RegressionTree, TreeParams, best_split, fit_tree, predict_tree

__all__ = [
    "ForestParams",
    "MetricReport",
    "RandomForest",
    "RegressionTree",
    "TreeParams",
    "ape",
    "ape_cdf",
    "best_split",
    "fit_forest",
    "fit_tree",
    "metrics",
    "predict_forest",
    "predict_tree",
    "r2_score",
]
