"""K-means clustering of isolated profiles, silhouette-based K selection and
per-cluster representative applications."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .profiles import ProfileDataset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterModel:
    k: int
    centroids: tuple[tuple[float, ...], ...]
    assignments: dict[str, int]
    silhouette: float | None
    seed: int
    sse_history: tuple[float, ...] = field(default=(), compare=False, repr=False)

    @property
    def centroid_array(self) -> np.ndarray:
        return np.array(self.centroids, dtype=float)

    def members(self, c: int) -> list[str]:
        return sorted(a for a, j in self.assignments.items() if j == c)

    def labels_for(self, app_ids) -> np.ndarray:
        return np.array([self.assignments[a] for a in app_ids], dtype=int)


def _sorted_points(ds: ProfileDataset) -> tuple[list[str], np.ndarray]:
    ids = sorted(ds.app_ids)
    lookup = ds.by_id()
    return ids, np.array([lookup[a].utilization for a in ids], dtype=float)


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            raise ValueError("k-means++ ran out of distinct points")
        i = int(rng.choice(n, p=d2 / total))
        centers.append(X[i])
        d2 = np.minimum(d2, ((X - X[i]) ** 2).sum(axis=1))
    return np.array(centers)


def _repair_empty(X: np.ndarray, C: np.ndarray, labels: np.ndarray) -> bool:
    """Move each empty centroid onto the point farthest from its own centroid."""
    counts = np.bincount(labels, minlength=len(C))
    repaired = False
    for c in np.flatnonzero(counts == 0):
        d = ((X - C[labels]) ** 2).sum(axis=1)
        d[counts[labels] <= 1] = -1.0  # never empty another cluster
        i = int(np.argmax(d))
        counts[labels[i]] -= 1
        labels[i] = c
        counts[c] = 1
        C[c] = X[i]
        repaired = True
    return repaired


def kmeans(ds: ProfileDataset, k: int, seed: int, max_iter: int = 300, tol: float = 1e-6) -> ClusterModel:
    """Lloyd's algorithm with k-means++ seeding over points in sorted app_id order.

    Clusters are relabelled by first appearance in sorted app_id order, so the
    labelling does not depend on which centroid was seeded first.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if max_iter < 1 or tol < 0:
        raise ValueError("max_iter must be >= 1 and tol >= 0")
    ids, X = _sorted_points(ds)
    distinct = len(np.unique(X, axis=0)) if len(X) else 0
    if k > distinct:
        raise ValueError(f"k={k} exceeds the {distinct} distinct utilization vectors")

    rng = np.random.default_rng(seed)
    C = _kmeanspp(X, k, rng)
    labels = np.argmin(_sq_dists(X, C), axis=1)
    history = []
    for _ in range(max_iter):
        _repair_empty(X, C, labels)
        history.append(float(((X - C[labels]) ** 2).sum()))
        new_C = np.array([X[labels == c].mean(axis=0) for c in range(k)])
        shift = float(np.sqrt(((new_C - C) ** 2).sum(axis=1)).max())
        C = new_C
        labels = np.argmin(_sq_dists(X, C), axis=1)
        if shift < tol:
            break
    _repair_empty(X, C, labels)
    C = np.array([X[labels == c].mean(axis=0) for c in range(k)])
    history.append(float(((X - C[labels]) ** 2).sum()))

    order = list(dict.fromkeys(labels.tolist()))
    relabel = {old: new for new, old in enumerate(order)}
    labels = np.array([relabel[c] for c in labels])
    C = C[order]
    model = ClusterModel(
        k=k,
        centroids=tuple(tuple(float(v) for v in row) for row in C),
        assignments={a: int(c) for a, c in zip(ids, labels)},
        silhouette=None,
        seed=seed,
        sse_history=tuple(history),
    )
    if k >= 2:
        model = ClusterModel(k, model.centroids, model.assignments, silhouette_score(ds, model), seed, model.sse_history)
    return model


def silhouette_samples(X: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-point silhouette values; points in singleton clusters score 0."""
    ks = np.unique(labels)
    if len(ks) < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    D = np.sqrt(np.maximum(_sq_dists(X, X), 0.0))
    s = np.zeros(len(X))
    sizes = {c: int((labels == c).sum()) for c in ks}
    for i in range(len(X)):
        own = labels[i]
        if sizes[own] == 1:
            continue
        a = D[i, labels == own].sum() / (sizes[own] - 1)
        b = min(D[i, labels == c].mean() for c in ks if c != own)
        m = max(a, b)
        s[i] = 0.0 if m == 0 else (b - a) / m
    return s


def silhouette_score(ds: ProfileDataset, cm: ClusterModel) -> float:
    if cm.k < 2:
        raise ValueError("silhouette needs K >= 2")
    missing = set(ds.app_ids) - set(cm.assignments)
    if missing:
        raise ValueError(f"cluster model does not cover {sorted(missing)[:5]}")
    return float(silhouette_samples(ds.matrix, cm.labels_for(ds.app_ids)).mean())


def select_k(ds: ProfileDataset, k_min: int, k_max: int, seed: int,
             max_iter: int = 300, tol: float = 1e-6) -> tuple[int, ClusterModel]:
    """Return the K in ``[k_min, k_max]`` with the highest mean silhouette (ties: smaller K)."""
    distinct = len(np.unique(ds.matrix, axis=0)) if len(ds) else 0
    if not 2 <= k_min <= k_max <= distinct:
        raise ValueError(f"invalid K range [{k_min}, {k_max}] for {distinct} distinct points")
    best: ClusterModel | None = None
    for k in range(k_min, k_max + 1):
        cm = kmeans(ds, k, seed, max_iter, tol)
        log.debug("k=%d silhouette=%.4f", k, cm.silhouette)
        if best is None or cm.silhouette > best.silhouette:
            best = cm
    return best.k, best


def representatives(ds: ProfileDataset, cm: ClusterModel) -> dict[int, str]:
    """Member nearest to each centroid; equal distances go to the smaller app_id."""
    lookup = ds.by_id()
    C = cm.centroid_array
    reps = {}
    for c in range(cm.k):
        members = cm.members(c)
        if not members:
            raise ValueError(f"cluster {c} is empty")
        d = [float(((lookup[a].vector - C[c]) ** 2).sum()) for a in members]
        reps[c] = min(zip(d, members))[1]
    return reps


def to_json(cm: ClusterModel, reps: dict[int, str]) -> str:
    doc = {
        "k": cm.k,
        "seed": cm.seed,
        "centroids": [list(c) for c in cm.centroids],
        "assignments": dict(sorted(cm.assignments.items())),
        "silhouette": cm.silhouette,
        "representatives": {str(c): a for c, a in sorted(reps.items())},
    }
    return json.dumps(doc, indent=1)


def from_json(text: str) -> tuple[ClusterModel, dict[int, str]]:
    doc = json.loads(text)
    cm = ClusterModel(
        k=int(doc["k"]),
        centroids=tuple(tuple(float(v) for v in c) for c in doc["centroids"]),
        assignments={a: int(c) for a, c in doc["assignments"].items()},
        silhouette=doc["silhouette"],
        seed=int(doc["seed"]),
    )
    reps = {int(c): a for c, a in doc["representatives"].items()}
    return cm, reps
