"""Co-location combinations of cluster representatives and the random-forest
stressor model that predicts their combined utilization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations, compress, islice, product
from pathlib import Path
from typing import Sequence

import numpy as np

from .oracle import ContentionParams, simulate_colocation
from .profiles import ProfileDataset, ResourceSpace, summed_utilization
from .regression import ForestParams, RandomForest, fit_forest, r2_score


@dataclass(frozen=True)
class Combination:
    """Cluster indicator vector plus the representatives standing in for it."""

    bits: tuple[int, ...]
    members: tuple[str, ...] = ()

    @property
    def clusters(self) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.bits) if b)

    @property
    def key(self) -> str:
        return "".join(str(b) for b in self.bits)

    @classmethod
    def from_key(cls, key: str, reps: dict[int, str] | None = None) -> "Combination":
        bits = tuple(int(ch) for ch in key)
        if reps is None:
            return cls(bits)
        return with_members(cls(bits), reps)


def with_members(c: Combination, reps: dict[int, str]) -> Combination:
    missing = [i for i in c.clusters if i not in reps]
    if missing:
        raise KeyError(f"no representative for clusters {missing}")
    return Combination(c.bits, tuple(reps[i] for i in c.clusters))


def combination_count(K: int, d_max: int) -> int:
    return sum(math.comb(K, d) for d in range(1, d_max + 1))


_CACHE_MAX_K = 16


@lru_cache(maxsize=_CACHE_MAX_K)
def _all_subsets(K: int) -> tuple[tuple[Combination, ...], np.ndarray]:
    """Every non-empty subset of K clusters in indicator order, with subset sizes."""
    # product over (0, 1) already yields indicator vectors in lexicographic order
    combos = tuple(map(Combination, islice(product((0, 1), repeat=K), 1, None)))
    masks = np.arange(1, 1 << K)
    return combos, sum((masks >> b) & 1 for b in range(K))


def enumerate_combinations(K: int, d_max: int) -> list[Combination]:
    """All cluster subsets of size 1..d_max, ascending in indicator-vector order."""
    if K < 1 or not 1 <= d_max <= K:
        raise ValueError(f"need 1 <= d_max <= K, got K={K}, d_max={d_max}")
    if K <= _CACHE_MAX_K:
        combos, sizes = _all_subsets(K)
        return list(compress(combos, (sizes <= d_max).tolist()))
    masks = []
    for d in range(1, d_max + 1):
        for idx in combinations(range(K), d):
            masks.append(sum(1 << (K - 1 - i) for i in idx))
    masks.sort()
    return [Combination(tuple((m >> (K - 1 - i)) & 1 for i in range(K))) for m in masks]


def build_features(c: Combination, ds: ProfileDataset, reps: dict[int, str]) -> np.ndarray:
    """``[C, U+]``: indicator bits followed by summed representative utilizations."""
    c = with_members(c, reps)
    lookup = ds.by_id()
    u_plus = summed_utilization([lookup[a] for a in c.members], R=ds.space.R)
    return np.concatenate([np.asarray(c.bits, dtype=float), u_plus])


def feature_matrix(combos: Sequence[Combination], ds: ProfileDataset, reps: dict[int, str]) -> np.ndarray:
    K = len(combos[0].bits) if combos else len(reps)
    if not combos:
        return np.zeros((0, K + ds.space.R))
    return np.array([build_features(c, ds, reps) for c in combos])


@dataclass(frozen=True, eq=False)
class StressorTrainingSet:
    combos: tuple[Combination, ...]
    features: np.ndarray
    targets: np.ndarray
    provenance: tuple[str, ...]
    space: ResourceSpace

    @property
    def K(self) -> int:
        return self.features.shape[1] - self.space.R

    def to_csv(self) -> str:
        K, R = self.K, self.space.R
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*(f"c_{i + 1}" for i in range(K)), *(f"u_plus_{r + 1}" for r in range(R)),
                    *(f"target_{r + 1}" for r in range(R)), "provenance"])
        for f, t, p in zip(self.features, self.targets, self.provenance):
            w.writerow([*(str(int(v)) for v in f[:K]), *(repr(float(v)) for v in f[K:]),
                        *(repr(float(v)) for v in t), p])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, space: ResourceSpace, reps: dict[int, str] | None = None) -> "StressorTrainingSet":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        K = sum(1 for h in header if h.startswith("c_"))
        R = space.R
        if len(header) < K + 2 * R:
            raise ValueError("training CSV does not match the resource space")
        feats = np.array([[float(v) for v in r[: K + R]] for r in body])
        targets = np.array([[float(v) for v in r[K + R: K + 2 * R]] for r in body])
        prov = tuple(r[K + 2 * R] if len(r) > K + 2 * R else "imported" for r in body)
        combos = []
        for f in feats:
            c = Combination(tuple(int(v) for v in f[:K]))
            combos.append(with_members(c, reps) if reps is not None else c)
        return cls(tuple(combos), feats, targets, prov, space)


def sample_combinations(combos: Sequence[Combination], fraction: float, seed: int) -> list[Combination]:
    """Uniform subset of ceil(fraction * n) combos without replacement, original order kept."""
    if not 0 < fraction <= 1:
        raise ValueError(f"sample_fraction must be in (0, 1], got {fraction}")
    n = len(combos)
    take = math.ceil(fraction * n)
    if take >= n:
        return list(combos)
    chosen = np.sort(np.random.default_rng(seed).choice(n, size=take, replace=False))
    return [combos[i] for i in chosen]


def collect_training(combos: Sequence[Combination], ds: ProfileDataset, reps: dict[int, str],
                     oracle: ContentionParams, sample_fraction: float = 1.0,
                     seed: int = 0) -> StressorTrainingSet:
    picked = [with_members(c, reps) for c in sample_combinations(combos, sample_fraction, seed)]
    lookup = ds.by_id()
    feats = feature_matrix(picked, ds, reps)
    targets = np.array([simulate_colocation([lookup[a] for a in c.members], oracle) for c in picked])
    tag = f"oracle:{oracle.seed}"
    return StressorTrainingSet(tuple(picked), feats, targets.reshape(len(picked), ds.space.R),
                               (tag,) * len(picked), ds.space)


@dataclass(frozen=True, eq=False)
class StressorModel:
    forests: tuple[RandomForest, ...]
    K: int
    space: ResourceSpace
    accuracy: dict[str, dict[str, float | None]]
    split_sizes: dict[str, int]
    seed: int

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.K + self.space.R:
            raise ValueError(f"expected {self.K + self.space.R} features, got {X.shape[1]}")
        out = np.column_stack([f.predict(X) for f in self.forests])
        return np.clip(out, 0.0, 1.0)

    def accuracy_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "test_accuracy", "train_accuracy", "validation_accuracy"])
        for name in self.space.names:
            acc = self.accuracy[name]
            w.writerow([name, *("degenerate" if acc[s] is None else f"{acc[s]:.3f}"
                                for s in ("test", "train", "validation"))])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "K": self.K,
            "seed": self.seed,
            "space": {"names": list(self.space.names), "bounds": list(self.space.bounds),
                      "stress_dims": list(self.space.stress_dims)},
            "split_sizes": self.split_sizes,
            "accuracy": self.accuracy,
            "forests": [f.to_dict() for f in self.forests],
        }
        return json.dumps(doc, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "StressorModel":
        doc = json.loads(text)
        sp = doc["space"]
        return cls(
            forests=tuple(RandomForest.from_dict(f) for f in doc["forests"]),
            K=int(doc["K"]),
            space=ResourceSpace(tuple(sp["names"]), tuple(sp["bounds"]), tuple(sp["stress_dims"])),
            accuracy=doc["accuracy"],
            split_sizes=doc["split_sizes"],
            seed=int(doc["seed"]),
        )


def split_indices(n: int, fractions: Sequence[float], seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shuffled train/test/validation index sets; the train share absorbs rounding."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0):
        raise ValueError(f"split fractions must be 3 non-negative values summing to 1, got {fractions}")
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(fractions[1] * n))
    n_val = int(round(fractions[2] * n))
    n_train = n - n_test - n_val
    return perm[:n_train], perm[n_train:n_train + n_test], perm[n_train + n_test:]


def _accuracy(y, yhat) -> float | None:
    try:
        return 100.0 * r2_score(y, yhat)
    except ValueError:
        return None


def train_stressor(ts: StressorTrainingSet, split: Sequence[float] = (0.8, 0.1, 0.1),
                   params: ForestParams = ForestParams(), seed: int = 0) -> StressorModel:
    """Fit one forest per resource on the train split and score all three splits (R²·100)."""
    n = len(ts.targets)
    if n < 10:
        raise ValueError(f"need at least 10 training rows, got {n}")
    tr, te, va = split_indices(n, split, seed)
    forests = fit_forest(ts.features[tr], ts.targets[tr], params, seed=seed)
    model = StressorModel(tuple(forests), ts.K, ts.space, {}, {"train": len(tr), "test": len(te),
                                                               "validation": len(va)}, seed)
    for r, name in enumerate(ts.space.names):
        scores = {}
        for label, idx in (("test", te), ("train", tr), ("validation", va)):
            if len(idx) < 2:
                scores[label] = None
                continue
            pred = np.clip(forests[r].predict(ts.features[idx]), 0.0, 1.0)
            scores[label] = _accuracy(ts.targets[idx, r], pred)
        model.accuracy[name] = scores
    return model


def predict_utilization(model: StressorModel, c: Combination, ds: ProfileDataset,
                        reps: dict[int, str]) -> np.ndarray:
    _check_compat(model, c, ds)
    return model.predict_matrix(build_features(c, ds, reps)[None, :])[0]


def predict_many(model: StressorModel, combos: Sequence[Combination], ds: ProfileDataset,
                 reps: dict[int, str]) -> np.ndarray:
    if not combos:
        return np.zeros((0, model.space.R))
    for c in combos:
        _check_compat(model, c, ds)
    return model.predict_matrix(feature_matrix(combos, ds, reps))


def _check_compat(model: StressorModel, c: Combination, ds: ProfileDataset) -> None:
    if len(c.bits) != model.K:
        raise ValueError(f"combination has K={len(c.bits)}, model was trained with K={model.K}")
    if ds.space.names != model.space.names:
        raise ValueError("profile resource space does not match the model's")


def write_combinations(combos: Sequence[Combination], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["combo_bits", "size", "members"])
        for c in combos:
            w.writerow([c.key, len(c.clusters), ";".join(c.members)])


def read_combinations(path: str | Path, reps: dict[int, str] | None = None) -> list[Combination]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [Combination.from_key(row["combo_bits"], reps) for row in csv.DictReader(fh)]
