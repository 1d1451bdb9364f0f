"""Synthetic contention oracle.

Stands in for the physical testbed: combines isolated profiles into an
"observed" host utilization, and turns a background utilization into a
"measured" response time for a target application. Every call is a pure
function of its arguments; noise streams are keyed off the parameter seed and
a hash of the inputs, never shared RNG state.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .profiles import ApplicationProfile, ProfileDataset, ResourceSpace
from .seeding import content_seed


class Mode(str, Enum):
    SATURATING = "SATURATING"
    CAPPED_LINEAR = "CAPPED_LINEAR"


@dataclass(frozen=True)
class ContentionParams:
    modes: tuple[Mode, ...]
    gamma: tuple[float, ...]
    sigma: float = 0.02
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(Mode(m) for m in self.modes))
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        if len(self.modes) != len(self.gamma):
            raise ValueError("modes and gamma must cover the same resources")
        if any(g < 0 for g in self.gamma):
            raise ValueError("interaction coefficients must be >= 0")
        if not 0 <= self.sigma < 0.5:
            raise ValueError(f"sigma must be in [0, 0.5), got {self.sigma}")

    @classmethod
    def uniform(cls, R: int, mode: Mode | str = Mode.SATURATING, gamma: float = 0.3,
                sigma: float = 0.02, seed: int = 0) -> "ContentionParams":
        return cls((Mode(mode),) * R, (gamma,) * R, sigma, seed)


@dataclass(frozen=True)
class QoSParams:
    base_latency_ms: float
    weights: tuple[float, ...]
    p: float = 2.0
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not self.base_latency_ms > 0:
            raise ValueError("base_latency_ms must be > 0")
        if any(w < 0 for w in self.weights) or not any(w > 0 for w in self.weights):
            raise ValueError("weights must be >= 0 with at least one > 0")
        if self.p < 1:
            raise ValueError("knee exponent p must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


def combine(U: np.ndarray, params: ContentionParams) -> np.ndarray:
    """Noiseless combined utilization of the rows of ``U`` (apps x resources)."""
    U = np.asarray(U, dtype=float)
    R = U.shape[1]
    if len(params.modes) != R:
        raise ValueError(f"params cover {len(params.modes)} resources, profiles have {R}")
    sat = np.array([m is Mode.SATURATING for m in params.modes])
    # fold 1 - prod(1 - u) as a + b - ab so a single app passes through exactly
    acc = U[0].copy()
    for row in U[1:]:
        acc = acc + row - acc * row
    base = np.where(sat, acc, np.minimum(1.0, U.sum(axis=0)))
    if R > 1:
        others = (base.sum() - base) / (R - 1)
    else:
        others = np.zeros(1)
    return np.minimum(1.0, base * (1.0 + np.asarray(params.gamma) * others))


def simulate_colocation(profiles: Sequence[ApplicationProfile], params: ContentionParams) -> np.ndarray:
    """Observed host utilization when ``profiles`` run together."""
    if not profiles:
        raise ValueError("cannot co-locate an empty set of applications")
    ordered = sorted(profiles, key=lambda p: p.app_id)
    U = np.array([p.utilization for p in ordered], dtype=float)
    u = combine(U, params)
    if params.sigma > 0:
        rng = np.random.default_rng(content_seed(params.seed, ["colocation", *(p.app_id for p in ordered)]))
        eps = rng.normal(0.0, params.sigma, size=u.shape)
        u = u * (1.0 + eps)
    return np.clip(u, 0.0, 1.0)


@dataclass
class ErrorReport:
    combos: list[tuple[str, ...]]
    dims: tuple[str, ...]
    ape: np.ndarray  # (n_combos, n_dims), percent
    summed: np.ndarray
    observed: np.ndarray

    @property
    def per_combo(self) -> np.ndarray:
        return self.ape.mean(axis=1)

    @property
    def mean_ape(self) -> float:
        return float(self.ape.mean())

    @property
    def mean_ape_per_dim(self) -> dict[str, float]:
        return {d: float(v) for d, v in zip(self.dims, self.ape.mean(axis=0))}


def naive_sum_error(ds: ProfileDataset, combos: Sequence[Sequence[str]], params: ContentionParams,
                    dims: Sequence[str] | None = None) -> ErrorReport:
    """How far clamped summation of isolated profiles is from the co-located observation.

    APE is taken relative to the observation, per stress dimension.
    """
    if not combos:
        raise ValueError("no combinations given")
    dims = tuple(dims or ds.space.stress_dims)
    idx = [ds.space.names.index(d) for d in dims]
    lookup = ds.by_id()
    summed, observed, keys = [], [], []
    for combo in combos:
        if len(combo) < 2:
            raise ValueError(f"combination {combo} has fewer than 2 applications")
        profs = [lookup[a] for a in combo]
        s = np.minimum(1.0, np.array([p.utilization for p in profs]).sum(axis=0))
        summed.append(s[idx])
        observed.append(simulate_colocation(profs, params)[idx])
        keys.append(tuple(sorted(combo)))
    summed, observed = np.array(summed), np.array(observed)
    with np.errstate(divide="ignore", invalid="ignore"):
        ape = np.abs(summed - observed) / np.abs(observed) * 100.0
    if not np.all(np.isfinite(ape)):
        raise ValueError("observed utilization of 0 makes the percentage error undefined")
    return ErrorReport(keys, dims, ape, summed, observed)


def simulate_qos(target: ApplicationProfile, background: np.ndarray, qp: QoSParams) -> float:
    """Response time (ms) of ``target`` against a full-R background utilization."""
    bg = np.asarray(background, dtype=float)
    if bg.shape != (len(qp.weights),):
        raise ValueError(f"background has shape {bg.shape}, expected ({len(qp.weights)},)")
    if np.any(bg < 0) or np.any(bg > 1):
        raise ValueError("background utilization must lie in [0, 1]")
    latency = qp.base_latency_ms * (1.0 + float(np.dot(qp.weights, bg ** qp.p)))
    if qp.sigma > 0:
        rng = np.random.default_rng(content_seed(qp.seed, ["qos", target.app_id], [bg]))
        latency *= 1.0 + rng.normal(0.0, qp.sigma)
    return max(latency, 0.5 * qp.base_latency_ms)


def synthesize_profiles(n_apps: int, space: ResourceSpace, seed: int, n_archetypes: int = 13,
                        concentration: float = 60.0, beta_a: float = 0.9,
                        beta_b: float = 2.2) -> ProfileDataset:
    """Seeded synthetic warehouse of ``n_apps`` normalized profiles.

    Archetype means are Beta(beta_a, beta_b) per resource; each app draws its
    component from a Beta with that mean and the given concentration, so apps
    form ``n_archetypes`` loose groups.
    """
    if n_apps < 1:
        raise ValueError("n_apps must be >= 1")
    rng = np.random.default_rng(seed)
    R = space.R
    centers = np.clip(rng.beta(beta_a, beta_b, size=(max(1, n_archetypes), R)), 0.02, 0.98)
    group = np.arange(n_apps) % len(centers)
    rng.shuffle(group)
    mu = centers[group]
    U = rng.beta(mu * concentration, (1.0 - mu) * concentration)
    width = len(str(n_apps - 1))
    ids = [f"app{i:0{width}d}" for i in range(n_apps)]
    profs = tuple(ApplicationProfile(a, tuple(float(v) for v in row)) for a, row in zip(ids, U))
    return ProfileDataset(space.unit(), profs)


def write_profiles_csv(ds: ProfileDataset, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["app_id", *ds.space.names])
        for p in ds.profiles:
            w.writerow([p.app_id, *(f"{v:.6f}" for v in p.utilization)])
