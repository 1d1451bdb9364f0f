"""Isolated application profiles and the resource space they live in."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_RESOURCES = (
    "CPU",
    "MEM_BW",
    "L2_BW",
    "L3_BW",
    "L3_SYSTEM_BW",
    "DISK_IO_TIME",
    "NETWORK",
    "MEMORY",
)
DEFAULT_STRESS_DIMS = ("CPU", "MEM_BW", "DISK_IO_TIME")


class ProfileError(ValueError):
    """Malformed profile input. ``line`` is 1-based and counts the header."""

    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class ResourceSpace:
    names: tuple[str, ...]
    bounds: tuple[float, ...]
    stress_dims: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))
        object.__setattr__(self, "stress_dims", tuple(self.stress_dims))
        if not names or any(not n for n in names):
            raise ValueError("resource names must be non-empty")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate resource names in {names}")
        if len(self.bounds) != len(names):
            raise ValueError("one bound per resource is required")
        if any(not (b > 0 and math.isfinite(b)) for b in self.bounds):
            raise ValueError(f"bounds must be finite and > 0, got {self.bounds}")
        if not 1 <= len(self.stress_dims) <= len(names):
            raise ValueError("need between 1 and R stress dimensions")
        unknown = [d for d in self.stress_dims if d not in names]
        if unknown or len(set(self.stress_dims)) != len(self.stress_dims):
            raise ValueError(f"bad stress dimensions {self.stress_dims}")

    @classmethod
    def default(cls) -> "ResourceSpace":
        return cls(DEFAULT_RESOURCES, (1.0,) * len(DEFAULT_RESOURCES), DEFAULT_STRESS_DIMS)

    @property
    def R(self) -> int:
        return len(self.names)

    @property
    def stress_index(self) -> tuple[int, ...]:
        return tuple(self.names.index(d) for d in self.stress_dims)

    def unit(self) -> "ResourceSpace":
        """Same space with all bounds 1, for data that is already normalized."""
        return ResourceSpace(self.names, (1.0,) * self.R, self.stress_dims)


@dataclass(frozen=True)
class ApplicationProfile:
    app_id: str
    utilization: tuple[float, ...]

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.utilization, dtype=float)


@dataclass(frozen=True)
class ProfileDataset:
    space: ResourceSpace
    profiles: tuple[ApplicationProfile, ...]
    # normalized values before clamping, kept for validation only
    preclamp: tuple[tuple[float, ...], ...] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        seen = set()
        for p in self.profiles:
            if p.app_id in seen:
                raise ProfileError(f"duplicate app_id {p.app_id!r}")
            seen.add(p.app_id)
            if len(p.utilization) != self.space.R:
                raise ProfileError(f"profile {p.app_id!r} has {len(p.utilization)} components, expected {self.space.R}")

    def __len__(self) -> int:
        return len(self.profiles)

    @property
    def app_ids(self) -> list[str]:
        return [p.app_id for p in self.profiles]

    @property
    def matrix(self) -> np.ndarray:
        if not self.profiles:
            return np.zeros((0, self.space.R))
        return np.array([p.utilization for p in self.profiles], dtype=float)

    def by_id(self) -> dict[str, ApplicationProfile]:
        return {p.app_id: p for p in self.profiles}

    def get(self, app_id: str) -> ApplicationProfile:
        for p in self.profiles:
            if p.app_id == app_id:
                return p
        raise KeyError(app_id)


def normalize(raw: np.ndarray, space: ResourceSpace) -> tuple[np.ndarray, np.ndarray]:
    """Divide by the per-resource bounds; return (clamped, unclamped)."""
    scaled = np.asarray(raw, dtype=float) / np.asarray(space.bounds)
    return np.clip(scaled, 0.0, 1.0), scaled


def from_matrix(app_ids: Sequence[str], raw: np.ndarray, space: ResourceSpace) -> ProfileDataset:
    clamped, scaled = normalize(np.atleast_2d(raw) if len(app_ids) else np.zeros((0, space.R)), space)
    profiles = tuple(
        ApplicationProfile(a, tuple(float(v) for v in row)) for a, row in zip(app_ids, clamped)
    )
    pre = tuple(tuple(float(v) for v in row) for row in scaled)
    return ProfileDataset(space, profiles, pre)


def load_profiles(path: str | Path, space: ResourceSpace) -> ProfileDataset:
    """Read a profile CSV (``app_id,<resource>...``) and normalize it by ``space.bounds``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ProfileError(f"{path}: empty file", line=1) from None
        if "app_id" not in header:
            raise ProfileError(f"{path}: missing column", line=1, column="app_id")
        for name in space.names:
            if name not in header:
                raise ProfileError(f"{path}: missing column", line=1, column=name)
        id_col = header.index("app_id")
        cols = [header.index(n) for n in space.names]

        ids: list[str] = []
        rows: list[list[float]] = []
        seen: dict[str, int] = {}
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) < len(header):
                raise ProfileError(f"{path}: expected {len(header)} fields, got {len(rec)}", line=lineno)
            app = rec[id_col].strip()
            if not app:
                raise ProfileError(f"{path}: empty app_id", line=lineno, column="app_id")
            if app in seen:
                raise ProfileError(
                    f"{path}: duplicate app_id {app!r} (first on line {seen[app]})", line=lineno, column="app_id"
                )
            seen[app] = lineno
            values = []
            for name, c in zip(space.names, cols):
                cell = rec[c].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise ProfileError(f"{path}: non-numeric value {cell!r}", line=lineno, column=name) from None
                if not math.isfinite(v):
                    raise ProfileError(f"{path}: non-finite value {cell!r}", line=lineno, column=name)
                values.append(v)
            ids.append(app)
            rows.append(values)
    if not ids:
        raise ProfileError(f"{path}: empty file (no data rows)", line=2)
    return from_matrix(ids, np.array(rows), space)


def dump_profiles(ds: ProfileDataset, path: str | Path) -> None:
    """Write normalized utilizations in profile CSV format (reload with ``space.unit()``)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["app_id", *ds.space.names])
        for p in ds.profiles:
            w.writerow([p.app_id, *(repr(float(v)) for v in p.utilization)])


@dataclass
class ValidationReport:
    out_of_range: list[tuple[str, str, float]] = field(default_factory=list)
    constant_columns: list[str] = field(default_factory=list)
    duplicate_vectors: list[tuple[str, str]] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not (self.out_of_range or self.constant_columns or self.duplicate_vectors)

    def to_dict(self) -> dict:
        return {
            "out_of_range": [{"app_id": a, "resource": r, "value": v} for a, r, v in self.out_of_range],
            "constant_columns": list(self.constant_columns),
            "duplicate_vectors": [list(p) for p in self.duplicate_vectors],
        }


def validate(ds: ProfileDataset) -> ValidationReport:
    report = ValidationReport()
    names = ds.space.names
    pre = ds.preclamp if ds.preclamp is not None else tuple(p.utilization for p in ds.profiles)
    for p, row in zip(ds.profiles, pre):
        for name, v in zip(names, row):
            if v < 0.0 or v > 1.0:
                report.out_of_range.append((p.app_id, name, float(v)))
    if len(ds) >= 2:
        m = ds.matrix
        report.constant_columns = [n for j, n in enumerate(names) if np.all(m[:, j] == m[0, j])]
    first: dict[tuple[float, ...], str] = {}
    for p in ds.profiles:
        if p.utilization in first:
            report.duplicate_vectors.append((first[p.utilization], p.app_id))
        else:
            first[p.utilization] = p.app_id
    return report


def summed_utilization(profiles: Iterable[ApplicationProfile], R: int | None = None) -> np.ndarray:
    """Component-wise sum of isolated utilizations; deliberately not clamped.

    An empty input gives the zero vector, which needs ``R`` to size it.
    ``math.fsum`` keeps the result independent of input order.
    """
    profiles = list(profiles)
    if not profiles:
        if R is None:
            raise ValueError("R is required to sum an empty profile set")
        return np.zeros(R)
    cols = zip(*(p.utilization for p in profiles))
    return np.array([math.fsum(c) for c in cols])
