"""Latin hypercube design over the stress dimensions and the stressor knowledge
base that maps each sampled hypercube to the combinations predicted to land in it."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .profiles import ProfileDataset
from .stressor import Combination, StressorModel, predict_many, with_members


class EmptyCellError(LookupError):
    """Raised when a stressor is requested for a cell with no occupants."""

    code = "EMPTY_CELL"

    def __init__(self, cell: int):
        super().__init__(f"EMPTY_CELL: knowledge-base cell {cell} has no combinations")
        self.cell = cell


@dataclass(frozen=True, eq=False)
class LhsDesign:
    M: int
    dims: tuple[str, ...]
    cells: np.ndarray  # (M, D) integer grid indices
    seed: int

    @property
    def D(self) -> int:
        return len(self.dims)

    def __eq__(self, other):
        return (isinstance(other, LhsDesign) and self.M == other.M and self.dims == other.dims
                and self.seed == other.seed and np.array_equal(self.cells, other.cells))

    def to_dict(self) -> dict:
        return {"M": self.M, "dims": list(self.dims), "seed": self.seed, "cells": self.cells.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LhsDesign":
        cells = np.asarray(d["cells"], dtype=np.int64).reshape(int(d["M"]), len(d["dims"]))
        return cls(int(d["M"]), tuple(d["dims"]), cells, int(d["seed"]))


def lhs_sample(D: int, M: int, seed: int, dims: Sequence[str] | None = None) -> LhsDesign:
    """One independent permutation of 0..M-1 per dimension; cell i takes entry i of each."""
    if D < 1 or M < 1:
        raise ValueError(f"need D >= 1 and M >= 1, got D={D}, M={M}")
    dims = tuple(dims) if dims is not None else tuple(f"dim{j}" for j in range(D))
    if len(dims) != D:
        raise ValueError("dims must name every dimension")
    rng = np.random.default_rng(seed)
    perms = np.array([rng.permutation(M) for _ in range(D)], dtype=np.int64)
    return LhsDesign(M, dims, perms.T.copy(), seed)


def is_latin(design: LhsDesign) -> bool:
    expect = np.arange(design.M)
    return all(np.array_equal(np.sort(design.cells[:, j]), expect) for j in range(design.D))


DELTA_UNITS = ("cells", "utilization")


def bounds_array(design: LhsDesign, delta: float, units: str = "cells") -> tuple[np.ndarray, np.ndarray]:
    """(M, D) lower and upper interval edges, clipped to [0, 1].

    ``units="cells"`` widens each side by ``delta`` grid cells, i.e.
    ``[(x - delta) / M, (x + 1 + delta) / M]``. ``units="utilization"`` widens
    by ``delta`` in absolute utilization: ``[x / M - delta, (x + 1) / M + delta]``.
    """
    if units not in DELTA_UNITS:
        raise ValueError(f"delta units must be one of {DELTA_UNITS}, got {units!r}")
    x = design.cells.astype(float)
    M = design.M
    if units == "cells":
        lo, hi = (x - delta) / M, (x + 1.0 + delta) / M
    else:
        lo, hi = x / M - delta, (x + 1.0) / M + delta
    return np.clip(lo, 0.0, 1.0), np.clip(hi, 0.0, 1.0)


def cell_bounds(design: LhsDesign, i: int, delta: float, units: str = "cells") -> list[tuple[float, float]]:
    if not 0 <= i < design.M:
        raise IndexError(f"cell {i} outside 0..{design.M - 1}")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    lo, hi = bounds_array(design, delta, units)
    return [(float(a), float(b)) for a, b in zip(lo[i], hi[i])]


def cell_center(design: LhsDesign, i: int) -> np.ndarray:
    return (design.cells[i] + 0.5) / design.M


def membership(preds: np.ndarray, design: LhsDesign, delta: float, units: str = "cells",
               chunk: int = 4096) -> np.ndarray:
    """Boolean (n_preds, M): prediction lies inside the cell's widened box on every dim."""
    preds = np.atleast_2d(np.asarray(preds, dtype=float))
    if preds.shape[1] != design.D:
        raise ValueError(f"predictions have {preds.shape[1]} dims, design has {design.D}")
    lo, hi = bounds_array(design, delta, units)
    out = np.empty((len(preds), design.M), dtype=bool)
    for s in range(0, len(preds), chunk):
        p = preds[s:s + chunk, None, :]
        out[s:s + chunk] = np.all((p >= lo[None]) & (p <= hi[None]), axis=2)
    return out


@dataclass(frozen=True, eq=False)
class KnowledgeBase:
    design: LhsDesign
    delta: float
    cells: dict[int, tuple[tuple[Combination, tuple[float, ...]], ...]]
    units: str = "cells"

    @property
    def filled(self) -> list[int]:
        return [i for i in range(self.design.M) if self.cells.get(i)]

    @property
    def empty(self) -> list[int]:
        return [i for i in range(self.design.M) if not self.cells.get(i)]

    @property
    def coverage(self) -> float:
        return len(self.filled) / self.design.M

    def to_json(self) -> str:
        doc = {
            "M": self.design.M,
            "delta": self.delta,
            "delta_units": self.units,
            "dims": list(self.design.dims),
            "seed": self.design.seed,
            "cells": [
                {
                    "index": i,
                    "x": self.design.cells[i].tolist(),
                    "members": [{"combo_bits": c.key, "members": list(c.members), "predicted_util": list(u)}
                                for c, u in self.cells.get(i, ())],
                }
                for i in range(self.design.M)
            ],
        }
        return json.dumps(doc, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "KnowledgeBase":
        doc = json.loads(text)
        cells_x = np.array([c["x"] for c in doc["cells"]], dtype=np.int64).reshape(int(doc["M"]), len(doc["dims"]))
        design = LhsDesign(int(doc["M"]), tuple(doc["dims"]), cells_x, int(doc["seed"]))
        cells = {}
        for c in doc["cells"]:
            if c["members"]:
                cells[int(c["index"])] = tuple(
                    (Combination(tuple(int(b) for b in m["combo_bits"]), tuple(m["members"])),
                     tuple(float(v) for v in m["predicted_util"]))
                    for m in c["members"]
                )
        return cls(design, float(doc["delta"]), cells, doc.get("delta_units", "cells"))


def build_kb(design: LhsDesign, delta: float, combos: Sequence[Combination], model: StressorModel,
             ds: ProfileDataset, reps: dict[int, str], units: str = "cells") -> KnowledgeBase:
    """Predict every combination's utilization and file it under each cell it falls in."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    missing = [d for d in design.dims if d not in model.space.names]
    if missing:
        raise ValueError(f"design dimensions {missing} are not in the model's resource space")
    idx = [model.space.names.index(d) for d in design.dims]
    preds = predict_many(model, combos, ds, reps)[:, idx] if combos else np.zeros((0, design.D))
    return kb_from_predictions(design, delta, combos, preds, reps, units)


def kb_from_predictions(design: LhsDesign, delta: float, combos: Sequence[Combination],
                        preds: np.ndarray, reps: dict[int, str] | None = None,
                        units: str = "cells") -> KnowledgeBase:
    combos = [with_members(c, reps) if reps is not None else c for c in combos]
    cells: dict[int, list] = {}
    if len(combos):
        hit = membership(preds, design, delta, units)
        # transpose so np.nonzero walks cell-major, keeping combo order within a cell
        for cell, j in zip(*np.nonzero(hit.T)):
            cells.setdefault(int(cell), []).append((combos[j], tuple(float(v) for v in preds[j])))
    return KnowledgeBase(design, float(delta), {i: tuple(v) for i, v in cells.items()}, units)


def select_stressor(kb: KnowledgeBase, i: int) -> Combination:
    """Occupant nearest the cell center; equal distances go to the smaller indicator vector."""
    if not 0 <= i < kb.design.M:
        raise IndexError(f"cell {i} outside 0..{kb.design.M - 1}")
    occupants = kb.cells.get(i)
    if not occupants:
        raise EmptyCellError(i)
    center = cell_center(kb.design, i)
    return min(occupants, key=lambda cu: (float(((np.asarray(cu[1]) - center) ** 2).sum()), cu[0].bits))[0]


@dataclass(frozen=True)
class CoverageReport:
    coverage: float
    filled: int
    M: int
    occupancy: tuple[int, ...]
    cells_csv: str
    projections_csv: str


def coverage_report(kb: KnowledgeBase) -> CoverageReport:
    design = kb.design
    occ = tuple(len(kb.cells.get(i, ())) for i in range(design.M))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cell", *(f"x_{d}" for d in design.dims), "occupancy"])
    for i in range(design.M):
        w.writerow([i, *design.cells[i].tolist(), occ[i]])
    cells_csv = buf.getvalue()

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dim_a", "dim_b", "x_a", "x_b", "filled", "occupancy"])
    for a, b in combinations(range(design.D), 2):
        for i in range(design.M):
            w.writerow([design.dims[a], design.dims[b], int(design.cells[i, a]), int(design.cells[i, b]),
                        int(occ[i] > 0), occ[i]])
    proj_csv = buf.getvalue()

    filled = sum(1 for o in occ if o > 0)
    return CoverageReport(filled / design.M, filled, design.M, occ, cells_csv, proj_csv)
