"""Per-target interference model: QoS as a function of background utilization.

Training data comes from running the target next to one stressor per
non-empty knowledge-base cell (synthetic mode) or from an imported CSV of
measured runs.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .design import KnowledgeBase, select_stressor
from .oracle import ContentionParams, QoSParams, simulate_colocation, simulate_qos
from .profiles import ApplicationProfile, ProfileDataset
from .regression import MetricReport, RegressionTree, TreeParams, fit_tree, metrics
from .stressor import Combination, sample_combinations, with_members

MIN_RUNS = 5


@dataclass(frozen=True)
class TargetApplication:
    app_id: str
    profile: ApplicationProfile
    qos: QoSParams | None = None
    baseline_ms: float | None = None

    def __post_init__(self):
        if self.baseline_ms is None and self.qos is not None:
            object.__setattr__(self, "baseline_ms", self.qos.base_latency_ms)
        if self.baseline_ms is not None and not self.baseline_ms > 0:
            raise ValueError("baseline latency must be > 0")


@dataclass(frozen=True)
class InterferenceTrainingRun:
    cell: int
    combo: Combination
    U: tuple[float, ...]
    q_ms: float

    def __post_init__(self):
        if any(u < 0 or u > 1 for u in self.U):
            raise ValueError(f"run for cell {self.cell}: utilization outside [0, 1]")
        if not self.q_ms > 0:
            raise ValueError(f"run for cell {self.cell}: latency must be > 0")


def gen_training(target: TargetApplication, kb: KnowledgeBase, ds: ProfileDataset,
                 oracle: ContentionParams) -> list[InterferenceTrainingRun]:
    """One run per non-empty cell, in cell order.

    The recorded utilization is the stressor mix on its own, measured before
    the target is deployed, restricted to the design's stress dimensions.
    """
    if target.qos is None:
        raise ValueError("synthetic training needs QoS parameters for the target")
    filled = kb.filled
    if not filled:
        raise ValueError("knowledge base has no non-empty cells")
    idx = [ds.space.names.index(d) for d in kb.design.dims]
    lookup = ds.by_id()
    runs = []
    for cell in filled:
        combo = select_stressor(kb, cell)
        background = simulate_colocation([lookup[a] for a in combo.members], oracle)
        q = simulate_qos(target.profile, background, target.qos)
        runs.append(InterferenceTrainingRun(cell, combo, tuple(float(v) for v in background[idx]), q))
    return runs


@dataclass(frozen=True, eq=False)
class InterferenceModel:
    tree: RegressionTree
    target_id: str
    dims: tuple[str, ...]
    cells_used: tuple[int, ...]
    cells_skipped: tuple[int, ...] = ()
    seed: int = 0

    def predict(self, U) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, dtype=float))
        if U.shape[1] != len(self.dims):
            raise ValueError(f"expected {len(self.dims)} utilizations ({', '.join(self.dims)}), got {U.shape[1]}")
        return self.tree.predict(U)

    def to_json(self) -> str:
        doc = {
            "target": self.target_id,
            "dims": list(self.dims),
            "seed": self.seed,
            "manifest": {"cells_used": list(self.cells_used), "cells_skipped": list(self.cells_skipped)},
            "tree": self.tree.to_dict(),
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "InterferenceModel":
        doc = json.loads(text)
        return cls(
            tree=RegressionTree.from_dict(doc["tree"]),
            target_id=doc["target"],
            dims=tuple(doc["dims"]),
            cells_used=tuple(doc["manifest"]["cells_used"]),
            cells_skipped=tuple(doc["manifest"]["cells_skipped"]),
            seed=int(doc["seed"]),
        )


def fit_interference(runs: Sequence[InterferenceTrainingRun], params: TreeParams = TreeParams(),
                     seed: int = 0, dims: Sequence[str] | None = None, n_cells: int | None = None,
                     target_id: str = "") -> InterferenceModel:
    if len(runs) < MIN_RUNS:
        raise ValueError(f"need at least {MIN_RUNS} training runs, got {len(runs)}")
    X = np.array([r.U for r in runs], dtype=float)
    y = np.array([r.q_ms for r in runs], dtype=float)
    tree = fit_tree(X, y, params, seed)
    used = sorted({r.cell for r in runs})
    skipped = [] if n_cells is None else sorted(set(range(n_cells)) - set(used))
    dims = tuple(dims) if dims is not None else tuple(f"u_{j + 1}" for j in range(X.shape[1]))
    return InterferenceModel(tree, target_id, dims, tuple(used), tuple(skipped), seed)


def predict_qos(model: InterferenceModel, U) -> float:
    U = np.asarray(U, dtype=float)
    if U.shape != (len(model.dims),):
        raise ValueError(f"expected {len(model.dims)} utilizations, got shape {U.shape}")
    return float(model.predict(U[None, :])[0])


def kb_occupants(kb: KnowledgeBase) -> list[Combination]:
    """Distinct combinations stored anywhere in the knowledge base, in indicator order."""
    seen = {c.bits: c for cell in kb.cells.values() for c, _ in cell}
    return [seen[b] for b in sorted(seen)]


def heldout_backgrounds(pool: Sequence[Combination], exclude: Sequence[Combination], ds: ProfileDataset,
                        reps: dict[int, str], oracle: ContentionParams, n: int,
                        seed: int) -> list[np.ndarray]:
    """Oracle backgrounds (full R) for ``n`` pool combinations not used in training."""
    used = {c.bits for c in exclude}
    candidates = [c for c in pool if c.bits not in used] or list(pool)
    if not candidates:
        raise ValueError("no combinations available for held-out backgrounds")
    frac = min(1.0, n / len(candidates))
    picked = sample_combinations(candidates, frac, seed)[:n]
    lookup = ds.by_id()
    return [simulate_colocation([lookup[a] for a in with_members(c, reps).members], oracle) for c in picked]


@dataclass(frozen=True, eq=False)
class Evaluation:
    report: MetricReport
    truth: np.ndarray
    predicted: np.ndarray
    backgrounds: np.ndarray = field(repr=False)


def evaluate(model: InterferenceModel, target: TargetApplication, backgrounds: Sequence[np.ndarray],
             space_names: Sequence[str]) -> Evaluation:
    """Compare model predictions with oracle QoS over full-R held-out backgrounds."""
    if not len(backgrounds):
        raise ValueError("no held-out backgrounds given")
    if target.qos is None:
        raise ValueError("evaluation needs QoS parameters for the target")
    B = np.array([np.asarray(b, dtype=float) for b in backgrounds])
    idx = [list(space_names).index(d) for d in model.dims]
    truth = np.array([simulate_qos(target.profile, b, target.qos) for b in B])
    pred = model.predict(B[:, idx])
    return Evaluation(metrics(truth, pred, allow_degenerate_r2=True), truth, pred, B)


def runs_to_csv(runs: Sequence[InterferenceTrainingRun], dims: Sequence[str] | None = None) -> str:
    D = len(runs[0].U) if runs else len(dims or ())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cell", "combo_bits", *(f"u_{j + 1}" for j in range(D)), "q_ms"])
    for r in runs:
        w.writerow([r.cell, r.combo.key, *(repr(v) for v in r.U), repr(r.q_ms)])
    return buf.getvalue()


_WARMUP = re.compile(r"#\s*warmup_discard\s*=\s*(\d+)")


def runs_from_csv(text: str, warmup_discard: int | None = None) -> list[InterferenceTrainingRun]:
    """Parse a runs CSV; ``cell`` and ``combo_bits`` are optional for measured data.

    A leading ``# warmup_discard=N`` line (or the argument, which wins) drops
    the first N data rows.
    """
    lines = text.splitlines()
    declared = 0
    while lines and lines[0].startswith("#"):
        m = _WARMUP.match(lines.pop(0))
        if m:
            declared = int(m.group(1))
    skip = declared if warmup_discard is None else warmup_discard
    reader = csv.DictReader(lines)
    ucols = [c for c in (reader.fieldnames or []) if c.startswith("u_")]
    if not ucols or "q_ms" not in (reader.fieldnames or []):
        raise ValueError("runs CSV needs u_* columns and a q_ms column")
    runs = []
    for i, row in enumerate(reader):
        if i < skip:
            continue
        bits = row.get("combo_bits") or ""
        cell = int(row["cell"]) if row.get("cell") not in (None, "") else i
        runs.append(InterferenceTrainingRun(
            cell, Combination(tuple(int(b) for b in bits)), tuple(float(row[c]) for c in ucols),
            float(row["q_ms"])))
    return runs

