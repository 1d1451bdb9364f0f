"""Pipeline stages. Each stage reads its inputs from the artifact directory,
writes its outputs there and records itself in ``manifest.json``; ``run_all``
is exactly these stages in order."""

from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path
from typing import Callable

import numpy as np

from . import clustering, design, interference, stressor
from .config import PipelineConfig
from .oracle import naive_sum_error, synthesize_profiles, write_profiles_csv
from .profiles import ProfileDataset, dump_profiles, load_profiles, validate

log = logging.getLogger(__name__)

STAGES = ("ingest", "cluster", "combos", "train-stressor", "doe", "build-kb", "train-interference", "evaluate")

ARTIFACTS = {
    "ingest": ("profiles.csv", "validation.json"),
    "cluster": ("cluster_model.json",),
    "combos": ("combinations.csv", "stressor_training.csv", "summation_error.csv"),
    "train-stressor": ("stressor_model.json", "stressor_accuracy.csv"),
    "doe": ("lhs_design.json",),
    "build-kb": ("knowledge_base.json", "coverage.csv", "coverage_projections.csv", "coverage_summary.csv"),
    "train-interference": ("interference_training.csv", "interference_model.json"),
    "evaluate": ("evaluation_metrics.csv", "evaluation_cdf.csv", "evaluation_points.csv"),
}

MANIFEST = "manifest.json"


class StageError(RuntimeError):
    """A stage failed; ``cause`` carries the original exception."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


# -- small I/O helpers -------------------------------------------------------

def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text, encoding="utf-8")


def _read(out: Path, name: str) -> str:
    return (out / name).read_text(encoding="utf-8")


def _dataset(cfg: PipelineConfig, out: Path) -> ProfileDataset:
    return load_profiles(out / "profiles.csv", cfg.space().unit())


def _clusters(out: Path):
    return clustering.from_json(_read(out, "cluster_model.json"))


def _all_combos(out: Path, reps) -> list[stressor.Combination]:
    return stressor.read_combinations(out / "combinations.csv", reps)


def _target(cfg: PipelineConfig, ds: ProfileDataset) -> interference.TargetApplication:
    app = cfg.target_app_id or sorted(ds.app_ids)[0]
    return interference.TargetApplication(app, ds.get(app), cfg.qos())


def _manifest(out: Path) -> dict:
    path = out / MANIFEST
    if path.exists():
        return json.loads(path.read_text(encoding="utf-8"))
    return {"stages": {s: "pending" for s in STAGES}, "complete": False}


def _save_manifest(out: Path, manifest: dict) -> None:
    manifest["complete"] = all(manifest["stages"][s] == "complete" for s in STAGES)
    manifest["artifacts"] = {s: list(ARTIFACTS[s]) for s in STAGES if manifest["stages"][s] == "complete"}
    _write(out, MANIFEST, json.dumps(manifest, indent=1, sort_keys=True) + "\n")


# -- stages -------------------------------------------------------------------

def ingest(cfg: PipelineConfig, out: Path, profiles_path: str | Path) -> None:
    ds = load_profiles(profiles_path, cfg.space())
    report = validate(ds)
    if not report.empty:
        log.warning("validation: %d out-of-range, %d constant columns, %d duplicate vectors",
                    len(report.out_of_range), len(report.constant_columns), len(report.duplicate_vectors))
    dump_profiles(ds, out / "profiles.csv")
    _write(out, "validation.json", json.dumps(report.to_dict(), indent=1) + "\n")


def cluster(cfg: PipelineConfig, out: Path) -> None:
    ds = _dataset(cfg, out)
    distinct = len(np.unique(ds.matrix, axis=0))
    k_max = min(cfg.cluster_k_max, distinct)
    k_min = min(cfg.cluster_k_min, k_max)
    if k_max < cfg.cluster_k_max:
        log.warning("clamping cluster.k_max to %d distinct profiles", k_max)
    seed = cfg.stage_seed("cluster")
    if k_max < 2:
        cm = clustering.kmeans(ds, 1, seed, cfg.cluster_max_iter, cfg.cluster_tol)
    else:
        _, cm = clustering.select_k(ds, k_min, k_max, seed, cfg.cluster_max_iter, cfg.cluster_tol)
    reps = clustering.representatives(ds, cm)
    log.info("K=%d silhouette=%s", cm.k, cm.silhouette)
    _write(out, "cluster_model.json", clustering.to_json(cm, reps) + "\n")


def combos(cfg: PipelineConfig, out: Path) -> None:
    ds = _dataset(cfg, out)
    cm, reps = _clusters(out)
    d_max = min(cfg.combos_d_max, cm.k)
    every = [stressor.with_members(c, reps) for c in stressor.enumerate_combinations(cm.k, d_max)]
    seed = cfg.stage_seed("combos")
    sampled = stressor.sample_combinations(every, cfg.combos_sample_fraction, seed)
    picked = {c.bits for c in sampled}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["combo_bits", "size", "members", "sampled"])
    for c in every:
        w.writerow([c.key, len(c.clusters), ";".join(c.members), int(c.bits in picked)])
    _write(out, "combinations.csv", buf.getvalue())

    oracle = cfg.contention()
    ts = stressor.collect_training(every, ds, reps, oracle, cfg.combos_sample_fraction, seed)
    _write(out, "stressor_training.csv", ts.to_csv())

    multi = [c.members for c in sampled if len(c.members) >= 2]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["combo_bits", *(f"ape_{d}" for d in ds.space.stress_dims), "mean_ape"])
    if multi:
        try:
            err = naive_sum_error(ds, multi, oracle)
        except ValueError as e:
            log.warning("summation error analysis skipped: %s", e)
        else:
            log.info("naive summation mean APE %.2f%%", err.mean_ape)
            keys = [c.key for c in sampled if len(c.members) >= 2]
            for key, row in zip(keys, err.ape):
                w.writerow([key, *(repr(float(v)) for v in row), repr(float(row.mean()))])
    _write(out, "summation_error.csv", buf.getvalue())


def train_stressor(cfg: PipelineConfig, out: Path) -> None:
    _, reps = _clusters(out)
    ts = stressor.StressorTrainingSet.from_csv(_read(out, "stressor_training.csv"), cfg.space(), reps)
    model = stressor.train_stressor(ts, cfg.split, cfg.forest(), cfg.stage_seed("split"))
    _write(out, "stressor_model.json", model.to_json())
    _write(out, "stressor_accuracy.csv", model.accuracy_csv())


def doe(cfg: PipelineConfig, out: Path) -> None:
    dims = cfg.space().stress_dims
    d = design.lhs_sample(len(dims), cfg.lhs_M, cfg.stage_seed("lhs"), dims)
    _write(out, "lhs_design.json", json.dumps(d.to_dict()) + "\n")


def build_kb(cfg: PipelineConfig, out: Path) -> None:
    ds = _dataset(cfg, out)
    _, reps = _clusters(out)
    model = stressor.StressorModel.from_json(_read(out, "stressor_model.json"))
    lhs = design.LhsDesign.from_dict(json.loads(_read(out, "lhs_design.json")))
    kb = design.build_kb(lhs, cfg.kb_delta, _all_combos(out, reps), model, ds, reps, cfg.kb_delta_units)
    rep = design.coverage_report(kb)
    log.info("knowledge base coverage %d/%d (%.1f%%)", rep.filled, rep.M, 100 * rep.coverage)
    _write(out, "knowledge_base.json", kb.to_json())
    _write(out, "coverage.csv", rep.cells_csv)
    _write(out, "coverage_projections.csv", rep.projections_csv)
    _write(out, "coverage_summary.csv",
           f"metric,value\nM,{rep.M}\nfilled,{rep.filled}\ncoverage,{rep.coverage!r}\n")


def train_interference(cfg: PipelineConfig, out: Path, runs_csv: str | Path | None = None,
                       warmup_discard: int | None = None) -> None:
    ds = _dataset(cfg, out)
    kb = design.KnowledgeBase.from_json(_read(out, "knowledge_base.json"))
    target = _target(cfg, ds)
    if runs_csv is not None:
        runs = interference.runs_from_csv(Path(runs_csv).read_text(encoding="utf-8"), warmup_discard)
    else:
        runs = interference.gen_training(target, kb, ds, cfg.contention())
    model = interference.fit_interference(runs, cfg.interference_tree(), cfg.stage_seed("interference"),
                                          kb.design.dims, kb.design.M, target.app_id)
    _write(out, "interference_training.csv", interference.runs_to_csv(runs))
    _write(out, "interference_model.json", model.to_json() + "\n")


def evaluate(cfg: PipelineConfig, out: Path, backgrounds_csv: str | Path | None = None) -> None:
    ds = _dataset(cfg, out)
    _, reps = _clusters(out)
    model = interference.InterferenceModel.from_json(_read(out, "interference_model.json"))
    target = _target(cfg, ds)
    if backgrounds_csv is not None:
        backgrounds = read_backgrounds(backgrounds_csv, ds.space.names)
    else:
        used = interference.runs_from_csv(_read(out, "interference_training.csv"))
        if cfg.evaluate_pool == "kb":
            kb = design.KnowledgeBase.from_json(_read(out, "knowledge_base.json"))
            pool = interference.kb_occupants(kb)
        else:
            pool = _all_combos(out, reps)
        backgrounds = interference.heldout_backgrounds(
            pool, [r.combo for r in used], ds, reps, cfg.contention(),
            cfg.evaluate_n_heldout, cfg.stage_seed("evaluate"))
    ev = interference.evaluate(model, target, backgrounds, ds.space.names)
    log.info("interference MAPE %.2f%%, median %.2f%%", ev.report.mape, ev.report.median_ape)
    _write(out, "evaluation_metrics.csv", ev.report.metrics_csv())
    _write(out, "evaluation_cdf.csv", ev.report.cdf_csv())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*(f"bg_{n}" for n in ds.space.names), "q_true_ms", "q_pred_ms"])
    for b, t, p in zip(ev.backgrounds, ev.truth, ev.predicted):
        w.writerow([*(repr(float(v)) for v in b), repr(float(t)), repr(float(p))])
    _write(out, "evaluation_points.csv", buf.getvalue())


def read_backgrounds(path: str | Path, names) -> list[np.ndarray]:
    """Full-R background rows from a CSV whose header names every resource."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [np.array([float(r[n]) for n in names]) for r in rows]


STAGE_FUNCS: dict[str, Callable] = {
    "ingest": ingest,
    "cluster": cluster,
    "combos": combos,
    "train-stressor": train_stressor,
    "doe": doe,
    "build-kb": build_kb,
    "train-interference": train_interference,
    "evaluate": evaluate,
}


def run_stage(stage: str, cfg: PipelineConfig, out: str | Path, **kwargs) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out, "config.txt", cfg.to_text())
    manifest = _manifest(out)
    manifest["stages"][stage] = "running"
    _save_manifest(out, manifest)
    log.info("stage %s", stage)
    try:
        STAGE_FUNCS[stage](cfg, out, **kwargs)
    except Exception as e:
        manifest["stages"][stage] = "failed"
        _save_manifest(out, manifest)
        raise StageError(stage, e) from e
    manifest["stages"][stage] = "complete"
    _save_manifest(out, manifest)


def run_all(cfg: PipelineConfig, out: str | Path, profiles_path: str | Path,
            runs_csv: str | Path | None = None, backgrounds_csv: str | Path | None = None) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if (out / MANIFEST).exists():
        (out / MANIFEST).unlink()
    extra = {"ingest": {"profiles_path": profiles_path},
             "train-interference": {"runs_csv": runs_csv},
             "evaluate": {"backgrounds_csv": backgrounds_csv}}
    for stage in STAGES:
        run_stage(stage, cfg, out, **extra.get(stage, {}))
    return out


def synthesize_apps(cfg: PipelineConfig, n_apps: int, path: str | Path) -> ProfileDataset:
    ds = synthesize_profiles(n_apps, cfg.space(), cfg.stage_seed("synth"), cfg.synth_n_archetypes,
                             cfg.synth_concentration, cfg.synth_beta_a, cfg.synth_beta_b)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    write_profiles_csv(ds, path)
    return ds
