"""Pipeline configuration: a flat ``section.key=value`` text file.

Unset seeds are derived from the master seed and the stage name, so a single
``seed=`` line pins every random stream in the pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable

from .oracle import ContentionParams, Mode, QoSParams
from .profiles import DEFAULT_RESOURCES, DEFAULT_STRESS_DIMS, ResourceSpace
from .regression import ForestParams, TreeParams
from .seeding import derive_seed


class ConfigError(ValueError):
    pass


def _opt(kind: str, default=None):
    return field(default=default, metadata={"kind": kind})


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = _opt("int", 7)
    out_dir: str = _opt("str", "artifacts")

    space_names: tuple[str, ...] = _opt("strs", DEFAULT_RESOURCES)
    space_bounds: tuple[float, ...] = _opt("floats", (1.0,) * len(DEFAULT_RESOURCES))
    space_stress_dims: tuple[str, ...] = _opt("strs", DEFAULT_STRESS_DIMS)

    cluster_k_min: int = _opt("int", 2)
    cluster_k_max: int = _opt("int", 25)
    cluster_max_iter: int = _opt("int", 300)
    cluster_tol: float = _opt("float", 1e-6)
    cluster_seed: int | None = _opt("opt_int")

    oracle_mode: tuple[str, ...] = _opt("strs", ("SATURATING",))
    oracle_gamma: tuple[float, ...] = _opt("floats", (0.3,))
    oracle_sigma: float = _opt("float", 0.02)
    oracle_seed: int | None = _opt("opt_int")

    combos_d_max: int = _opt("int", 8)
    combos_sample_fraction: float = _opt("float", 0.28)
    combos_seed: int | None = _opt("opt_int")

    forest_n_trees: int = _opt("int", 100)
    forest_max_depth: int | None = _opt("opt_int", 12)
    forest_min_samples_leaf: int = _opt("int", 2)
    forest_max_features: int | None = _opt("opt_int")
    forest_bootstrap: bool = _opt("bool", True)

    split_train: float = _opt("float", 0.8)
    split_test: float = _opt("float", 0.1)
    split_validation: float = _opt("float", 0.1)
    split_seed: int | None = _opt("opt_int")

    lhs_M: int = _opt("int", 300)
    lhs_seed: int | None = _opt("opt_int")
    kb_delta: float = _opt("float", 0.1)
    kb_delta_units: str = _opt("str", "utilization")

    interference_max_depth: int | None = _opt("opt_int", 12)
    interference_min_samples_leaf: int = _opt("int", 1)
    interference_seed: int | None = _opt("opt_int")

    target_app_id: str = _opt("str", "")
    qos_base_latency_ms: float = _opt("float", 100.0)
    # empty: total sensitivity 1 split evenly over the stress dimensions
    qos_weights: tuple[str, ...] = _opt("strs", ())
    qos_p: float = _opt("float", 2.0)
    qos_sigma: float = _opt("float", 0.0)
    qos_seed: int | None = _opt("opt_int")

    evaluate_n_heldout: int = _opt("int", 200)
    evaluate_pool: str = _opt("str", "kb")
    evaluate_seed: int | None = _opt("opt_int")

    synth_n_apps: int = _opt("int", 106)
    synth_n_archetypes: int = _opt("int", 13)
    synth_concentration: float = _opt("float", 60.0)
    synth_beta_a: float = _opt("float", 0.9)
    synth_beta_b: float = _opt("float", 2.2)
    synth_seed: int | None = _opt("opt_int")

    def __post_init__(self):
        fr = (self.split_train, self.split_test, self.split_validation)
        if any(f < 0 for f in fr) or not math.isclose(sum(fr), 1.0):
            raise ConfigError(f"split fractions must be non-negative and sum to 1, got {fr}")
        if self.lhs_M < 1:
            raise ConfigError("lhs.M must be >= 1")
        if self.kb_delta < 0:
            raise ConfigError("kb.delta must be >= 0")
        if self.kb_delta_units not in ("cells", "utilization"):
            raise ConfigError("kb.delta_units must be 'cells' or 'utilization'")
        if self.evaluate_pool not in ("kb", "combos"):
            raise ConfigError("evaluate.pool must be 'kb' or 'combos'")
        if not 0 < self.combos_sample_fraction <= 1:
            raise ConfigError("combos.sample_fraction must be in (0, 1]")
        if self.combos_d_max < 1:
            raise ConfigError("combos.d_max must be >= 1")
        if not 2 <= self.cluster_k_min <= self.cluster_k_max:
            raise ConfigError("need 2 <= cluster.k_min <= cluster.k_max")
        try:
            self.space()
        except ValueError as e:
            raise ConfigError(str(e)) from None

    # -- derived objects -------------------------------------------------

    def stage_seed(self, stage: str) -> int:
        explicit = getattr(self, f"{stage}_seed", None)
        return explicit if explicit is not None else derive_seed(self.seed, stage)

    def space(self) -> ResourceSpace:
        return ResourceSpace(self.space_names, self.space_bounds, self.space_stress_dims)

    def contention(self) -> ContentionParams:
        R = len(self.space_names)
        modes = self.oracle_mode if len(self.oracle_mode) == R else self.oracle_mode[:1] * R
        gamma = self.oracle_gamma if len(self.oracle_gamma) == R else self.oracle_gamma[:1] * R
        return ContentionParams(tuple(Mode(m) for m in modes), gamma, self.oracle_sigma, self.stage_seed("oracle"))

    def qos(self) -> QoSParams:
        weights = dict.fromkeys(self.space_names, 0.0)
        if not self.qos_weights:
            for d in self.space_stress_dims:
                weights[d] = 1.0 / len(self.space_stress_dims)
        for item in self.qos_weights:
            name, _, w = item.partition(":")
            if name not in weights:
                raise ConfigError(f"qos.weights names unknown resource {name!r}")
            weights[name] = float(w)
        return QoSParams(self.qos_base_latency_ms, tuple(weights.values()), self.qos_p, self.qos_sigma,
                         self.stage_seed("qos"))

    def forest(self) -> ForestParams:
        return ForestParams(self.forest_n_trees, self.forest_max_depth, self.forest_min_samples_leaf,
                            self.forest_max_features, self.forest_bootstrap)

    def interference_tree(self) -> TreeParams:
        return TreeParams(self.interference_max_depth, self.interference_min_samples_leaf)

    @property
    def split(self) -> tuple[float, float, float]:
        return (self.split_train, self.split_test, self.split_validation)

    # -- text form -------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{_key(f)}={_format(f.metadata['kind'], getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, pairs: Iterable[tuple[str, str]]) -> "PipelineConfig":
        by_key = {_key(f): f for f in fields(self)}
        changes = {}
        for key, raw in pairs:
            if key not in by_key:
                raise ConfigError(f"unknown config key {key!r}")
            f = by_key[key]
            try:
                changes[f.name] = _parse(f.metadata["kind"], raw)
            except ValueError as e:
                raise ConfigError(f"bad value for {key}: {raw!r} ({e})") from None
        return replace(self, **changes)


_SECTIONS = ("space", "cluster", "oracle", "combos", "forest", "split", "lhs", "kb", "interference",
             "target", "qos", "evaluate", "synth")


def _key(f) -> str:
    head, _, rest = f.name.partition("_")
    return f"{head}.{rest}" if head in _SECTIONS else f.name


def _format(kind: str, v) -> str:
    if v is None:
        return ""
    if kind in ("strs", "floats"):
        return ",".join(repr(float(x)) if kind == "floats" else str(x) for x in v)
    if kind == "bool":
        return "true" if v else "false"
    if kind == "float":
        return repr(float(v))
    return str(v)


def _parse(kind: str, raw: str):
    raw = raw.strip()
    if kind == "int":
        return int(raw)
    if kind == "opt_int":
        return None if raw == "" else int(raw)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError("expected true/false")
    if kind == "strs":
        return tuple(s.strip() for s in raw.split(",") if s.strip())
    if kind == "floats":
        return tuple(float(s) for s in raw.split(",") if s.strip())
    return raw


def parse_pairs(text: str) -> list[tuple[str, str]]:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        k, _, v = line.partition("=")
        pairs.append((k.strip(), v.strip()))
    return pairs


def parse_config(text: str) -> PipelineConfig:
    return PipelineConfig().with_overrides(parse_pairs(text))


def load_config(path: str | Path | None, overrides: Iterable[tuple[str, str]] = ()) -> PipelineConfig:
    pairs = parse_pairs(Path(path).read_text(encoding="utf-8")) if path else []
    return PipelineConfig().with_overrides([*pairs, *overrides])
