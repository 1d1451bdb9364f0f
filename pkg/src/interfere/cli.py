"""Command-line entry point: ``interfere <command> [flags]``.

Exit codes: 0 success, 2 usage or configuration error, 3 unreadable or
malformed input data, 4 any other stage failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .config import ConfigError, PipelineConfig, load_config
from .interference import InterferenceModel
from .profiles import ProfileError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_STAGE = 0, 2, 3, 4

_DATA_ERRORS = (ProfileError, FileNotFoundError, IsADirectoryError, json.JSONDecodeError, UnicodeDecodeError)


class UsageError(Exception):
    pass


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--out-dir", help="artifact directory (overrides config)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key; repeatable")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="interfere", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize-apps", parents=[common], help="write synthetic application profiles")
    p.add_argument("--n-apps", type=int, help="number of applications (default synth.n_apps)")
    p.add_argument("--output", help="profile CSV path (default <out-dir>/apps.csv)")

    p = sub.add_parser("ingest", parents=[common], help="validate and normalize a profile CSV")
    p.add_argument("profiles")
    for name in ("cluster", "combos", "train-stressor", "doe", "build-kb"):
        sub.add_parser(name, parents=[common], help=f"run the {name} stage")
    p = sub.add_parser("train-interference", parents=[common], help="fit the per-target QoS tree")
    p.add_argument("--runs", help="measured runs CSV instead of synthetic runs")
    p.add_argument("--warmup-discard", type=int, help="drop this many leading rows of --runs")
    p = sub.add_parser("evaluate", parents=[common], help="score the QoS model on held-out backgrounds")
    p.add_argument("--backgrounds", help="CSV of full-resource background rows")

    p = sub.add_parser("predict", parents=[common], help="predict latency for background utilization")
    p.add_argument("--model", help="model JSON (default <out-dir>/interference_model.json)")
    p.add_argument("-U", "--util", dest="util", type=float, action="append", default=[],
                   help="one utilization per stress dimension, in model order; repeat the flag")
    p.add_argument("--batch", help="CSV with one utilization vector per row")

    p = sub.add_parser("run-all", parents=[common], help="run every stage in order")
    p.add_argument("profiles")
    p.add_argument("--target", help="target application id (default target.app_id or first app)")
    p.add_argument("--runs", help="measured runs CSV instead of synthetic runs")
    p.add_argument("--backgrounds", help="CSV of full-resource background rows")
    return parser


def _config(args) -> PipelineConfig:
    pairs = []
    for item in args.overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        pairs.append((key.strip(), value))
    if args.seed is not None:
        pairs.append(("seed", str(args.seed)))
    if args.out_dir is not None:
        pairs.append(("out_dir", args.out_dir))
    if getattr(args, "target", None):
        pairs.append(("target.app_id", args.target))
    return load_config(args.config, pairs)


def _read_batch(path: str) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if rows:
        try:
            [float(v) for v in rows[0]]
        except ValueError:
            rows = rows[1:]  # header
    try:
        return np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as e:
        raise ProfileError(f"{path}: {e}") from None


def _predict(cfg: PipelineConfig, args) -> None:
    path = Path(args.model) if args.model else Path(cfg.out_dir) / "interference_model.json"
    try:
        model = InterferenceModel.from_json(path.read_text(encoding="utf-8"))
    except (KeyError, TypeError, ValueError) as e:
        raise ProfileError(f"unreadable model {path}: {e}") from None
    if bool(args.util) == bool(args.batch):
        raise UsageError("give either -U values or --batch")
    U = np.array([args.util]) if args.util else _read_batch(args.batch)
    D = len(model.dims)
    if U.ndim != 2 or U.shape[1] != D:
        got = U.shape[1] if U.ndim == 2 else 0
        raise UsageError(f"model expects {D} utilizations ({', '.join(model.dims)}), got {got}")
    if np.any((U < 0) | (U > 1)):
        raise UsageError("utilizations must lie in [0, 1]")
    print("dims: " + ",".join(model.dims))
    for q in model.predict(U):
        print(f"latency_ms={float(q)!r}")


def _dispatch(cfg: PipelineConfig, args) -> None:
    out = Path(cfg.out_dir)
    cmd = args.command
    if cmd == "synthesize-apps":
        n = args.n_apps if args.n_apps is not None else cfg.synth_n_apps
        if n < 1:
            raise UsageError("--n-apps must be >= 1")
        path = Path(args.output) if args.output else out / "apps.csv"
        pipeline.synthesize_apps(cfg, n, path)
        print(path)
    elif cmd == "predict":
        _predict(cfg, args)
    elif cmd == "run-all":
        pipeline.run_all(cfg, out, args.profiles, args.runs, args.backgrounds)
        print(out)
    else:
        kwargs = {}
        if cmd == "ingest":
            kwargs["profiles_path"] = args.profiles
        elif cmd == "train-interference":
            kwargs.update(runs_csv=args.runs, warmup_discard=args.warmup_discard)
        elif cmd == "evaluate":
            kwargs["backgrounds_csv"] = args.backgrounds
        pipeline.run_stage(cmd, cfg, out, **kwargs)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        _dispatch(cfg, args)
    except (ConfigError, UsageError) as e:
        print(f"interfere: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except pipeline.StageError as e:
        print(f"interfere: {e}", file=sys.stderr)
        return EXIT_DATA if isinstance(e.cause, _DATA_ERRORS) else EXIT_STAGE
    except _DATA_ERRORS as e:
        print(f"interfere: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
