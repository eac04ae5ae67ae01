"""Command-line front end.

Exit codes: 0 success, 2 configuration or format error, 3 I/O error,
4 internal invariant violation. ``DYNAKEY_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .dataset import atomic_write_text, format_stamp, load_sequence, parse_trajectory
from .errors import DatasetIOError, DynakeyError, InvalidConfig
from .evaluation import evaluate, format_table, report_from_dict
from .motion import ClassifierParams, State
from .oim import OimThresholds
from .pipeline import RunParams, run_sequence, score
from .scene import export_scene, generate_scene, load_config, tomllib

log = logging.getLogger("dynakey")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INTERNAL = 0, 2, 3, 4
RUN_SCHEMA_VERSION = 1
CSV_COLUMNS = ["frame_ts", "idx", "u", "v", "z", "reproj_error", "p_s", "p_g",
               "omega", "p_move", "bel", "state", "provenance"]

# run-config keys and the argparse destinations they feed
_RUN_KEYS = {
    "seed": int, "max_diff": float, "no_oim": bool, "omega_uncertain": float,
    "omega_reliable": float, "rho": float, "epsilon": float, "decision_threshold": float,
    "ransac_iters": int, "ransac_threshold": float, "fixed_alpha": float, "fixed_beta": float,
    "use_ransac": bool,
}
_RUN_DEFAULTS = {
    "seed": 0, "max_diff": 0.02, "no_oim": False, "omega_uncertain": 0.5, "omega_reliable": 0.1,
    "rho": 0.7, "epsilon": 0.1, "decision_threshold": 0.5, "ransac_iters": 2000,
    "ransac_threshold": 1.0, "fixed_alpha": None, "fixed_beta": None, "use_ransac": False,
}


def _setup_logging():
    level = os.environ.get("DYNAKEY_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _fmt(x, digits=6):
    return "" if x is None else f"{x:.{digits}f}"


# -- simulate ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    seq = generate_scene(cfg)
    export_scene(seq, args.out)
    n_kp = sum(len(f.keypoints) for f in seq.frames)
    n_dyn = sum(int((f.keypoints.label == 1).sum()) for f in seq.frames)
    print(f"scene {cfg.name!r}: {len(seq)} frames, {n_kp} keypoints, "
          f"dynamic fraction {n_dyn / max(n_kp, 1):.3f} -> {args.out}")
    return EXIT_OK


# -- classify ---------------------------------------------------------------------------

def _load_run_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise DatasetIOError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfig(f"{path}: {exc}") from None
    if data.get("schema_version") != RUN_SCHEMA_VERSION:
        raise InvalidConfig(f"schema_version: expected {RUN_SCHEMA_VERSION}, got {data.get('schema_version')!r}")
    data = {k: v for k, v in data.items() if k != "schema_version"}
    unknown = sorted(set(data) - set(_RUN_KEYS))
    if unknown:
        raise InvalidConfig(f"unknown key(s) {', '.join(unknown)}")
    out = {}
    for k, v in data.items():
        typ = _RUN_KEYS[k]
        if typ is bool and not isinstance(v, bool) or typ is not bool and isinstance(v, bool):
            raise InvalidConfig(f"{k}: wrong type {type(v).__name__}")
        try:
            out[k] = typ(v)
        except (TypeError, ValueError):
            raise InvalidConfig(f"{k}: cannot convert {v!r}") from None
    return out


def resolve_run_config(args) -> dict:
    resolved = dict(_RUN_DEFAULTS)
    if args.config:
        resolved.update(_load_run_config(args.config))
    for key in _RUN_KEYS:
        val = getattr(args, key, None)
        if val is not None and val is not False:
            resolved[key] = val
    return resolved


def run_params(cfg: dict) -> RunParams:
    try:
        classifier = ClassifierParams(
            omega_uncertain=cfg["omega_uncertain"], omega_reliable=cfg["omega_reliable"],
            epsilon=cfg["epsilon"], decision_threshold=cfg["decision_threshold"],
            fixed_alpha=cfg["fixed_alpha"], fixed_beta=cfg["fixed_beta"],
        )
        oim = OimThresholds(rho=cfg["rho"])
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from None
    if cfg["ransac_iters"] < 1:
        raise InvalidConfig("ransac_iters: must be at least 1")
    if not cfg["max_diff"] >= 0:
        raise InvalidConfig("max_diff: must be non-negative")
    return RunParams(classifier=classifier, oim=oim, use_oim=not cfg["no_oim"],
                     use_ground_truth_poses=not cfg["use_ransac"],
                     ransac_iterations=cfg["ransac_iters"], ransac_threshold=cfg["ransac_threshold"],
                     seed=cfg["seed"])


def classification_csv(seq, frames) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for frame, fr in zip(seq.frames, frames):
        ts = format_stamp(frame.timestamp)
        for r in fr.results:
            o = r.observation
            w.writerow([
                ts, r.index, _fmt(o.pixel[0]), _fmt(o.pixel[1]), _fmt(o.depth), _fmt(o.reproj_error),
                _fmt(r.p_s), _fmt(r.p_g), r.fused.rule.tag, _fmt(r.fused.p_move), _fmt(r.belief),
                r.state.state.value, r.state.provenance.value,
            ])
    return buf.getvalue()


def static_set_csv(seq, frames) -> str:
    lines = ["frame_ts,idx"]
    for frame, fr in zip(seq.frames, frames):
        ts = format_stamp(frame.timestamp)
        lines += [f"{ts},{r.index}" for r in fr.results if r.state.state is State.STATIC]
    return "\n".join(lines) + "\n"


def cmd_classify(args) -> int:
    cfg = resolve_run_config(args)
    params = run_params(cfg)
    seq = load_sequence(args.dataset, max_diff=cfg["max_diff"])
    frames = run_sequence(seq, params)
    out = Path(args.out)
    atomic_write_text(out, classification_csv(seq, frames))
    static_path = Path(args.static_out) if args.static_out else out.with_suffix(".static.csv")
    atomic_write_text(static_path, static_set_csv(seq, frames))

    n_kp = sum(len(fr.results) for fr in frames)
    n_dyn = sum(r.state.state is State.DYNAMIC for fr in frames for r in fr.results)
    sources = {}
    for fr in frames:
        sources[fr.f_source] = sources.get(fr.f_source, 0) + 1
    summary = {
        "tool": f"dynakey {__version__}",
        "dataset": str(args.dataset),
        "frames": len(frames),
        "keypoints": n_kp,
        "dynamic_fraction": n_dyn / n_kp if n_kp else 0.0,
        "oim_flips": sum(len(fr.flipped) for fr in frames),
        "flagged_keypoints": sum(bool(r.flags) for fr in frames for r in fr.results),
        "fundamental_sources": sources,
        "metrics": score(seq, frames),
        "config": {"schema_version": RUN_SCHEMA_VERSION, **cfg,
                   "resolved": dataclasses.asdict(params)},
    }
    summary_path = Path(args.summary) if args.summary else out.with_suffix(".summary.json")
    atomic_write_text(summary_path, json.dumps(summary, indent=2, default=str) + "\n")
    m = summary["metrics"]
    msg = f"{len(frames)} frames, {n_kp} keypoints, {n_dyn} dynamic, {summary['oim_flips']} OIM flips"
    if m:
        pts = m.get("points", m["observations"])
        msg += f"; dynamic precision {pts['precision']:.3f} recall {pts['recall']:.3f}"
    print(msg)
    return EXIT_OK


# -- evaluate / report ------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    est = parse_trajectory(args.estimate)
    gt = parse_trajectory(args.groundtruth)
    base = parse_trajectory(args.baseline) if args.baseline else None
    name = args.sequence or Path(args.estimate).stem
    rep = evaluate(est, gt, base, sequence=name, max_diff=args.max_diff,
                   with_scale=args.with_scale, delta=args.delta)
    doc = rep.to_json() + "\n"
    if args.json:
        atomic_write_text(args.json, doc)
        print(format_table([rep]))
    else:
        sys.stdout.write(doc)
    return EXIT_OK


def cmd_report(args) -> int:
    reports = []
    for path in args.reports:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise DatasetIOError(f"cannot read {path}: {exc}") from exc
        try:
            reports.append(report_from_dict(json.loads(text)))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise InvalidConfig(f"{path}: not a metric report ({exc})") from None
    print(format_table(reports))
    return EXIT_OK


# -- parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynakey", description="Depth-aware dynamic keypoint classification.")
    p.add_argument("--version", action="version", version=f"dynakey {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic scene and export it in TUM layout")
    s.add_argument("config", help="scene config (TOML)")
    s.add_argument("out", help="output directory")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("classify", help="classify the keypoints of a dataset directory")
    c.add_argument("dataset")
    c.add_argument("out", help="per-keypoint CSV")
    c.add_argument("--config", help="run config (TOML, schema_version = 1)")
    c.add_argument("--summary", help="summary JSON path (default: <out>.summary.json)")
    c.add_argument("--static-out", help="static keypoint set path (default: <out>.static.csv)")
    c.add_argument("--seed", type=int)
    c.add_argument("--max-diff", type=float, dest="max_diff")
    c.add_argument("--no-oim", action="store_true", dest="no_oim")
    c.add_argument("--omega-uncertain", type=float, dest="omega_uncertain")
    c.add_argument("--omega-reliable", type=float, dest="omega_reliable")
    c.add_argument("--rho", type=float)
    c.add_argument("--epsilon", type=float)
    c.add_argument("--decision-threshold", type=float, dest="decision_threshold")
    c.add_argument("--ransac-iters", type=int, dest="ransac_iters")
    c.add_argument("--ransac-threshold", type=float, dest="ransac_threshold")
    c.add_argument("--fixed-alpha", type=float, dest="fixed_alpha", help="constant reprojection threshold (px)")
    c.add_argument("--fixed-beta", type=float, dest="fixed_beta", help="constant semantic impact factor")
    c.add_argument("--ransac", action="store_true", dest="use_ransac",
                   help="estimate F by RANSAC even when ground-truth poses exist")
    c.set_defaults(func=cmd_classify)

    e = sub.add_parser("evaluate", help="ATE/RPE of an estimated trajectory")
    e.add_argument("estimate")
    e.add_argument("groundtruth")
    e.add_argument("--baseline", help="baseline trajectory for improvement rates")
    e.add_argument("--max-diff", type=float, default=0.02, dest="max_diff")
    e.add_argument("--with-scale", action="store_true", dest="with_scale")
    e.add_argument("--delta", type=int, default=1)
    e.add_argument("--sequence")
    e.add_argument("--json", help="write the JSON report here and print a table")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="tabulate evaluate JSON reports")
    r.add_argument("reports", nargs="+")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DatasetIOError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except (DynakeyError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except Exception:  # noqa: BLE001
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
