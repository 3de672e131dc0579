"""Command-line entry points: track, eval, simulate, ablate.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numerical fault.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .ablation import FACM_PHASES, SWITCHES, TABLE_COLUMNS, ablate, format_rows, toggle_matrix
from .config import ConfigError, TrackerConfig, load_config, load_document
from .estimation import NumericalFault
from .io import FormatError, load_scene, load_tracks, save_scene, save_tracks
from .metrics import evaluate, format_report
from .sim import dropout_scenario, generate, scenario_from_dict
from .tracker import FrameOrderError, run_scene

log = logging.getLogger("asyncmot")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; we reserve 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(path) -> TrackerConfig:
    return load_config(path) if path else TrackerConfig()


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# -- subcommands ---------------------------------------------------------------


def cmd_track(args) -> int:
    cfg = _config(args.config)
    if args.sync_only:
        cfg = replace(cfg, use_async=False)
    if args.emit_async_snapshots:
        cfg = replace(cfg, emit_async_snapshots=True)
    frames, _ = load_scene(args.scene)
    snaps = run_scene(frames, cfg)
    save_tracks(snaps, args.out)
    n = sum(len(s.tracks) for s in snaps)
    print(f"wrote {len(snaps)} snapshots ({n} track states) to {args.out}")
    return EXIT_OK


def write_report(report, out_dir: Path):
    from .plotting import plot_recall_curve

    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    (out_dir / "report.txt").write_text(format_report(report) + "\n", encoding="utf-8")
    with open(out_dir / "recall.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "recall", "threshold", "motar", "motp", "tp", "fp", "fn", "ids"])
        for r in report.table:
            w.writerow([r.cls, r.recall, "" if r.threshold is None else r.threshold, r.motar, r.motp, r.tp, r.fp, r.fn, r.ids])
    plot_recall_curve(report, out_dir / "recall.png")


def cmd_eval(args) -> int:
    snaps = load_tracks(args.tracks)
    _, gt = load_scene(args.gt)
    if gt is None:
        raise FormatError(f"{args.gt}: no gt records")
    report = evaluate(snaps, gt, args.n_thresholds, args.dist_gate)
    print(format_report(report))
    if args.out_dir:
        write_report(report, _out_dir(args.out_dir))
    return EXIT_OK


def cmd_simulate(args) -> int:
    doc = load_document(args.scenario) if args.scenario else {}
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ValueError("scenario document must be a mapping")
    try:
        cfg = scenario_from_dict(doc, args.seed)
    except TypeError as exc:
        raise ValueError(f"scenario: {exc}") from None
    frames, gt = generate(cfg)
    meta = {"seed": cfg.seed, "duration": cfg.duration}
    save_scene(args.out, frames, gt, scene_id=Path(args.out).stem, cameras=frames[0].cameras if frames else [], meta=meta)
    print(f"wrote {len(frames)} frames and {len(gt.timestamps)} gt keyframes to {args.out}")
    return EXIT_OK


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma separated numbers, got {text!r}") from None


def _words(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def cmd_ablate(args) -> int:
    from .plotting import plot_ablation

    base = _config(args.config)
    scenes = []
    for path in args.scenes:
        frames, gt = load_scene(path)
        if gt is None:
            raise FormatError(f"{path}: no gt records")
        scenes.append((frames, gt))
    for seed in range(args.suite_seeds):
        scenes.append(generate(dropout_scenario(seed)))
    if not scenes:
        raise UsageError("give scene files or --suite-seeds")

    choices = {}
    if args.facm_phases:
        phases = _words(args.facm_phases)
        bad = [p for p in phases if p not in FACM_PHASES]
        if bad:
            raise UsageError(f"--facm-phases: unknown value {bad[0]!r}")
        choices["facm_phases"] = phases
    for name in ("score_strategy", "gaam_metric", "association"):
        value = getattr(args, name)
        if value:
            choices[name] = _words(value)
    if args.extrinsic_sigma:
        choices["extrinsic_sigma"] = _floats(args.extrinsic_sigma)
    matrix = toggle_matrix(args.toggle or (), choices)

    rows = ablate(scenes, base, matrix, args.n_thresholds, args.dist_gate, args.jobs)
    table = format_rows(rows)
    print(table)
    if args.out_dir:
        out = _out_dir(args.out_dir)
        (out / "ablation.txt").write_text(table + "\n", encoding="utf-8")
        with open(out / "ablation.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["config", *TABLE_COLUMNS])
            for r in rows:
                w.writerow([r["config"], *(r[c] for c in TABLE_COLUMNS)])
        plot_ablation(rows, out / "ablation.png", "AMOTA")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="asyncmot", description="Asynchronous camera/LiDAR 3D multi-object tracking.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("track", help="run the tracker on a scene file")
    t.add_argument("scene", help="scene file (JSONL)")
    t.add_argument("--config", help="tracker config (YAML or JSON); defaults apply when omitted")
    t.add_argument("--out", required=True, help="output track file (JSONL)")
    t.add_argument("--sync-only", action="store_true", help="drop async camera frames before tracking")
    t.add_argument("--emit-async-snapshots", action="store_true", help="also write track states at async frames")
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="score a track file against scene ground truth")
    e.add_argument("tracks", help="track file written by 'track'")
    e.add_argument("gt", help="scene file holding gt records")
    e.add_argument("--dist-gate", type=float, default=2.0, help="BEV center distance gate in meters (default 2)")
    e.add_argument("--n-thresholds", type=int, default=40, help="number of recall targets (default 40)")
    e.add_argument("--out-dir", help="write report.json, report.txt, recall.csv and recall.png here")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("simulate", help="generate a synthetic scene with ground truth")
    s.add_argument("scenario", nargs="?", help="scenario file (YAML or JSON); an empty scenario when omitted")
    s.add_argument("--seed", type=int, default=None, help="random seed (overrides the scenario's)")
    s.add_argument("--out", required=True, help="output scene file (JSONL)")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("ablate", help="evaluate a matrix of configuration toggles")
    a.add_argument("scenes", nargs="*", help="scene files with gt records")
    a.add_argument("--suite-seeds", type=int, default=0, help="add N generated dropout scenes (seeds 0..N-1)")
    a.add_argument("--config", help="base tracker config")
    a.add_argument("--toggle", action="append", choices=SWITCHES, help="on/off switch axis; repeatable")
    a.add_argument("--facm-phases", help=f"comma list from {', '.join(FACM_PHASES)}")
    a.add_argument("--score-strategy", help="comma list from noisy_or, max, ema, average")
    a.add_argument("--gaam-metric", help="comma list from iou, giou, euclid")
    a.add_argument("--association", help="comma list from bev, image")
    a.add_argument("--extrinsic-sigma", help="comma list of extrinsic noise levels")
    a.add_argument("--dist-gate", type=float, default=2.0, help="BEV center distance gate in meters (default 2)")
    a.add_argument("--n-thresholds", type=int, default=40, help="number of recall targets (default 40)")
    a.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    a.add_argument("--out-dir", help="write ablation.csv, ablation.txt and ablation.png here")
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"asyncmot: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFault as exc:
        print(f"asyncmot: numerical fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, FormatError, FrameOrderError, OSError, ValueError, KeyError) as exc:
        print(f"asyncmot: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
