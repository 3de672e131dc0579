"""Toggle matrices over tracker configurations, evaluated on a set of scenes."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Optional, Sequence

from .config import TrackerConfig
from .metrics import evaluate
from .sim import perturb_extrinsics
from .tracker import Frame, run_scene

FACM_PHASES = {
    "off": None,
    "ma": ("ma",),
    "ma+p3da": ("ma", "p3da"),
    "full": ("ma", "p3da", "p2da"),
}

# Boolean switches; axis order is (off, on) so the first row is the baseline.
SWITCHES = ("async_data", "facm", "fate", "gaam")
CHOICES = ("facm_phases", "score_strategy", "gaam_metric", "association", "extrinsic_sigma")


def configure(base: TrackerConfig, **toggles) -> TrackerConfig:
    """Apply ablation toggles to a base config."""
    cfg = base
    if "async_data" in toggles:
        cfg = replace(cfg, use_async=bool(toggles["async_data"]))
    if "facm" in toggles and not toggles["facm"]:
        cfg = replace(cfg, cascade=False)
    if "facm_phases" in toggles:
        phases = FACM_PHASES[toggles["facm_phases"]]
        cfg = replace(cfg, cascade=False) if phases is None else replace(cfg, cascade=True, phases=phases)
    if "fate" in toggles and not toggles["fate"]:
        cfg = cfg.with_params(lifecycle="count", gamma=1.0)
    if "gaam" in toggles:
        cfg = replace(cfg, gaam=bool(toggles["gaam"]))
    if "gaam_metric" in toggles:
        cfg = cfg.with_params(align_metric=toggles["gaam_metric"])
    if "score_strategy" in toggles:
        cfg = cfg.with_params(score_strategy=toggles["score_strategy"])
    if "association" in toggles:
        cfg = replace(cfg, association_space=toggles["association"])
    return cfg


def with_extrinsic_noise(frames: Sequence[Frame], sigma: float, seed: int = 0) -> list[Frame]:
    """Replace the cameras the tracker sees with perturbed copies; detections are untouched."""
    if sigma == 0:
        return list(frames)
    cache: dict = {}
    out = []
    for f in frames:
        key = tuple(id(c) for c in f.cameras)
        if key not in cache:
            cache[key] = perturb_extrinsics(f.cameras, sigma, seed)
        out.append(replace(f, cameras=cache[key]))
    return out


def label(toggles: dict) -> str:
    parts = []
    for k, v in toggles.items():
        if isinstance(v, bool):
            parts.append(f"{k}={'on' if v else 'off'}")
        else:
            parts.append(f"{k}={v}")
    return " ".join(parts) if parts else "base"


def toggle_matrix(switches: Sequence[str] = (), choices: Optional[dict] = None) -> list[dict]:
    """Cartesian product of switch axes (off, on) and choice axes (in the given order)."""
    axes = [(s, (False, True)) for s in switches]
    axes += [(k, tuple(v)) for k, v in (choices or {}).items()]
    if not axes:
        return [{}]
    names = [a for a, _ in axes]
    return [dict(zip(names, combo)) for combo in itertools.product(*(vals for _, vals in axes))]


def _run_one(args):
    frames, gt, cfg, sigma, seed, n_thresholds, dist = args
    frames = with_extrinsic_noise(frames, sigma, seed)
    rep = evaluate(run_scene(frames, cfg), gt, n_thresholds, dist)
    return rep


def ablate(
    scenes: Sequence[tuple],
    base: TrackerConfig,
    matrix: Sequence[dict],
    n_thresholds: int = 40,
    dist_thresh: float = 2.0,
    jobs: int = 1,
) -> list[dict]:
    """Evaluate every toggle combination on every scene.

    ``scenes`` holds ``(frames, gt)`` pairs. Returns one row per combination
    with scene-averaged AMOTA/AMOTP/MOTA (percent for the ratios) and summed
    IDS/FP/FN, plus the per-scene reports.
    """
    tasks = []
    for toggles in matrix:
        cfg_toggles = {k: v for k, v in toggles.items() if k != "extrinsic_sigma"}
        cfg = configure(base, **cfg_toggles)
        sigma = float(toggles.get("extrinsic_sigma", 0.0))
        for idx, (frames, gt) in enumerate(scenes):
            tasks.append((frames, gt, cfg, sigma, idx, n_thresholds, dist_thresh))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_one, tasks))
    else:
        reports = [_run_one(t) for t in tasks]

    rows = []
    n = len(scenes)
    for k, toggles in enumerate(matrix):
        reps = reports[k * n : (k + 1) * n]
        rows.append(
            {
                "config": label(toggles),
                "toggles": toggles,
                "AMOTA": 100 * math.fsum(r.amota for r in reps) / n,
                "AMOTP": math.fsum(r.amotp for r in reps) / n,
                "MOTA": 100 * math.fsum(r.mota for r in reps) / n,
                "IDS": sum(r.ids for r in reps),
                "FP": sum(r.fp for r in reps),
                "FN": sum(r.fn for r in reps),
                "reports": reps,
            }
        )
    return rows


TABLE_COLUMNS = ("AMOTA", "AMOTP", "MOTA", "IDS", "FP", "FN")


def format_rows(rows: Sequence[dict]) -> str:
    width = max([len(r["config"]) for r in rows] + [6])
    head = f"{'Config':<{width}}  {'AMOTA':>7}{'AMOTP':>7}{'MOTA':>7}{'IDS':>6}{'FP':>7}{'FN':>7}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(
            f"{r['config']:<{width}}  {r['AMOTA']:>7.1f}{r['AMOTP']:>7.3f}{r['MOTA']:>7.1f}{r['IDS']:>6d}{r['FP']:>7d}{r['FN']:>7d}"
        )
    return "\n".join(lines)
