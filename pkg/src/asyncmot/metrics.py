"""CLEAR-MOT counts and recall-averaged MOTA (AMOTA) against keyframe ground truth.

Matching is per frame and class-gated: a minimum-distance one-to-one
assignment of predictions to ground truth on BEV center distance, pairs
farther than the gate being invalid. An identity switch is counted when a
ground-truth object is matched to a different track than at its previous
match.

AMOTA sweeps ``n`` recall targets ``r = k/n``. For each target the score
cutoff is the ``ceil(r * P)``-th highest score among true positives of an
unthresholded run (P = ground-truth count); at that cutoff

    MOTAR = clip(1 - (IDS + FP + FN - (1 - r) * P) / (r * P), 0, 1)

Unreachable recall targets contribute 0 (and the gate distance to AMOTP).
The overall figure is the mean over classes present in the ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .assignment import solve_assignment
from .sim import GroundTruth
from .tracker import TrackSnapshot


@dataclass
class ClearMot:
    mota: float
    ids: int
    fp: int
    fn: int
    tp: int
    n_gt: int
    motp: float
    matches: list = field(default_factory=list)  # (t, gt_id, track_id, distance, score)


def _index(pred: Sequence[TrackSnapshot]) -> dict:
    return {snap.timestamp: snap.tracks for snap in pred}


def clearmot(
    pred: Sequence[TrackSnapshot],
    gt: GroundTruth,
    dist_thresh: float = 2.0,
    score_cutoff: Optional[float] = None,
    classes: Optional[Iterable[str]] = None,
) -> ClearMot:
    """CLEAR-MOT over the ground-truth timestamps.

    Predictions at timestamps without ground truth are ignored.
    """
    by_t = _index(pred)
    keep = set(classes) if classes is not None else None
    last: dict[int, int] = {}
    ids = fp = fn = tp = n_gt = 0
    matches = []
    for t in gt.timestamps:
        gts = [g for g in gt.frames[t] if keep is None or g.cls in keep]
        trs = [
            s
            for s in by_t.get(t, [])
            if (keep is None or s.cls in keep) and (score_cutoff is None or s.score >= score_cutoff)
        ]
        n_gt += len(gts)
        if gts and trs:
            d = np.array([[math.hypot(g.box.x - s.box.x, g.box.y - s.box.y) for s in trs] for g in gts])
            same = np.array([[g.cls == s.cls for s in trs] for g in gts])
            res = solve_assignment(d, gate=dist_thresh, valid=same & (d <= dist_thresh))
            pairs = res.pairs
        else:
            pairs = []
        for i, j in pairs:
            g, s = gts[i], trs[j]
            prev = last.get(g.obj_id)
            if prev is not None and prev != s.track_id:
                ids += 1
            last[g.obj_id] = s.track_id
            matches.append((t, g.obj_id, s.track_id, float(d[i, j]), s.score))
        tp += len(pairs)
        fp += len(trs) - len(pairs)
        fn += len(gts) - len(pairs)
    if n_gt:
        mota = 1.0 - (fp + fn + ids) / n_gt
    else:
        mota = 1.0 if fp == 0 else 0.0
    motp = math.fsum(m[3] for m in matches) / tp if tp else float("nan")
    return ClearMot(mota, ids, fp, fn, tp, n_gt, motp, matches)


@dataclass
class RecallRow:
    cls: str
    recall: float
    threshold: Optional[float]
    motar: float
    motp: float
    tp: int
    fp: int
    fn: int
    ids: int


@dataclass
class EvalReport:
    amota: float
    amotp: float
    mota: float
    motp: float
    ids: int
    fp: int
    fn: int
    tp: int
    n_gt: int
    per_class: dict = field(default_factory=dict)
    table: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "amota": self.amota,
            "amotp": self.amotp,
            "mota": self.mota,
            "motp": self.motp,
            "ids": self.ids,
            "fp": self.fp,
            "fn": self.fn,
            "tp": self.tp,
            "n_gt": self.n_gt,
            "per_class": self.per_class,
            "table": [vars(r) for r in self.table],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        rows = [RecallRow(**r) for r in doc.get("table", [])]
        fields_ = {k: doc[k] for k in ("amota", "amotp", "mota", "motp", "ids", "fp", "fn", "tp", "n_gt")}
        return cls(per_class=doc.get("per_class", {}), table=rows, **fields_)


def class_amota(
    pred: Sequence[TrackSnapshot], gt: GroundTruth, cls: str, n_thresholds: int = 40, dist_thresh: float = 2.0
) -> tuple[float, float, list[RecallRow]]:
    full = clearmot(pred, gt, dist_thresh, classes=[cls])
    P = full.n_gt
    if P == 0:
        return float("nan"), float("nan"), []
    tp_scores = sorted((m[4] for m in full.matches), reverse=True)
    rows = []
    for k in range(1, n_thresholds + 1):
        r = k / n_thresholds
        need = -(-k * P // n_thresholds)
        if need > len(tp_scores):
            rows.append(RecallRow(cls, r, None, 0.0, dist_thresh, 0, 0, 0, 0))
            continue
        thr = tp_scores[need - 1]
        res = clearmot(pred, gt, dist_thresh, score_cutoff=thr, classes=[cls])
        motar = 1.0 - (res.ids + res.fp + res.fn - (1.0 - r) * P) / (r * P)
        motar = min(1.0, max(0.0, motar))
        motp = res.motp if res.tp else dist_thresh
        rows.append(RecallRow(cls, r, thr, motar, motp, res.tp, res.fp, res.fn, res.ids))
    amota_c = math.fsum(row.motar for row in rows) / n_thresholds
    amotp_c = math.fsum(row.motp for row in rows) / n_thresholds
    return amota_c, amotp_c, rows


def amota(
    pred: Sequence[TrackSnapshot], gt: GroundTruth, n_thresholds: int = 40, dist_thresh: float = 2.0
) -> tuple[float, float, list[RecallRow]]:
    """Class-averaged AMOTA and AMOTP, plus the per-recall table."""
    classes = sorted({g.cls for objs in gt.frames.values() for g in objs})
    if not classes:
        return 0.0, dist_thresh, []
    a_vals, p_vals, table = [], [], []
    for c in classes:
        a, p, rows = class_amota(pred, gt, c, n_thresholds, dist_thresh)
        a_vals.append(a)
        p_vals.append(p)
        table.extend(rows)
    return math.fsum(a_vals) / len(classes), math.fsum(p_vals) / len(classes), table


def evaluate(
    pred: Sequence[TrackSnapshot], gt: GroundTruth, n_thresholds: int = 40, dist_thresh: float = 2.0
) -> EvalReport:
    cm = clearmot(pred, gt, dist_thresh)
    am, ap, table = amota(pred, gt, n_thresholds, dist_thresh)
    per_class = {}
    for c in sorted({g.cls for objs in gt.frames.values() for g in objs}):
        cc = clearmot(pred, gt, dist_thresh, classes=[c])
        rows = [r for r in table if r.cls == c]
        per_class[c] = {
            "amota": math.fsum(r.motar for r in rows) / len(rows),
            "amotp": math.fsum(r.motp for r in rows) / len(rows),
            "mota": cc.mota,
            "ids": cc.ids,
            "fp": cc.fp,
            "fn": cc.fn,
            "n_gt": cc.n_gt,
        }
    return EvalReport(am, ap, cm.mota, cm.motp, cm.ids, cm.fp, cm.fn, cm.tp, cm.n_gt, per_class, table)


def format_report(report: EvalReport) -> str:
    """Fixed-width summary laid out like a results table."""
    head = f"{'Class':<12}{'AMOTA':>8}{'AMOTP':>8}{'MOTA':>8}{'IDS':>6}{'FP':>7}{'FN':>7}"
    lines = [head, "-" * len(head)]
    for c, v in report.per_class.items():
        lines.append(
            f"{c:<12}{100 * v['amota']:>8.1f}{v['amotp']:>8.3f}{100 * v['mota']:>8.1f}{v['ids']:>6d}{v['fp']:>7d}{v['fn']:>7d}"
        )
    lines.append("-" * len(head))
    lines.append(
        f"{'overall':<12}{100 * report.amota:>8.1f}{report.amotp:>8.3f}{100 * report.mota:>8.1f}"
        f"{report.ids:>6d}{report.fp:>7d}{report.fn:>7d}"
    )
    return "\n".join(lines)
