"""Frequency-aware cascade association of predicted tracks with detections.

Sync frames run up to three phases in order: mix detections (BEV GIoU),
pure LiDAR detections (BEV GIoU), then pure camera detections (image IoU of
the projected track). Async frames run the image-IoU phase only, against
every predicted track.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .assignment import solve_assignment
from .config import PHASES, Params
from .estimation import Track
from .geometry import CameraModel, bev_giou_3d, iou_2d, project_box
from .preprocess import Detection2D, Detection3D, MixDetection, PreprocessOutput


@dataclass
class AssociationResult:
    kind: str
    mp1: list = field(default_factory=list)  # (Track, MixDetection)
    mp2: list = field(default_factory=list)  # (Track, Detection3D)
    mp3: list = field(default_factory=list)  # (Track, Detection2D)
    mpa: list = field(default_factory=list)  # (Track, Detection2D)
    unmatched_tracks: list = field(default_factory=list)
    unmatched_mix: list = field(default_factory=list)
    unmatched_pure3d: list = field(default_factory=list)
    unmatched_pure2d: list = field(default_factory=list)
    unmatched_single2d: list = field(default_factory=list)

    def pairs(self):
        return self.mp1 + self.mp2 + self.mp3 + self.mpa

    def matched_ids(self) -> set[int]:
        return {t.track_id for t, _ in self.pairs()}


ParamsFor = Callable[[str], Params]


def _match_by_class(tracks, dets, cost_fn, gate_of, params_for: ParamsFor):
    """Class-gated assignment. Returns (pairs of indices, unmatched track idx, unmatched det idx)."""
    pairs: list[tuple[int, int]] = []
    t_by_cls: dict[str, list[int]] = {}
    d_by_cls: dict[str, list[int]] = {}
    for i, t in enumerate(tracks):
        t_by_cls.setdefault(t.cls, []).append(i)
    for j, d in enumerate(dets):
        d_by_cls.setdefault(d.cls, []).append(j)
    for cls in sorted(set(t_by_cls) & set(d_by_cls)):
        ti, dj = t_by_cls[cls], d_by_cls[cls]
        costs = np.array([[cost_fn(tracks[a], dets[b]) for b in dj] for a in ti])
        res = solve_assignment(costs, gate=gate_of(params_for(cls)))
        pairs.extend((ti[r], dj[c]) for r, c in res.pairs)
    used_t = {i for i, _ in pairs}
    used_d = {j for _, j in pairs}
    pairs.sort()
    return (
        pairs,
        [i for i in range(len(tracks)) if i not in used_t],
        [j for j in range(len(dets)) if j not in used_d],
    )


def bev_cost(track: Track, det) -> float:
    return 1.0 - bev_giou_3d(track.box, det.box)


def image_cost_fn(cams: Sequence[CameraModel]):
    """Cost 1 - IoU between the track projected into the detection's camera and the detection."""
    cam_by_id = {c.camera_id: c for c in cams}
    cache: dict = {}

    def cost(track: Track, det: Detection2D) -> float:
        key = (track.track_id, det.camera_id)
        if key not in cache:
            cam = cam_by_id.get(det.camera_id)
            cache[key] = project_box(track.box, cam) if cam is not None else None
        rect = cache[key]
        if rect is None:
            return 1.0
        return 1.0 - iou_2d(rect, det.box)

    return cost


def associate_sync(
    tracks: Sequence[Track],
    pre: PreprocessOutput,
    cams: Sequence[CameraModel],
    params_for: ParamsFor,
    phases: Sequence[str] = PHASES,
    cascade: bool = True,
    space: str = "bev",
) -> AssociationResult:
    """Cascade association on a sync frame.

    ``cascade=False`` collapses to one stage matching every 3D detection
    (mix and pure) with BEV GIoU and ignores camera-only detections.
    ``space="image"`` matches mix detections through their 2D member only and
    drops pure LiDAR detections.
    """
    out = AssociationResult("sync")
    tracks = list(tracks)
    if not cascade:
        dets = list(pre.mix) + list(pre.pure3d)
        pairs, um_t, um_d = _match_by_class(tracks, dets, bev_cost, lambda p: p.theta_fm, params_for)
        n_mix = len(pre.mix)
        for i, j in pairs:
            (out.mp1 if j < n_mix else out.mp2).append((tracks[i], dets[j]))
        out.unmatched_mix = [dets[j] for j in um_d if j < n_mix]
        out.unmatched_pure3d = [dets[j] for j in um_d if j >= n_mix]
        out.unmatched_pure2d = list(pre.pure2d)
        out.unmatched_tracks = [tracks[i] for i in um_t]
        return out

    remaining = tracks
    if "ma" in phases:
        if space == "image":
            img = image_cost_fn(cams)
            cost = lambda t, m: img(t, m.det2d)  # noqa: E731
            gate = lambda p: p.theta_tm  # noqa: E731
        else:
            cost, gate = bev_cost, (lambda p: p.theta_fm)
        pairs, um_t, um_d = _match_by_class(remaining, pre.mix, cost, gate, params_for)
        out.mp1 = [(remaining[i], pre.mix[j]) for i, j in pairs]
        out.unmatched_mix = [pre.mix[j] for j in um_d]
        remaining = [remaining[i] for i in um_t]
    else:
        out.unmatched_mix = list(pre.mix)

    if "p3da" in phases and space == "bev":
        pairs, um_t, um_d = _match_by_class(remaining, pre.pure3d, bev_cost, lambda p: p.theta_sm, params_for)
        out.mp2 = [(remaining[i], pre.pure3d[j]) for i, j in pairs]
        out.unmatched_pure3d = [pre.pure3d[j] for j in um_d]
        remaining = [remaining[i] for i in um_t]
    elif space == "bev":
        out.unmatched_pure3d = list(pre.pure3d)

    if "p2da" in phases:
        pairs, um_t, um_d = _match_by_class(remaining, pre.pure2d, image_cost_fn(cams), lambda p: p.theta_tm, params_for)
        out.mp3 = [(remaining[i], pre.pure2d[j]) for i, j in pairs]
        out.unmatched_pure2d = [pre.pure2d[j] for j in um_d]
        remaining = [remaining[i] for i in um_t]
    else:
        out.unmatched_pure2d = list(pre.pure2d)

    out.unmatched_tracks = remaining
    return out


def associate_async(
    tracks: Sequence[Track],
    dets2d: Sequence[Detection2D],
    cams: Sequence[CameraModel],
    params_for: ParamsFor,
) -> AssociationResult:
    """Camera-only association for async frames, image IoU gated by theta_tm."""
    out = AssociationResult("async")
    tracks = list(tracks)
    dets2d = list(dets2d)
    pairs, um_t, um_d = _match_by_class(tracks, dets2d, image_cost_fn(cams), lambda p: p.theta_tm, params_for)
    out.mpa = [(tracks[i], dets2d[j]) for i, j in pairs]
    out.unmatched_tracks = [tracks[i] for i in um_t]
    out.unmatched_single2d = [dets2d[j] for j in um_d]
    return out
