"""Frame scheduler wiring preprocessing, association and estimation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import estimation as est
from .config import TrackerConfig
from .geometry import Box3D
from .matching import AssociationResult, associate_async, associate_sync
from .preprocess import PreprocessOutput, preprocess_frame

log = logging.getLogger(__name__)

FRAME_KINDS = ("sync", "async")


class FrameOrderError(ValueError):
    """Frames must arrive with strictly increasing timestamps."""


@dataclass
class Frame:
    timestamp: float
    kind: str
    dets3d: list = field(default_factory=list)
    dets2d: list = field(default_factory=list)
    cameras: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in FRAME_KINDS:
            raise ValueError(f"frame kind must be sync or async, got {self.kind!r}")
        if self.kind == "async" and self.dets3d:
            raise ValueError(f"async frame at t={self.timestamp} carries 3D detections")


@dataclass(frozen=True)
class TrackState:
    track_id: int
    cls: str
    box: Box3D
    velocity: tuple
    score: float
    status: str


@dataclass
class TrackSnapshot:
    timestamp: float
    kind: str
    tracks: list = field(default_factory=list)


class Tracker:
    """Stateful single-scene tracker. Identities are scene-local."""

    def __init__(self, config: Optional[TrackerConfig] = None):
        self.config = config or TrackerConfig()
        self.tracks: list[est.Track] = []
        self.next_id = 1
        self.last_time: Optional[float] = None
        self.last_association: Optional[AssociationResult] = None
        self.last_preprocess: Optional[PreprocessOutput] = None

    def params(self, cls):
        return self.config.for_class(cls)

    def step(self, frame: Frame) -> TrackSnapshot:
        t = frame.timestamp
        if self.last_time is not None and not t > self.last_time:
            raise FrameOrderError(f"frame at t={t} does not follow t={self.last_time}")
        self.last_time = t
        cfg = self.config
        stage = frame.kind

        tracks = [est.predict(tr, t - tr.last_time, stage, self.params(tr.cls)) for tr in self.tracks]

        pre = preprocess_frame(stage, frame.dets3d, frame.dets2d, frame.cameras, self.params, align=cfg.gaam)
        if stage == "sync":
            assoc = associate_sync(
                tracks, pre, frame.cameras, self.params, cfg.phases, cfg.cascade, cfg.association_space
            )
        else:
            assoc = associate_async(tracks, pre.single2d, frame.cameras, self.params)
        self.last_preprocess, self.last_association = pre, assoc

        cams = {c.camera_id: c for c in frame.cameras}
        updated: dict[int, est.Track] = {}
        for tr, m in assoc.mp1:
            p = self.params(tr.cls)
            tr = est.update_motion(tr, m.det3d.box, "sync", p)
            s = est.fuse_scores(m.det3d.score, m.det2d.score, p.alpha)
            updated[tr.track_id] = est.lifecycle_step(tr, "matched-sync", p, s)
        for tr, d in assoc.mp2:
            p = self.params(tr.cls)
            tr = est.update_motion(tr, d.box, "sync", p)
            updated[tr.track_id] = est.lifecycle_step(tr, "matched-sync", p, d.score)
        for tr, d in assoc.mp3 + assoc.mpa:
            p = self.params(tr.cls)
            xy = est.lift_2d(tr.box, d.box, cams[d.camera_id])
            # camera-only evidence is trusted like an async observation on any frame
            if xy is not None and est.lift_distance(tr, xy, "async", p) <= p.lift_gate:
                tr = est.update_position(tr, xy, "async", p)
            updated[tr.track_id] = est.lifecycle_step(tr, "matched-async", p, d.score)
        for tr in assoc.unmatched_tracks:
            updated[tr.track_id] = est.lifecycle_step(tr, "unmatched", self.params(tr.cls))

        survivors = [updated[tr.track_id] for tr in tracks if updated[tr.track_id].alive]

        if stage == "sync":
            for det in list(assoc.unmatched_mix) + list(assoc.unmatched_pure3d):
                survivors.append(est.spawn(det, self.next_id, t, self.params(det.cls)))
                self.next_id += 1

        self.tracks = survivors
        return self.snapshot(t, stage)

    def snapshot(self, t: float, kind: str) -> TrackSnapshot:
        states = [
            TrackState(tr.track_id, tr.cls, tr.box, tr.velocity, float(tr.score), tr.status)
            for tr in self.tracks
            if tr.status == "active"
        ]
        return TrackSnapshot(t, kind, states)


def select_frames(frames: Sequence[Frame], config: TrackerConfig) -> list[Frame]:
    if config.use_async:
        return list(frames)
    return [f for f in frames if f.kind == "sync"]


def run_scene(frames: Sequence[Frame], config: Optional[TrackerConfig] = None) -> list[TrackSnapshot]:
    """Track a whole scene; returns sync snapshots unless async output is enabled."""
    config = config or TrackerConfig()
    tracker = Tracker(config)
    out = []
    for frame in select_frames(frames, config):
        snap = tracker.step(frame)
        if snap.kind == "sync" or config.emit_async_snapshots:
            out.append(snap)
    return out
