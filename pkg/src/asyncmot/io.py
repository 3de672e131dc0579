"""Line-delimited JSON scene and track files.

Every line is one JSON object with a ``record`` field. See docs/formats.md
for the field-by-field grammar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .geometry import Box2D, Box3D, CameraModel
from .preprocess import Detection2D, Detection3D
from .sim import GroundTruth, GTObject
from .tracker import Frame, TrackSnapshot, TrackState

FORMAT_VERSION = 1
SCENE_FORMAT = "asyncmot-scene"
TRACK_FORMAT = "asyncmot-tracks"


class FormatError(ValueError):
    """Malformed or invalid record in a scene or track file."""


@dataclass
class SceneFile:
    scene_id: str
    cameras: list
    frames: list
    gt: Optional[GroundTruth] = None
    meta: dict = field(default_factory=dict)


# -- encoding -----------------------------------------------------------------


def camera_to_dict(cam: CameraModel) -> dict:
    return {
        "id": cam.camera_id,
        "K": cam.intrinsic.tolist(),
        "R": cam.rotation.tolist(),
        "t": cam.translation.tolist(),
        "width": cam.width,
        "height": cam.height,
    }


def camera_from_dict(d: dict) -> CameraModel:
    _check_keys(d, {"id", "K", "R", "t", "width", "height"}, "camera")
    return CameraModel(str(d["id"]), d["K"], d["R"], d["t"], int(d["width"]), int(d["height"]))


def _box3d(b: Box3D) -> list:
    return [float(b.x), float(b.y), float(b.z), float(b.w), float(b.l), float(b.h), float(b.theta)]


def _box2d(b: Box2D) -> list:
    return [float(b.x1), float(b.y1), float(b.x2), float(b.y2)]


def _dump(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"), allow_nan=False)


def scene_lines(scene: SceneFile) -> list[str]:
    header = {
        "record": "header",
        "format": SCENE_FORMAT,
        "version": FORMAT_VERSION,
        "scene_id": scene.scene_id,
        "cameras": [camera_to_dict(c) for c in scene.cameras],
    }
    if scene.meta:
        header["meta"] = scene.meta
    lines = [_dump(header)]
    for f in scene.frames:
        rec = {
            "record": "frame",
            "t": float(f.timestamp),
            "kind": f.kind,
            "dets3d": [{"box": _box3d(d.box), "score": float(d.score), "cls": d.cls} for d in f.dets3d],
            "dets2d": [
                {"box": _box2d(d.box), "score": float(d.score), "cls": d.cls, "camera": d.camera_id} for d in f.dets2d
            ],
        }
        if list(f.cameras) != list(scene.cameras):
            rec["cameras"] = [camera_to_dict(c) for c in f.cameras]
        lines.append(_dump(rec))
    if scene.gt is not None:
        for t in scene.gt.timestamps:
            objs = [
                {"id": g.obj_id, "cls": g.cls, "box": _box3d(g.box), "velocity": [float(v) for v in g.velocity]}
                for g in scene.gt.frames[t]
            ]
            lines.append(_dump({"record": "gt", "t": float(t), "objects": objs}))
    return lines


def save_scene(path, frames: Sequence[Frame], gt: Optional[GroundTruth] = None, scene_id: str = "scene", cameras=None, meta=None):
    if cameras is None:
        cameras = list(frames[0].cameras) if frames else []
    scene = SceneFile(scene_id, list(cameras), list(frames), gt, dict(meta or {}))
    Path(path).write_text("\n".join(scene_lines(scene)) + "\n", encoding="utf-8")


# -- decoding -----------------------------------------------------------------


def _check_keys(d: dict, allowed: set, what: str, required: Optional[set] = None, strict: bool = True):
    if not isinstance(d, dict):
        raise FormatError(f"{what}: expected an object")
    missing = (allowed if required is None else required) - set(d)
    if missing:
        raise FormatError(f"{what}: missing field {sorted(missing)[0]!r}")
    if strict:
        extra = set(d) - allowed
        if extra:
            raise FormatError(f"{what}: unknown field {sorted(extra)[0]!r}")


def _score(value, what):
    if not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
        raise FormatError(f"{what}: field 'score' must lie in [0, 1], got {value!r}")
    return float(value)


def _parse_box3d(v, what) -> Box3D:
    if not isinstance(v, list) or len(v) != 7:
        raise FormatError(f"{what}: field 'box' needs 7 numbers")
    try:
        return Box3D(*(float(x) for x in v))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{what}: field 'box': {exc}") from None


def _parse_box2d(v, what) -> Box2D:
    if not isinstance(v, list) or len(v) != 4:
        raise FormatError(f"{what}: field 'box' needs 4 numbers")
    try:
        return Box2D(*(float(x) for x in v))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{what}: field 'box': {exc}") from None


def read_scene(path, strict: bool = True) -> SceneFile:
    """Parse and validate a scene file; errors name the offending line."""
    header = None
    frames: list[Frame] = []
    gt = GroundTruth()
    has_gt = False
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"line {n}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{where}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or "record" not in rec:
                raise FormatError(f"{where}: missing field 'record'")
            kind = rec["record"]
            try:
                if kind == "header":
                    if header is not None:
                        raise FormatError(f"{where}: duplicate header")
                    _check_keys(rec, {"record", "format", "version", "scene_id", "cameras", "meta"}, where,
                                {"record", "format", "version", "scene_id", "cameras"}, strict)
                    if rec["format"] != SCENE_FORMAT or rec["version"] != FORMAT_VERSION:
                        raise FormatError(f"{where}: unsupported format {rec['format']!r} v{rec['version']!r}")
                    header = rec
                    header_cams = [camera_from_dict(c) for c in rec["cameras"]]
                    continue
                if header is None:
                    raise FormatError(f"{where}: record before header")
                if kind == "frame":
                    frames.append(_parse_frame(rec, where, header_cams, strict))
                    if len(frames) > 1 and not frames[-1].timestamp > frames[-2].timestamp:
                        raise FormatError(f"{where}: timestamps must increase strictly")
                elif kind == "gt":
                    _check_keys(rec, {"record", "t", "objects"}, where, strict=strict)
                    t = float(rec["t"])
                    if t in gt.frames:
                        raise FormatError(f"{where}: duplicate gt timestamp {t}")
                    objs = []
                    for o in rec["objects"]:
                        _check_keys(o, {"id", "cls", "box", "velocity"}, where, strict=strict)
                        objs.append(GTObject(int(o["id"]), str(o["cls"]), _parse_box3d(o["box"], where), tuple(float(v) for v in o["velocity"])))
                    gt.frames[t] = objs
                    has_gt = True
                else:
                    raise FormatError(f"{where}: unknown record type {kind!r}")
            except FormatError:
                raise
            except (TypeError, ValueError, KeyError) as exc:
                raise FormatError(f"{where}: {exc}") from None
    if header is None:
        raise FormatError(f"{path}: no header record")
    return SceneFile(header["scene_id"], header_cams, frames, gt if has_gt else None, header.get("meta", {}))


def _parse_frame(rec: dict, where: str, header_cams, strict: bool) -> Frame:
    _check_keys(rec, {"record", "t", "kind", "dets3d", "dets2d", "cameras"}, where, {"record", "t", "kind", "dets3d", "dets2d"}, strict)
    t = float(rec["t"])
    kind = rec["kind"]
    if kind not in ("sync", "async"):
        raise FormatError(f"{where}: field 'kind' must be sync or async")
    if kind == "async" and rec["dets3d"]:
        raise FormatError(f"{where}: async frame carries 3D detections")
    d3 = []
    for d in rec["dets3d"]:
        _check_keys(d, {"box", "score", "cls"}, where, strict=strict)
        d3.append(Detection3D(_parse_box3d(d["box"], where), _score(d["score"], where), str(d["cls"]), t))
    d2 = []
    for d in rec["dets2d"]:
        _check_keys(d, {"box", "score", "cls", "camera"}, where, strict=strict)
        d2.append(Detection2D(_parse_box2d(d["box"], where), _score(d["score"], where), str(d["cls"]), str(d["camera"]), t))
    cams = [camera_from_dict(c) for c in rec["cameras"]] if "cameras" in rec else header_cams
    return Frame(t, kind, d3, d2, cams)


def load_scene(path, strict: bool = True) -> tuple[list[Frame], Optional[GroundTruth]]:
    scene = read_scene(path, strict)
    return scene.frames, scene.gt


# -- track dumps ----------------------------------------------------------------


def track_lines(snapshots: Sequence[TrackSnapshot]) -> list[str]:
    snaps = sorted(snapshots, key=lambda s: s.timestamp)
    header = {
        "record": "header",
        "format": TRACK_FORMAT,
        "version": FORMAT_VERSION,
        "timestamps": [float(s.timestamp) for s in snaps],
        "kinds": [s.kind for s in snaps],
    }
    lines = [_dump(header)]
    for s in snaps:
        for tr in sorted(s.tracks, key=lambda x: x.track_id):
            lines.append(
                _dump(
                    {
                        "record": "track",
                        "t": float(s.timestamp),
                        "id": int(tr.track_id),
                        "cls": tr.cls,
                        "box": _box3d(tr.box),
                        "velocity": [float(v) for v in tr.velocity],
                        "score": float(tr.score),
                        "status": tr.status,
                    }
                )
            )
    return lines


def save_tracks(snapshots: Sequence[TrackSnapshot], path):
    Path(path).write_text("\n".join(track_lines(snapshots)) + "\n", encoding="utf-8")


def load_tracks(path, strict: bool = True) -> list[TrackSnapshot]:
    header = None
    snaps: dict[float, TrackSnapshot] = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"line {n}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{where}: invalid JSON ({exc.msg})") from None
            try:
                if header is None:
                    _check_keys(rec, {"record", "format", "version", "timestamps", "kinds"}, where, strict=strict)
                    if rec["record"] != "header" or rec["format"] != TRACK_FORMAT or rec["version"] != FORMAT_VERSION:
                        raise FormatError(f"{where}: expected a {TRACK_FORMAT} v{FORMAT_VERSION} header")
                    header = rec
                    for t, k in zip(rec["timestamps"], rec["kinds"]):
                        snaps[float(t)] = TrackSnapshot(float(t), k, [])
                    continue
                _check_keys(rec, {"record", "t", "id", "cls", "box", "velocity", "score", "status"}, where, strict=strict)
                if rec["record"] != "track":
                    raise FormatError(f"{where}: unknown record type {rec['record']!r}")
                t = float(rec["t"])
                if t not in snaps:
                    raise FormatError(f"{where}: timestamp {t} not listed in header")
                snaps[t].tracks.append(
                    TrackState(
                        int(rec["id"]),
                        str(rec["cls"]),
                        _parse_box3d(rec["box"], where),
                        tuple(float(v) for v in rec["velocity"]),
                        _score(rec["score"], where),
                        str(rec["status"]),
                    )
                )
            except FormatError:
                raise
            except (TypeError, ValueError, KeyError) as exc:
                raise FormatError(f"{where}: {exc}") from None
    if header is None:
        raise FormatError(f"{path}: empty track file")
    return [snaps[t] for t in sorted(snaps)]
