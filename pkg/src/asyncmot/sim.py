"""Synthetic scenes with a 2 Hz LiDAR stream and a faster camera stream.

Ground truth is emitted at LiDAR keyframes. Camera frames that fall between
keyframes become async frames carrying 2D detections only. Camera extrinsics
handed to the tracker may be perturbed to emulate miscalibration, while the
2D detections are always rendered through the true rig.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .geometry import Box2D, Box3D, CameraModel, project_box
from .preprocess import Detection2D, Detection3D
from .tracker import Frame

CLASS_DIMS = {"car": (1.9, 4.6, 1.7), "pedestrian": (0.65, 0.7, 1.75)}


@dataclass
class ObjectSpec:
    cls: str
    x: float
    y: float
    heading: float = 0.0
    speed: float = 0.0
    motion: str = "cv"  # cv | turn | stop_and_go
    yaw_rate: float = 0.0
    go_time: float = 2.0
    stop_time: float = 1.0
    dims: Optional[tuple] = None
    spawn: float = 0.0
    despawn: float = math.inf

    def dimensions(self) -> tuple:
        return self.dims if self.dims is not None else CLASS_DIMS.get(self.cls, (1.0, 1.0, 1.0))

    def state(self, t: float) -> tuple[Box3D, tuple[float, float]]:
        """Box and BEV velocity at absolute time ``t``."""
        tau = t - self.spawn
        w, l, h = self.dimensions()
        z = 0.5 * h
        if self.motion == "turn" and self.yaw_rate != 0.0:
            om, v = self.yaw_rate, self.speed
            hd = self.heading + om * tau
            x = self.x + v / om * (math.sin(hd) - math.sin(self.heading))
            y = self.y - v / om * (math.cos(hd) - math.cos(self.heading))
            return Box3D(x, y, z, w, l, h, hd), (v * math.cos(hd), v * math.sin(hd))
        if self.motion == "stop_and_go":
            cycle = self.go_time + self.stop_time
            n, rem = divmod(tau, cycle)
            dist = self.speed * (n * self.go_time + min(rem, self.go_time))
            v = self.speed if rem < self.go_time else 0.0
        elif self.motion in ("cv", "turn"):
            dist, v = self.speed * tau, self.speed
        else:
            raise ValueError(f"unknown motion model {self.motion!r}")
        c, s = math.cos(self.heading), math.sin(self.heading)
        return Box3D(self.x + dist * c, self.y + dist * s, z, w, l, h, self.heading), (v * c, v * s)

    def alive(self, t: float) -> bool:
        return self.spawn <= t < self.despawn


def default_rig(n: int = 6, focal: float = 1260.0, width: int = 1600, height: int = 900) -> list[CameraModel]:
    """Ring of level cameras around the origin, 1.5 m high, evenly spaced in yaw."""
    return [
        CameraModel.looking(f"cam{i}", 2 * math.pi * i / n, (0.0, 0.0, 1.5), focal, width, height) for i in range(n)
    ]


@dataclass
class Window:
    """Time interval [start, end) during which something happens to one object."""

    obj: int
    start: float
    end: float
    value: float = 0.0

    def covers(self, obj: int, t: float) -> bool:
        return obj == self.obj and self.start <= t < self.end


@dataclass
class ScenarioConfig:
    duration: float = 10.0
    sync_rate: float = 2.0
    async_rate: float = 4.0
    objects: list = field(default_factory=list)
    cameras: Optional[list] = None
    # 3D detection noise
    pos_sigma: float = 0.0
    dim_sigma: float = 0.0
    heading_sigma: float = 0.0
    # 2D detection noise, pixels per corner coordinate
    pixel_sigma: float = 0.0
    # detection scores: clipped Gaussian around per-stream means
    score_mean_3d: float = 0.8
    score_mean_2d: float = 0.8
    score_mean_2d_async: float = 0.7
    score_sigma: float = 0.0
    dropout_3d: float = 0.0
    dropout_2d: float = 0.0
    lidar_dropouts: list = field(default_factory=list)  # Window, LiDAR misses the object
    score_dips: list = field(default_factory=list)  # Window, 3D score forced to .value
    fp_rate_3d: float = 0.0
    fp_rate_2d: float = 0.0
    fp_region: tuple = (5.0, 40.0)
    fp_score_band: tuple = (0.1, 0.4)
    max_range: float = 60.0
    min_box_area: float = 64.0
    extrinsic_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (self.sync_rate > 0 and self.async_rate > 0):
            raise ValueError("sensor rates must be positive")
        if self.async_rate < self.sync_rate:
            raise ValueError("camera rate must not be below the LiDAR rate")
        for name in ("dropout_3d", "dropout_2d"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")
        if self.extrinsic_sigma < 0:
            raise ValueError("extrinsic_sigma must be non-negative")


@dataclass(frozen=True)
class GTObject:
    obj_id: int
    cls: str
    box: Box3D
    velocity: tuple


@dataclass
class GroundTruth:
    """Annotations per keyframe timestamp."""

    frames: dict = field(default_factory=dict)

    @property
    def timestamps(self) -> list[float]:
        return sorted(self.frames)

    def count(self) -> int:
        return sum(len(v) for v in self.frames.values())


def perturb_extrinsics(cams: Sequence[CameraModel], sigma: float, seed: int) -> list[CameraModel]:
    """Add zero-mean Gaussian noise to each camera's orientation and position.

    Orientation noise is an axis-angle vector in the camera frame (radians),
    position noise is in meters. The rotation is re-orthonormalised.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return list(cams)
    rng = np.random.default_rng(seed)
    out = []
    for cam in cams:
        drot = rng.normal(0.0, sigma, 3)
        dpos = rng.normal(0.0, sigma, 3)
        R = Rotation.from_rotvec(drot).as_matrix() @ cam.rotation
        u, _, vt = np.linalg.svd(R)
        R = u @ vt
        center = cam.center + dpos
        out.append(CameraModel(cam.camera_id, cam.intrinsic, R, -R @ center, cam.width, cam.height))
    return out


def frame_times(cfg: ScenarioConfig) -> tuple[list[float], list[float]]:
    """Keyframe timestamps and the camera-only timestamps between them."""
    n_sync = int(round(cfg.duration * cfg.sync_rate))
    sync = [k / cfg.sync_rate for k in range(n_sync)]
    n_cam = int(round(cfg.duration * cfg.async_rate))
    tol = 1e-9
    asyn = []
    for k in range(n_cam):
        t = k / cfg.async_rate
        if all(abs(t - s) > tol for s in sync):
            asyn.append(t)
    return sync, asyn


def _score(rng, mean: float, sigma: float) -> float:
    return float(np.clip(rng.normal(mean, sigma) if sigma > 0 else mean, 0.05, 1.0))


def _noisy_box(rng, box: Box3D, cfg: ScenarioConfig) -> Box3D:
    if cfg.pos_sigma == 0 and cfg.dim_sigma == 0 and cfg.heading_sigma == 0:
        return box
    dp = rng.normal(0.0, cfg.pos_sigma, 3) if cfg.pos_sigma > 0 else np.zeros(3)
    dd = rng.normal(0.0, cfg.dim_sigma, 3) if cfg.dim_sigma > 0 else np.zeros(3)
    dh = rng.normal(0.0, cfg.heading_sigma) if cfg.heading_sigma > 0 else 0.0
    return Box3D(
        box.x + dp[0],
        box.y + dp[1],
        box.z + dp[2],
        max(box.w + dd[0], 0.1),
        max(box.l + dd[1], 0.1),
        max(box.h + dd[2], 0.1),
        box.theta + dh,
    )


def _noisy_rect(rng, rect: Box2D, sigma: float) -> Box2D:
    if sigma == 0:
        return rect
    x1, y1, x2, y2 = rect.to_array() + rng.normal(0.0, sigma, 4)
    return Box2D(min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2))


def _camera_detections(rng, t, visible, cams, cfg: ScenarioConfig, score_mean) -> list[Detection2D]:
    dets = []
    for _, cls, box in visible:
        for cam in cams:
            rect = project_box(box, cam)
            if rect is None or rect.area < cfg.min_box_area:
                continue
            if rng.random() < cfg.dropout_2d:
                continue
            dets.append(Detection2D(_noisy_rect(rng, rect, cfg.pixel_sigma), _score(rng, score_mean, cfg.score_sigma), cls, cam.camera_id, t))
    for _ in range(rng.poisson(cfg.fp_rate_2d) if cfg.fp_rate_2d > 0 else 0):
        cam = cams[int(rng.integers(len(cams)))]
        bw, bh = rng.uniform(20, 200), rng.uniform(20, 200)
        x1, y1 = rng.uniform(0, cam.width - bw), rng.uniform(0, cam.height - bh)
        cls = str(rng.choice(sorted(CLASS_DIMS)))
        dets.append(Detection2D(Box2D(x1, y1, x1 + bw, y1 + bh), float(rng.uniform(*cfg.fp_score_band)), cls, cam.camera_id, t))
    return dets


def generate(cfg: ScenarioConfig) -> tuple[list[Frame], GroundTruth]:
    """Render frames and keyframe ground truth. Deterministic per ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    true_cams = list(cfg.cameras) if cfg.cameras is not None else default_rig()
    seen_cams = perturb_extrinsics(true_cams, cfg.extrinsic_sigma, cfg.seed + 7919)
    sync_t, async_t = frame_times(cfg)
    timeline = sorted([(t, "sync") for t in sync_t] + [(t, "async") for t in async_t])

    gt = GroundTruth()
    frames = []
    for t, kind in timeline:
        visible = []
        for i, spec in enumerate(cfg.objects):
            if not spec.alive(t):
                continue
            box, vel = spec.state(t)
            if math.hypot(box.x, box.y) > cfg.max_range:
                continue
            visible.append((i, spec.cls, box))
            if kind == "sync":
                gt.frames.setdefault(t, []).append(GTObject(i, spec.cls, box, vel))
        if kind == "sync":
            gt.frames.setdefault(t, [])
            d3 = []
            for i, cls, box in visible:
                if any(w.covers(i, t) for w in cfg.lidar_dropouts) or rng.random() < cfg.dropout_3d:
                    continue
                score = _score(rng, cfg.score_mean_3d, cfg.score_sigma)
                for dip in cfg.score_dips:
                    if dip.covers(i, t):
                        score = dip.value
                d3.append(Detection3D(_noisy_box(rng, box, cfg), score, cls, t))
            for _ in range(rng.poisson(cfg.fp_rate_3d) if cfg.fp_rate_3d > 0 else 0):
                cls = str(rng.choice(sorted(CLASS_DIMS)))
                r, a = rng.uniform(*cfg.fp_region), rng.uniform(-math.pi, math.pi)
                w, l, h = CLASS_DIMS[cls]
                fp = Box3D(r * math.cos(a), r * math.sin(a), h / 2, w, l, h, rng.uniform(-math.pi, math.pi))
                d3.append(Detection3D(fp, float(rng.uniform(*cfg.fp_score_band)), cls, t))
            d2 = _camera_detections(rng, t, visible, true_cams, cfg, cfg.score_mean_2d)
            frames.append(Frame(t, "sync", d3, d2, seen_cams))
        else:
            d2 = _camera_detections(rng, t, visible, true_cams, cfg, cfg.score_mean_2d_async)
            frames.append(Frame(t, "async", [], d2, seen_cams))
    return frames, gt


# -- scenario builders ---------------------------------------------------------


def smoke_scenario(seed: int = 0, duration: float = 10.0) -> ScenarioConfig:
    """Three well separated objects, no noise, no dropouts, no clutter."""
    objects = [
        ObjectSpec("car", 12.0, -6.0, heading=math.pi / 2, speed=1.5),
        ObjectSpec("car", -15.0, 10.0, heading=0.0, speed=2.0),
        ObjectSpec("pedestrian", 4.0, 9.0, heading=math.pi, speed=1.0),
    ]
    return ScenarioConfig(duration=duration, objects=objects, seed=seed)


def random_objects(rng, n_cars: int, n_peds: int, duration: float) -> list[ObjectSpec]:
    objs = []
    for k in range(n_cars + n_peds):
        cls = "car" if k < n_cars else "pedestrian"
        r, a = rng.uniform(10.0, 28.0), rng.uniform(-math.pi, math.pi)
        x, y = r * math.cos(a), r * math.sin(a)
        heading = rng.uniform(-math.pi, math.pi)
        if cls == "car":
            speed = rng.uniform(2.0, 6.0)
            motion = str(rng.choice(["cv", "turn", "stop_and_go"]))
            yaw_rate = float(rng.uniform(0.1, 0.25) * rng.choice([-1, 1])) if motion == "turn" else 0.0
        else:
            speed = rng.uniform(0.8, 1.5)
            motion, yaw_rate = "cv", 0.0
        objs.append(ObjectSpec(cls, x, y, heading, speed, motion, yaw_rate))
    return objs


def dropout_scenario(seed: int, extrinsic_sigma: float = 0.0, duration: float = 10.0) -> ScenarioConfig:
    """Noisy scene with LiDAR dropouts at keyframes and occlusion-like 3D score dips."""
    rng = np.random.default_rng(10_000 + seed)
    objects = random_objects(rng, 4, 2, duration)
    n_key = int(duration * 2)
    dropouts, dips = [], []
    # scenes too short to hold a window get none
    for i in range(len(objects) if n_key > 6 else 0):
        k0 = int(rng.integers(2, n_key - 4))
        span = int(rng.integers(2, 4))
        dropouts.append(Window(i, k0 / 2.0, (k0 + span) / 2.0))
        k1 = int(rng.integers(2, n_key - 3))
        dips.append(Window(i, k1 / 2.0, (k1 + 2) / 2.0, value=float(rng.uniform(0.1, 0.25))))
    return ScenarioConfig(
        duration=duration,
        objects=objects,
        pos_sigma=0.15,
        dim_sigma=0.05,
        heading_sigma=0.03,
        pixel_sigma=3.0,
        score_sigma=0.1,
        dropout_3d=0.05,
        dropout_2d=0.05,
        lidar_dropouts=dropouts,
        score_dips=dips,
        fp_rate_3d=0.5,
        fp_rate_2d=0.5,
        extrinsic_sigma=extrinsic_sigma,
        seed=seed,
    )


PRESETS = {"smoke": smoke_scenario, "dropout": dropout_scenario}
_OBJECT_KEYS = {f.name for f in fields(ObjectSpec)}
_WINDOW_KEYS = {"obj", "start", "end", "value"}


def _window(d: dict, what: str) -> Window:
    extra = set(d) - _WINDOW_KEYS
    if extra:
        raise ValueError(f"{what}: unknown field {sorted(extra)[0]!r}")
    return Window(int(d["obj"]), float(d["start"]), float(d["end"]), float(d.get("value", 0.0)))


def scenario_from_dict(doc: dict, seed: Optional[int] = None) -> ScenarioConfig:
    """Build a scenario from a mapping.

    ``preset`` (smoke or dropout) seeds the defaults; any other key overrides
    a ScenarioConfig field. ``objects`` entries follow ObjectSpec and window
    lists take ``{obj, start, end, value}`` mappings.
    """
    doc = dict(doc or {})
    if seed is None:
        seed = int(doc.get("seed", 0))
    doc.pop("seed", None)
    preset = doc.pop("preset", None)
    if preset is None:
        base = ScenarioConfig(seed=seed)
    elif preset in PRESETS:
        base = PRESETS[preset](seed)
    else:
        raise ValueError(f"preset: unknown scenario preset {preset!r}")
    known = {f.name for f in fields(ScenarioConfig)}
    updates = {}
    for key, value in doc.items():
        if key not in known:
            raise ValueError(f"unknown scenario key {key!r}")
        if key == "objects":
            objs = []
            for k, o in enumerate(value):
                extra = set(o) - _OBJECT_KEYS
                if extra:
                    raise ValueError(f"objects[{k}]: unknown field {sorted(extra)[0]!r}")
                o = dict(o)
                if o.get("dims") is not None:
                    o["dims"] = tuple(float(v) for v in o["dims"])
                objs.append(ObjectSpec(**o))
            value = objs
        elif key in ("lidar_dropouts", "score_dips"):
            value = [_window(w, f"{key}[{k}]") for k, w in enumerate(value)]
        elif key == "cameras":
            raise ValueError("cameras: custom rigs are not supported in scenario files")
        elif key in ("fp_region", "fp_score_band"):
            value = tuple(float(v) for v in value)
        updates[key] = value
    return replace(base, seed=seed, **updates)
