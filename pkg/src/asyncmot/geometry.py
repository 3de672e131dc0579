"""Box types, pinhole projection and the overlap metrics used for association.

Conventions
-----------
* Global frame: x forward, y left, z up (meters).
* Camera frame: x right, y down, z forward. Extrinsics map global -> camera,
  ``p_cam = R @ p_global + t``.
* A box's length ``l`` runs along its heading, width ``w`` across it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Map an angle to the half-open interval (-pi, pi]."""
    if -math.pi < theta <= math.pi:
        return theta
    return math.pi - ((math.pi - theta) % TWO_PI)


@dataclass(frozen=True)
class Box3D:
    x: float
    y: float
    z: float
    w: float
    l: float
    h: float
    theta: float = 0.0

    def __post_init__(self):
        if not (self.w > 0 and self.l > 0 and self.h > 0):
            raise ValueError(f"box dimensions must be positive, got w={self.w} l={self.l} h={self.h}")
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> "Box3D":
        return cls(*(float(v) for v in arr[:7]))

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.w, self.l, self.h, self.theta])

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def footprint(self) -> list[tuple[float, float]]:
        """BEV rectangle corners, counter-clockwise."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        hl, hw = 0.5 * self.l, 0.5 * self.w
        pts = []
        for dx, dy in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)):
            pts.append((self.x + c * dx - s * dy, self.y + s * dx + c * dy))
        return pts

    def corners(self) -> np.ndarray:
        """The 8 box corners as an (8, 3) array."""
        fp = np.array(self.footprint())
        lo = np.column_stack([fp, np.full(4, self.z - 0.5 * self.h)])
        hi = np.column_stack([fp, np.full(4, self.z + 0.5 * self.h)])
        return np.vstack([lo, hi])


@dataclass(frozen=True)
class Box2D:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"inverted box ({self.x1}, {self.y1}, {self.x2}, {self.y2})")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2)

    def to_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2])


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole camera with global->camera extrinsics.

    ``rotation`` and ``translation`` map a global point into the camera frame.
    """

    camera_id: str
    intrinsic: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    width: int
    height: int
    _center: np.ndarray = field(init=False, repr=False)
    _proj: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        K = np.asarray(self.intrinsic, dtype=float).reshape(3, 3)
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not (K[0, 0] > 0 and K[1, 1] > 0):
            raise ValueError(f"camera {self.camera_id}: focal lengths must be positive")
        if np.linalg.norm(R.T @ R - np.eye(3)) >= 1e-9:
            raise ValueError(f"camera {self.camera_id}: rotation is not orthonormal")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"camera {self.camera_id}: image size must be positive")
        for arr in (K, R, t):
            arr.setflags(write=False)
        object.__setattr__(self, "intrinsic", K)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "_center", -R.T @ t)
        # 3x4 projection matrix K [R | t], transposed for row-vector points.
        object.__setattr__(self, "_proj", np.vstack([(K @ R).T, K @ t]))

    @classmethod
    def looking(
        cls,
        camera_id: str,
        yaw: float,
        position: Sequence[float] = (0.0, 0.0, 1.5),
        focal: float = 1260.0,
        width: int = 1600,
        height: int = 900,
    ) -> "CameraModel":
        """Level camera at ``position`` whose optical axis points along ``yaw``."""
        c, s = math.cos(yaw), math.sin(yaw)
        R = np.array([[s, -c, 0.0], [0.0, 0.0, -1.0], [c, s, 0.0]])
        K = np.array([[focal, 0.0, width / 2.0], [0.0, focal, height / 2.0], [0.0, 0.0, 1.0]])
        t = -R @ np.asarray(position, dtype=float)
        return cls(camera_id, K, R, t, width, height)

    @property
    def center(self) -> np.ndarray:
        """Camera optical center in the global frame."""
        return self._center

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def project_points(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pixel coordinates and camera depths of global points, shape (N, 2) and (N,)."""
        cam = self.to_camera(np.atleast_2d(points))
        depth = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            uvw = cam @ self.intrinsic.T
            uv = uvw[:, :2] / uvw[:, 2:3]
        return uv, depth

    def pixel_ray(self, u: float, v: float) -> np.ndarray:
        """Unit direction (global frame) of the ray through pixel (u, v)."""
        d_cam = np.linalg.solve(self.intrinsic, np.array([u, v, 1.0]))
        d = self.rotation.T @ d_cam
        return d / np.linalg.norm(d)

    def __eq__(self, other):
        if not isinstance(other, CameraModel):
            return NotImplemented
        return (
            self.camera_id == other.camera_id
            and self.width == other.width
            and self.height == other.height
            and np.array_equal(self.intrinsic, other.intrinsic)
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    __hash__ = None


def project_box_unclipped(box: Box3D, cam: CameraModel) -> Optional[Box2D]:
    """Pixel hull of the corners in front of the camera, without image clipping."""
    uv, depth = cam.project_points(box.corners())
    front = depth > 0
    if not front.any():
        return None
    uv = uv[front]
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    return Box2D(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def project_box(box: Box3D, cam: CameraModel) -> Optional[Box2D]:
    """Axis-aligned image rectangle covering the projected box, clipped to the image.

    Corners behind the camera plane are dropped before taking the hull.
    Returns None when nothing is in front of the camera or the clipped
    rectangle has zero area.
    """
    raw = project_box_unclipped(box, cam)
    if raw is None:
        return None
    x1 = min(max(raw.x1, 0.0), cam.width)
    x2 = min(max(raw.x2, 0.0), cam.width)
    y1 = min(max(raw.y1, 0.0), cam.height)
    y2 = min(max(raw.y2, 0.0), cam.height)
    if x2 <= x1 or y2 <= y1:
        return None
    return Box2D(x1, y1, x2, y2)


# Unit corner offsets (along length, across width, vertical), matching Box3D.corners.
_UNIT = np.array(
    [
        [0.5, 0.5, -0.5], [-0.5, 0.5, -0.5], [-0.5, -0.5, -0.5], [0.5, -0.5, -0.5],
        [0.5, 0.5, 0.5], [-0.5, 0.5, 0.5], [-0.5, -0.5, 0.5], [0.5, -0.5, 0.5],
    ]
)


def corners_batch(states: np.ndarray) -> np.ndarray:
    """Corners of N boxes given as (N, 7) rows ``x, y, z, w, l, h, theta``; shape (N, 8, 3)."""
    s = np.atleast_2d(states)
    c, sn = np.cos(s[:, 6:7]), np.sin(s[:, 6:7])
    dx = _UNIT[:, 0] * s[:, 4:5]
    dy = _UNIT[:, 1] * s[:, 3:4]
    out = np.empty((len(s), 8, 3))
    out[:, :, 0] = s[:, 0:1] + c * dx - sn * dy
    out[:, :, 1] = s[:, 1:2] + sn * dx + c * dy
    out[:, :, 2] = s[:, 2:3] + _UNIT[:, 2] * s[:, 5:6]
    return out


def project_states(states: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Vectorised :func:`project_box` over (N, 7) states.

    Returns an (N, 4) array of clipped rectangles with NaN rows where the
    projection is absent.
    """
    pts = corners_batch(states)
    uvw = pts @ cam._proj[:3] + cam._proj[3]
    depth = uvw[:, :, 2]
    front = depth > 0
    rects = np.empty((len(pts), 4))
    if front.all():
        uv = uvw[:, :, :2] / depth[:, :, None]
        rects[:, :2] = uv.min(axis=1)
        rects[:, 2:] = uv.max(axis=1)
    else:
        safe = np.where(front, depth, 1.0)[:, :, None]
        uv = uvw[:, :, :2] / safe
        rects[:, :2] = np.where(front[:, :, None], uv, np.inf).min(axis=1)
        rects[:, 2:] = np.where(front[:, :, None], uv, -np.inf).max(axis=1)
    lim = np.array([cam.width, cam.height, cam.width, cam.height], dtype=float)
    np.clip(rects, 0.0, lim, out=rects)
    bad = (rects[:, 2] <= rects[:, 0]) | (rects[:, 3] <= rects[:, 1])
    rects[bad] = np.nan
    return rects


def _overlap(rects: np.ndarray, t: np.ndarray):
    iw = np.minimum(rects[:, 2], t[2]) - np.maximum(rects[:, 0], t[0])
    ih = np.minimum(rects[:, 3], t[3]) - np.maximum(rects[:, 1], t[1])
    inter = np.maximum(iw, 0.0) * np.maximum(ih, 0.0)
    area = (rects[:, 2] - rects[:, 0]) * (rects[:, 3] - rects[:, 1])
    return inter, area


def iou_rects(rects: np.ndarray, target: Box2D) -> np.ndarray:
    """IoU of (N, 4) rectangles against one box; NaN rows score 0."""
    inter, area = _overlap(rects, target.to_array())
    iou = inter / (area + target.area - inter)
    iou[np.isnan(iou)] = 0.0
    return iou


def giou_rects(rects: np.ndarray, target: Box2D) -> np.ndarray:
    """GIoU of (N, 4) rectangles against one box; NaN rows score -1."""
    t = target.to_array()
    inter, area = _overlap(rects, t)
    union = area + target.area - inter
    hull = (np.maximum(rects[:, 2], t[2]) - np.minimum(rects[:, 0], t[0])) * (
        np.maximum(rects[:, 3], t[3]) - np.minimum(rects[:, 1], t[1])
    )
    out = inter / union - (hull - union) / hull
    out[np.isnan(out)] = -1.0
    return out


def _intersection_area(a: Box2D, b: Box2D) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou_2d(a: Box2D, b: Box2D) -> float:
    inter = _intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def giou_2d(a: Box2D, b: Box2D) -> float:
    inter = _intersection_area(a, b)
    union = a.area + b.area - inter
    iou = inter / union if union > 0 else 0.0
    hull = (max(a.x2, b.x2) - min(a.x1, b.x1)) * (max(a.y2, b.y2) - min(a.y1, b.y1))
    if hull <= 0:
        return iou
    return iou - (hull - union) / hull


# -- BEV polygons ------------------------------------------------------------


def polygon_area(poly: Sequence[tuple[float, float]]) -> float:
    """Signed shoelace area; positive for counter-clockwise vertex order."""
    n = len(poly)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * acc


def clip_convex(subject: Sequence[tuple[float, float]], clip: Sequence[tuple[float, float]]):
    """Sutherland-Hodgman clip of ``subject`` by the CCW convex polygon ``clip``."""
    out = list(subject)
    n = len(clip)
    for i in range(n):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        inp, out = out, []
        m = len(inp)
        for j in range(m):
            px, py = inp[j - 1]
            qx, qy = inp[j]
            sp = ex * (py - ay) - ey * (px - ax)
            sq = ex * (qy - ay) - ey * (qx - ax)
            if sq >= 0:
                if sp < 0:
                    r = sp / (sp - sq)
                    out.append((px + r * (qx - px), py + r * (qy - py)))
                out.append((qx, qy))
            elif sp >= 0:
                r = sp / (sp - sq)
                out.append((px + r * (qx - px), py + r * (qy - py)))
    return out


def convex_hull(points: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Andrew's monotone chain; returns CCW hull vertices."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _bev_overlap(a: Box3D, b: Box3D):
    pa, pb = a.footprint(), b.footprint()
    inter = max(polygon_area(clip_convex(pa, pb)), 0.0)
    union = a.w * a.l + b.w * b.l - inter
    return pa, pb, inter, union


def bev_iou(a: Box3D, b: Box3D) -> float:
    """IoU of the birds-eye-view footprints."""
    _, _, inter, union = _bev_overlap(a, b)
    return inter / union if union > 0 else 0.0


def bev_giou_3d(a: Box3D, b: Box3D) -> float:
    """Generalized IoU of BEV footprints, enclosed by their joint convex hull."""
    pa, pb, inter, union = _bev_overlap(a, b)
    iou = inter / union if union > 0 else 0.0
    hull = polygon_area(convex_hull(pa + pb))
    if hull <= 0:
        return iou
    return iou - (hull - union) / hull


def best_camera_match(box: Box3D, cams: Sequence[CameraModel]) -> Optional[tuple[str, Box2D]]:
    """Projection with the largest pixel area over all cameras, first camera on ties."""
    best = None
    best_area = 0.0
    for cam in cams:
        rect = project_box(box, cam)
        if rect is not None and rect.area > best_area:
            best, best_area = (cam.camera_id, rect), rect.area
    return best


def bev_distance(a: Box3D, b: Box3D) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)
