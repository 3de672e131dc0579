"""Per-frame detection hygiene, LiDAR/camera pairing and box alignment."""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy.optimize import least_squares

from .assignment import solve_assignment
from .geometry import (
    Box2D,
    Box3D,
    CameraModel,
    best_camera_match,
    bev_iou,
    giou_rects,
    iou_2d,
    iou_rects,
    project_states,
)

log = logging.getLogger(__name__)


def _check_score(score: float):
    if not (0.0 <= score <= 1.0):
        raise ValueError(f"score must lie in [0, 1], got {score}")


@dataclass(frozen=True)
class Detection3D:
    box: Box3D
    score: float
    cls: str
    timestamp: float = 0.0

    def __post_init__(self):
        _check_score(self.score)


@dataclass(frozen=True)
class Detection2D:
    box: Box2D
    score: float
    cls: str
    camera_id: str
    timestamp: float = 0.0

    def __post_init__(self):
        _check_score(self.score)


@dataclass(frozen=True)
class MixDetection:
    """A 3D detection paired with a 2D detection of the same object."""

    det3d: Detection3D
    det2d: Detection2D
    camera_id: str
    iou: float

    def __post_init__(self):
        if self.det3d.cls != self.det2d.cls:
            raise ValueError("mix members must share a class")
        if not self.iou > 0:
            raise ValueError("mix pair needs positive overlap")

    @property
    def cls(self) -> str:
        return self.det3d.cls

    @property
    def box(self) -> Box3D:
        return self.det3d.box


@dataclass
class PreprocessOutput:
    kind: str
    mix: list[MixDetection] = field(default_factory=list)
    pure3d: list[Detection3D] = field(default_factory=list)
    pure2d: list[Detection2D] = field(default_factory=list)
    single2d: list[Detection2D] = field(default_factory=list)


Thresholds = Union[float, Mapping[str, float]]


def _lookup(th: Thresholds, cls: str, default: float) -> float:
    if isinstance(th, Mapping):
        return float(th.get(cls, default))
    return float(th)


def score_filter(dets: Sequence[Detection3D], thresholds: Thresholds, default: float = 0.0) -> list[Detection3D]:
    """Keep detections whose score reaches their class threshold.

    ``thresholds`` is either a single value or a per-class mapping; classes
    missing from the mapping fall back to ``default``.
    """
    return [d for d in dets if d.score >= _lookup(thresholds, d.cls, default)]


def nms_3d(dets: Sequence[Detection3D], iou_thresh: Thresholds, default: float = 0.08) -> list[Detection3D]:
    """Greedy per-class NMS on BEV IoU. Output keeps the input order."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    kept: list[int] = []
    for i in order:
        d = dets[i]
        th = _lookup(iou_thresh, d.cls, default)
        if all(dets[k].cls != d.cls or bev_iou(dets[k].box, d.box) < th for k in kept):
            kept.append(i)
    return [dets[i] for i in sorted(kept)]


def match_3d_2d(
    d3: Sequence[Detection3D],
    d2: Sequence[Detection2D],
    cams: Sequence[CameraModel],
    iou_gate: float = 0.3,
) -> tuple[list[MixDetection], list[Detection3D], list[Detection2D]]:
    """Pair 3D and 2D detections by projected IoU.

    Each 3D detection is projected into the camera where it appears largest;
    assignment then runs per (camera, class). Pairs need IoU > ``iou_gate``.
    """
    groups: dict[tuple[str, str], list[tuple[int, Box2D]]] = {}
    for i, det in enumerate(d3):
        hit = best_camera_match(det.box, cams)
        if hit is not None:
            groups.setdefault((hit[0], det.cls), []).append((i, hit[1]))

    paired3: dict[int, MixDetection] = {}
    used2: set[int] = set()
    for (cam_id, cls), members in groups.items():
        cands = [j for j, det in enumerate(d2) if det.camera_id == cam_id and det.cls == cls]
        if not cands:
            continue
        ious = np.array([[iou_2d(rect, d2[j].box) for j in cands] for _, rect in members])
        res = solve_assignment(1.0 - ious, gate=1.0 - iou_gate)
        for r, c in res.pairs:
            if ious[r, c] > iou_gate:
                i, j = members[r][0], cands[c]
                paired3[i] = MixDetection(d3[i], d2[j], cam_id, float(ious[r, c]))
                used2.add(j)

    mix = [paired3[i] for i in sorted(paired3)]
    pure3d = [det for i, det in enumerate(d3) if i not in paired3]
    pure2d = [det for j, det in enumerate(d2) if j not in used2]
    return mix, pure3d, pure2d


# -- geometry-aware alignment -------------------------------------------------

ALIGN_METRICS = ("iou", "giou", "euclid")

# Forward-difference steps: meters for position/size, radians for heading.
FD_STEPS = np.array([1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3])
# Step tolerance on the offsets; sub-0.1 mm moves do not change the projection.
XTOL = 1e-4


def alignment_losses(states: np.ndarray, target: Box2D, cam: CameraModel, metric: str = "iou") -> np.ndarray:
    """Vectorised :func:`alignment_loss` over (N, 7) box states."""
    rects = project_states(states, cam)
    if metric == "iou":
        return 1.0 - iou_rects(rects, target)
    if metric == "giou":
        return 1.0 - giou_rects(rects, target)
    if metric == "euclid":
        diag = math.hypot(cam.width, cam.height)
        d = np.linalg.norm(rects - target.to_array(), axis=1) / diag
        return np.where(np.isnan(d), 1.0, d)
    raise ValueError(f"unknown alignment metric {metric!r}")


def alignment_loss(box: Box3D, target: Box2D, cam: CameraModel, metric: str = "iou") -> float:
    """Discrepancy between the projection of ``box`` and ``target``.

    ``iou`` gives 1 - IoU in [0, 1]; ``giou`` gives 1 - GIoU in [0, 2];
    ``euclid`` is the corner-vector distance normalised by the image diagonal
    (1 when the box does not project).
    """
    return float(alignment_losses(box.to_array()[None, :], target, cam, metric)[0])


@dataclass(frozen=True)
class AlignOutcome:
    box: Box3D
    initial_loss: float
    final_loss: float
    improved: bool
    nfev: int = 0


def align_box(
    box: Box3D,
    target: Box2D,
    cam: CameraModel,
    metric: str = "iou",
    dim_min: Optional[Sequence[float]] = None,
    dim_max: Optional[Sequence[float]] = None,
    max_iter: int = 50,
    tol: float = 1e-6,
) -> AlignOutcome:
    """Refine all seven box parameters so the projection fits ``target``.

    Trust-region reflective least squares on the scalar residual, with a
    forward-difference Jacobian. Never returns a box with a larger loss than
    the input. Results are memoised, since the same frame is often tracked
    under several configurations.
    """
    key = (
        box,
        target,
        cam.camera_id,
        cam._proj.tobytes(),
        cam.width,
        cam.height,
        metric,
        None if dim_min is None else tuple(dim_min),
        None if dim_max is None else tuple(dim_max),
        max_iter,
        tol,
    )
    hit = _ALIGN_CACHE.get(key)
    if hit is not None:
        _ALIGN_CACHE.move_to_end(key)
        return hit
    out = _align_box(box, target, cam, metric, dim_min, dim_max, max_iter, tol)
    _ALIGN_CACHE[key] = out
    if len(_ALIGN_CACHE) > ALIGN_CACHE_SIZE:
        _ALIGN_CACHE.popitem(last=False)
    return out


ALIGN_CACHE_SIZE = 16384
_ALIGN_CACHE: OrderedDict = OrderedDict()


def _align_box(box, target, cam, metric, dim_min, dim_max, max_iter, tol) -> AlignOutcome:
    x0 = box.to_array()
    loss0 = alignment_loss(box, target, cam, metric)
    if loss0 <= 0.0 or (metric == "iou" and loss0 >= 1.0):
        return AlignOutcome(box, loss0, loss0, False)

    lo = np.full(7, -np.inf)
    hi = np.full(7, np.inf)
    dmin = np.maximum(np.asarray(dim_min if dim_min is not None else (0.1, 0.1, 0.1), float), 0.1)
    dmax = np.asarray(dim_max if dim_max is not None else (np.inf,) * 3, float)
    # Widen bounds to admit the initial box, which must be strictly feasible.
    dmin = np.minimum(dmin, x0[3:6] * (1 - 1e-9))
    dmax = np.maximum(dmax, x0[3:6] * (1 + 1e-9))
    lo[3:6] = dmin - x0[3:6]
    hi[3:6] = dmax - x0[3:6]

    def state(u):
        s = x0 + u
        return Box3D(s[0], s[1], s[2], s[3], s[4], s[5], s[6])

    def residual(u):
        return alignment_losses((x0 + u)[None, :], target, cam, metric)

    def jacobian(u):
        # All seven perturbed states go through one batched projection.
        h = np.where(u + FD_STEPS > hi, -FD_STEPS, FD_STEPS)
        states = np.tile(x0 + u, (8, 1))
        states[1:] += np.diag(h)
        f = alignment_losses(states, target, cam, metric)
        return ((f[1:] - f[0]) / h)[None, :]

    try:
        sol = least_squares(
            residual,
            np.zeros(7),
            jac=jacobian,
            bounds=(lo, hi),
            method="trf",
            ftol=tol,
            xtol=XTOL,
            gtol=1e-10,
            max_nfev=max_iter,
        )
        candidate = state(sol.x)
        nfev = int(sol.nfev)
    except (ValueError, np.linalg.LinAlgError) as exc:
        log.debug("alignment failed: %s", exc)
        return AlignOutcome(box, loss0, loss0, False)

    loss1 = alignment_loss(candidate, target, cam, metric)
    if loss1 < loss0:
        return AlignOutcome(candidate, loss0, loss1, True, nfev)
    log.debug("alignment did not improve (%.6f -> %.6f)", loss0, loss1)
    return AlignOutcome(box, loss0, loss0, False, nfev)


def gaam_align(
    mix: MixDetection,
    cam: CameraModel,
    metric: str = "iou",
    dim_min: Optional[Sequence[float]] = None,
    dim_max: Optional[Sequence[float]] = None,
    max_iter: int = 50,
    tol: float = 1e-6,
    max_shift: float = math.inf,
) -> Detection3D:
    """Return the mix pair's 3D detection with its box aligned to the 2D member.

    An alignment that moves the box center more than ``max_shift`` meters in
    BEV is rejected: the pair disagrees by more than a refinement can explain.
    """
    out = align_box(mix.det3d.box, mix.det2d.box, cam, metric, dim_min, dim_max, max_iter, tol)
    if not out.improved:
        return mix.det3d
    if math.hypot(out.box.x - mix.det3d.box.x, out.box.y - mix.det3d.box.y) > max_shift:
        return mix.det3d
    return replace(mix.det3d, box=out.box)


def preprocess_frame(
    kind: str,
    dets3d: Sequence[Detection3D],
    dets2d: Sequence[Detection2D],
    cams: Sequence[CameraModel],
    params_for,
    align: bool = True,
) -> PreprocessOutput:
    """Run pairing, filtering and alignment for one frame.

    ``params_for(cls)`` returns the per-class parameter set. Score filter and
    NMS apply to unpaired 3D detections only: a camera-confirmed detection
    survives a low LiDAR score.
    """
    if kind == "async":
        return PreprocessOutput(kind, single2d=list(dets2d))

    default = params_for(None)
    mix, pure3d, pure2d = match_3d_2d(dets3d, dets2d, cams, default.match_iou)
    pure3d = [d for d in pure3d if d.score >= params_for(d.cls).score_threshold]
    pure3d = nms_3d(pure3d, {d.cls: params_for(d.cls).nms_iou for d in pure3d}, default.nms_iou)

    if align and mix:
        cam_by_id = {c.camera_id: c for c in cams}
        aligned = []
        for m in mix:
            p = params_for(m.cls)
            det = gaam_align(
                m,
                cam_by_id[m.camera_id],
                p.align_metric,
                p.dim_min,
                p.dim_max,
                p.align_max_iter,
                p.align_tol,
                p.align_max_shift,
            )
            aligned.append(replace(m, det3d=det))
        mix = aligned
    return PreprocessOutput(kind, mix=mix, pure3d=pure3d, pure2d=pure2d)
