"""Track state estimation: Kalman motion model and confidence lifecycle.

State layout (9 dims): x, y, z, w, l, h, theta, vx, vy. BEV position follows
constant velocity; z, size and heading follow random walks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .config import Params
from .geometry import Box2D, Box3D, CameraModel, project_box, wrap_angle
from .preprocess import Detection3D, MixDetection

STATE_DIM = 9
HEADING = 6


class NumericalFault(ArithmeticError):
    """Covariance lost positive semi-definiteness."""


@dataclass
class Track:
    track_id: int
    cls: str
    x: np.ndarray
    P: np.ndarray
    score: float
    last_time: float
    score_sum: float = 0.0
    n_scores: int = 0
    hits: int = 1
    age: int = 0
    misses: int = 0
    status: str = "active"
    prior_score: Optional[float] = None

    @property
    def box(self) -> Box3D:
        s = self.x
        return Box3D(s[0], s[1], s[2], max(s[3], 1e-3), max(s[4], 1e-3), max(s[5], 1e-3), s[6])

    @property
    def velocity(self) -> tuple[float, float]:
        return float(self.x[7]), float(self.x[8])

    @property
    def average_score(self) -> float:
        return self.score_sum / self.n_scores if self.n_scores else self.score

    @property
    def alive(self) -> bool:
        return self.status != "dead"


# -- motion --------------------------------------------------------------------


def transition(dt: float) -> np.ndarray:
    F = np.eye(STATE_DIM)
    F[0, 7] = dt
    F[1, 8] = dt
    return F


def process_noise(dt: float, p: Params) -> np.ndarray:
    """Continuous white-noise model integrated over ``dt``."""
    Q = np.zeros((STATE_DIM, STATE_DIM))
    qa = p.q_accel
    for pos, vel in ((0, 7), (1, 8)):
        Q[pos, pos] = qa * dt**3 / 3.0
        Q[pos, vel] = Q[vel, pos] = qa * dt**2 / 2.0
        Q[vel, vel] = qa * dt
    Q[2, 2] = p.q_z * dt
    Q[3, 3] = Q[4, 4] = Q[5, 5] = p.q_dim * dt
    Q[HEADING, HEADING] = p.q_heading * dt
    return Q


def decay_factor(stage: str, p: Params) -> float:
    if stage == "sync":
        return p.sigma_sync
    if stage == "async":
        return p.sigma_async
    raise ValueError(f"unknown stage {stage!r}")


def predict(track: Track, dt: float, stage: str, p: Params) -> Track:
    """Time update of motion state and score over ``dt`` seconds."""
    if not dt > 0:
        raise ValueError(f"prediction interval must be positive, got {dt}")
    F = transition(dt)
    x = F @ track.x
    x[HEADING] = wrap_angle(x[HEADING])
    P = F @ track.P @ F.T + process_noise(dt, p)
    P = 0.5 * (P + P.T)
    prior = track.score if p.lifecycle == "count" else decay_factor(stage, p) * track.score
    return replace(track, x=x, P=P, score=prior, prior_score=prior, last_time=track.last_time + dt, age=track.age + 1)


def measurement_noise(stage: str, p: Params, dims: Sequence[int] = range(7)) -> np.ndarray:
    n = 0 if stage == "sync" else 1
    C = np.diag([p.meas_var[i] for i in dims])
    return (p.gamma**n) * C


def check_psd(P: np.ndarray, tol: float = 1e-9):
    if not np.allclose(P, P.T, atol=1e-9, rtol=0):
        raise NumericalFault("covariance is not symmetric")
    if np.linalg.eigvalsh(P).min() < -tol:
        raise NumericalFault("covariance is not positive semi-definite")


def _kalman_update(track: Track, z: np.ndarray, dims: Sequence[int], R: np.ndarray) -> Track:
    dims = list(dims)
    H = np.zeros((len(dims), STATE_DIM))
    H[np.arange(len(dims)), dims] = 1.0
    innov = z - H @ track.x
    if HEADING in dims:
        k = dims.index(HEADING)
        innov[k] = wrap_angle(innov[k])
    S = H @ track.P @ H.T + R
    K = np.linalg.solve(S, H @ track.P).T
    x = track.x + K @ innov
    x[HEADING] = wrap_angle(x[HEADING])
    IKH = np.eye(STATE_DIM) - K @ H
    P = IKH @ track.P @ IKH.T + K @ R @ K.T
    P = 0.5 * (P + P.T)
    check_psd(P)
    return replace(track, x=x, P=P)


def update_motion(track: Track, obs: Box3D, stage: str, p: Params) -> Track:
    """Full-box measurement update with noise inflated by gamma**n (n = 1 when async)."""
    return _kalman_update(track, obs.to_array(), range(7), measurement_noise(stage, p))


def lift_noise(stage: str, p: Params) -> np.ndarray:
    """Noise of a lifted camera position: gamma**n * lift_var * I."""
    n = 0 if stage == "sync" else 1
    return (p.gamma**n) * p.lift_var * np.eye(2)


def update_position(track: Track, xy: Sequence[float], stage: str, p: Params) -> Track:
    """BEV-position-only update, used for camera-only observations."""
    return _kalman_update(track, np.asarray(xy, dtype=float), (0, 1), lift_noise(stage, p))


def lift_distance(track: Track, xy: Sequence[float], stage: str, p: Params) -> float:
    """Squared Mahalanobis distance of a lifted position from the predicted one."""
    innov = np.asarray(xy, dtype=float) - track.x[:2]
    S = track.P[:2, :2] + lift_noise(stage, p)
    return float(innov @ np.linalg.solve(S, innov))


def lift_2d(track_box: Box3D, det: Box2D, cam: CameraModel) -> Optional[np.ndarray]:
    """BEV position implied by a 2D box, at the predicted range of the track.

    The pixel ray through the 2D box center is corrected by the offset
    between the predicted box's rectangle center and its projected center,
    then followed out to the camera-to-track distance.
    """
    rect = project_box(track_box, cam)
    if rect is None:
        return None
    uv, depth = cam.project_points(track_box.center)
    if depth[0] <= 0:
        return None
    ru, rv = rect.center
    du, dv = ru - uv[0, 0], rv - uv[0, 1]
    cu, cv = det.center
    ray = cam.pixel_ray(cu - du, cv - dv)
    rng = float(np.linalg.norm(track_box.center - cam.center))
    point = cam.center + rng * ray
    return point[:2]


# -- scores -------------------------------------------------------------------


def fuse_scores(s3d: float, s2d: float, alpha: float) -> float:
    return alpha * s3d + (1.0 - alpha) * s2d


def noisy_or(a: float, b: float) -> float:
    # the max guards against 1 - (1 - a) rounding below a; every step stays monotone
    return max(a, b, 1.0 - (1.0 - a) * (1.0 - b))


def update_score_sync(prior: float, s_fused: float) -> float:
    return noisy_or(prior, s_fused)


def update_score_async(prior: float, s_single: float, beta: float) -> float:
    return noisy_or(prior, beta * s_single)


def combine_scores(prior: float, obs: float, strategy: str = "noisy_or", ema_prior_weight: float = 0.7) -> float:
    """Posterior score from a prior and an (already attenuated) observation score."""
    if strategy == "noisy_or":
        return noisy_or(prior, obs)
    if strategy == "max":
        return max(prior, obs)
    if strategy == "average":
        return 0.5 * (prior + obs)
    if strategy == "ema":
        return ema_prior_weight * prior + (1.0 - ema_prior_weight) * obs
    raise ValueError(f"unknown score strategy {strategy!r}")


def lifecycle_step(track: Track, outcome: str, p: Params, obs_score: float = 0.0) -> Track:
    """Score update and termination check after association.

    ``outcome`` is ``matched-sync`` (``obs_score`` is the fused or 3D score),
    ``matched-async`` (``obs_score`` is the single camera score, attenuated by
    beta here) or ``unmatched``.
    """
    if outcome not in ("matched-sync", "matched-async", "unmatched"):
        raise ValueError(f"unknown outcome {outcome!r}")
    matched = outcome != "unmatched"
    hits = track.hits + 1 if matched else track.hits
    misses = 0 if matched else track.misses + 1

    if p.lifecycle == "count":
        score = obs_score if matched else track.score
        status = track.status
        if status == "tentative" and hits >= p.min_hits:
            status = "active"
        if misses > p.max_age:
            status = "dead"
        return replace(track, score=score, hits=hits, misses=misses, status=status)

    if outcome == "matched-sync":
        score = combine_scores(track.score, obs_score, p.score_strategy, p.ema_prior_weight)
    elif outcome == "matched-async":
        score = combine_scores(track.score, p.beta * obs_score, p.score_strategy, p.ema_prior_weight)
    else:
        score = track.score
    score = min(max(score, 0.0), 1.0)
    total, n = track.score_sum + score, track.n_scores + 1
    status = "dead" if total / n < p.theta_del else track.status
    return replace(track, score=score, score_sum=total, n_scores=n, hits=hits, misses=misses, status=status)


def spawn(det, track_id: int, timestamp: float, p: Params) -> Track:
    """New track from an unmatched mix or pure-3D detection.

    Camera-only detections never start tracks.
    """
    if isinstance(det, MixDetection):
        box = det.det3d.box
        score = fuse_scores(det.det3d.score, det.det2d.score, p.alpha)
    elif isinstance(det, Detection3D):
        box, score = det.box, det.score
    else:
        raise TypeError(f"cannot start a track from {type(det).__name__}")
    x = np.zeros(STATE_DIM)
    x[:7] = box.to_array()
    P = np.diag(np.asarray(p.init_var, dtype=float))
    status = "active"
    if p.lifecycle == "count" and p.min_hits > 1:
        status = "tentative"
    return Track(
        track_id=track_id,
        cls=det.cls,
        x=x,
        P=P,
        score=score,
        last_time=timestamp,
        score_sum=score,
        n_scores=1,
        status=status,
    )


# -- score fusion variance ----------------------------------------------------


def fused_variance(alpha: float, var3d: float, var2d: float) -> float:
    """Variance of the convex score fusion for uncorrelated modality noise."""
    return alpha**2 * var3d + (1.0 - alpha) ** 2 * var2d


def optimal_alpha(var3d: float, var2d: float) -> float:
    """Fusion weight minimising :func:`fused_variance`."""
    if not (var3d > 0 and var2d > 0):
        raise ValueError("variances must be positive")
    if math.isinf(var2d):
        return 1.0
    if math.isinf(var3d):
        return 0.0
    return var2d / (var3d + var2d)


def min_fused_variance(var3d: float, var2d: float) -> float:
    return var3d * var2d / (var3d + var2d)


def updated_score_variance(prior: float, input_variance: float) -> float:
    """Variance of the Noisy-OR posterior caused by noise on its input score."""
    return (1.0 - prior) ** 2 * input_variance
