"""Tracker configuration: global defaults plus per-class overrides.

A config document is YAML or JSON::

    version: 1
    use_async: true
    params:
      theta_fm: 1.4
    per_class:
      pedestrian:
        theta_tm: 0.6
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import yaml

CONFIG_VERSION = 1

PHASES = ("ma", "p3da", "p2da")
SCORE_STRATEGIES = ("noisy_or", "max", "ema", "average")


class ConfigError(ValueError):
    """Invalid or incomplete configuration document."""


@dataclass(frozen=True)
class Params:
    """Every tunable that may differ per object class."""

    # preprocessing
    score_threshold: float = 0.3
    nms_iou: float = 0.08
    match_iou: float = 0.3
    align_metric: str = "iou"
    align_max_iter: int = 50
    align_tol: float = 1e-6
    # reject alignments that move the BEV center further than this (meters)
    align_max_shift: float = 1.5
    dim_min: tuple = (0.1, 0.1, 0.1)
    dim_max: tuple = (20.0, 20.0, 20.0)
    # association gates, in cost space
    theta_fm: float = 1.4
    theta_sm: float = 1.4
    # 2D matches need IoU >= 0.3, the same bar as 3D-2D pairing
    theta_tm: float = 0.7
    # score lifecycle
    sigma_sync: float = 0.7
    sigma_async: float = 0.7
    alpha: float = 0.4
    beta: float = 0.5
    theta_del: float = 0.1
    score_strategy: str = "noisy_or"
    ema_prior_weight: float = 0.7
    lifecycle: str = "score"
    max_age: int = 4
    min_hits: int = 1
    # motion model
    gamma: float = 100.0
    meas_var: tuple = (0.25, 0.25, 0.25, 0.04, 0.04, 0.04, 0.01)
    q_accel: float = 4.0
    q_z: float = 0.1
    q_dim: float = 0.01
    q_heading: float = 0.5
    init_var: tuple = (1.0, 1.0, 1.0, 0.25, 0.25, 0.25, 0.25, 100.0, 100.0)
    # BEV position variance of a camera-only (lifted 2D) observation, before gamma scaling
    lift_var: float = 0.25
    # lifted positions with a larger squared Mahalanobis distance are not applied (off by default)
    lift_gate: float = math.inf

    def validate(self, where: str = "params"):
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(f"{where}.{key}: {msg}")

        for key in ("score_threshold", "nms_iou", "match_iou", "alpha", "theta_del", "ema_prior_weight"):
            v = getattr(self, key)
            need(0.0 <= v <= 1.0, key, f"must lie in [0, 1], got {v}")
        for key in ("sigma_sync", "sigma_async", "beta"):
            v = getattr(self, key)
            need(0.0 < v <= 1.0, key, f"must lie in (0, 1], got {v}")
        for key in ("theta_fm", "theta_sm", "theta_tm", "align_tol"):
            need(math.isfinite(getattr(self, key)), key, "must be finite")
        need(self.align_metric in ("iou", "giou", "euclid"), "align_metric", f"unknown metric {self.align_metric!r}")
        need(self.score_strategy in SCORE_STRATEGIES, "score_strategy", f"unknown strategy {self.score_strategy!r}")
        need(self.lifecycle in ("score", "count"), "lifecycle", f"unknown lifecycle {self.lifecycle!r}")
        need(self.gamma >= 1.0, "gamma", f"must be >= 1, got {self.gamma}")
        need(self.align_max_iter > 0, "align_max_iter", "must be positive")
        need(self.max_age >= 0 and self.min_hits >= 1, "max_age", "counts out of range")
        need(len(self.meas_var) == 7 and all(v > 0 for v in self.meas_var), "meas_var", "needs 7 positive entries")
        need(len(self.init_var) == 9 and all(v > 0 for v in self.init_var), "init_var", "needs 9 positive entries")
        need(len(self.dim_min) == 3 and len(self.dim_max) == 3, "dim_min", "dimension bounds need 3 entries")
        need(self.lift_var > 0, "lift_var", "must be positive")
        need(self.align_max_shift > 0, "align_max_shift", "must be positive")
        need(self.lift_gate > 0, "lift_gate", "must be positive")
        for key in ("q_accel", "q_z", "q_dim", "q_heading"):
            need(getattr(self, key) >= 0, key, "must be non-negative")


PARAM_NAMES = tuple(f.name for f in fields(Params))
_TUPLE_PARAMS = {"dim_min", "dim_max", "meas_var", "init_var"}

DEFAULT_PER_CLASS = {
    "car": {"dim_min": (1.2, 3.0, 1.0), "dim_max": (2.8, 6.5, 2.6)},
    "pedestrian": {"dim_min": (0.3, 0.3, 1.0), "dim_max": (1.2, 1.2, 2.2), "q_accel": 2.0},
}


@dataclass
class TrackerConfig:
    params: Params = field(default_factory=Params)
    per_class: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_PER_CLASS.items()})
    use_async: bool = True
    emit_async_snapshots: bool = False
    gaam: bool = True
    cascade: bool = True
    phases: tuple = PHASES
    association_space: str = "bev"

    def __post_init__(self):
        self._cache: dict = {}
        self.validate()

    def validate(self):
        self.params.validate()
        for ph in self.phases:
            if ph not in PHASES:
                raise ConfigError(f"phases: unknown phase {ph!r}")
        if self.association_space not in ("bev", "image"):
            raise ConfigError(f"association_space: unknown value {self.association_space!r}")
        for cls, overrides in self.per_class.items():
            for key in overrides:
                if key not in PARAM_NAMES:
                    raise ConfigError(f"per_class.{cls}.{key}: unknown parameter")
            self.for_class(cls).validate(f"per_class.{cls}")

    def for_class(self, cls: Optional[str]) -> Params:
        hit = self._cache.get(cls)
        if hit is None:
            overrides = self.per_class.get(cls, {}) if cls is not None else {}
            hit = replace(self.params, **{k: _coerce(k, v, f"per_class.{cls}") for k, v in overrides.items()})
            self._cache[cls] = hit
        return hit

    def with_params(self, **kwargs) -> "TrackerConfig":
        """Copy with global parameter overrides; per-class overrides of the same key are dropped."""
        per_class = {c: {k: v for k, v in o.items() if k not in kwargs} for c, o in self.per_class.items()}
        return replace(self, params=replace(self.params, **kwargs), per_class=per_class)

    def to_dict(self) -> dict:
        return {
            "version": CONFIG_VERSION,
            "use_async": self.use_async,
            "emit_async_snapshots": self.emit_async_snapshots,
            "gaam": self.gaam,
            "cascade": self.cascade,
            "phases": list(self.phases),
            "association_space": self.association_space,
            "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self.params).items()},
            "per_class": {
                c: {k: (list(v) if isinstance(v, tuple) else v) for k, v in o.items()} for c, o in self.per_class.items()
            },
        }


_DEFAULTS = Params()


def _coerce(key: str, value: Any, where: str = "params"):
    """Convert a document value to the type of the parameter's default."""
    default = getattr(_DEFAULTS, key)
    try:
        if key in _TUPLE_PARAMS:
            if isinstance(value, (str, bytes)):
                raise TypeError
            return tuple(float(v) for v in value)
        if isinstance(value, bool) or isinstance(default, str) != isinstance(value, str):
            raise TypeError
        if isinstance(default, int):
            if float(value) != int(value):
                raise TypeError
            return int(value)
        if isinstance(default, float):
            return float(value)
        return value
    except (TypeError, ValueError, OverflowError):
        raise ConfigError(f"{where}.{key}: expected {type(default).__name__}, got {value!r}") from None


_TOP_KEYS = {"version", "use_async", "emit_async_snapshots", "gaam", "cascade", "phases", "association_space", "params", "per_class"}


def config_from_dict(doc: dict) -> TrackerConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    if "version" not in doc:
        raise ConfigError("missing config key 'version'")
    if doc["version"] != CONFIG_VERSION:
        raise ConfigError(f"version: unsupported config version {doc['version']!r}")
    for key in doc:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    raw_params = doc.get("params") or {}
    for key in raw_params:
        if key not in PARAM_NAMES:
            raise ConfigError(f"params.{key}: unknown parameter")
    params = Params(**{k: _coerce(k, v) for k, v in raw_params.items()})
    per_class = {k: dict(v) for k, v in DEFAULT_PER_CLASS.items()}
    for cls, overrides in (doc.get("per_class") or {}).items():
        if not isinstance(overrides or {}, dict):
            raise ConfigError(f"per_class.{cls}: expected a mapping")
        per_class.setdefault(cls, {}).update(overrides or {})
    for key in ("use_async", "emit_async_snapshots", "gaam", "cascade"):
        if key in doc and not isinstance(doc[key], bool):
            raise ConfigError(f"{key}: expected true or false, got {doc[key]!r}")
    if "phases" in doc and (isinstance(doc["phases"], str) or not isinstance(doc["phases"], (list, tuple))):
        raise ConfigError(f"phases: expected a list, got {doc['phases']!r}")
    for key in ("params", "per_class"):
        if not isinstance(doc.get(key) or {}, dict):
            raise ConfigError(f"{key}: expected a mapping")
    kwargs = {k: doc[k] for k in ("use_async", "emit_async_snapshots", "gaam", "cascade", "association_space") if k in doc}
    if "phases" in doc:
        kwargs["phases"] = tuple(doc["phases"])
    return TrackerConfig(params=params, per_class=per_class, **kwargs)


def load_document(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith(".json"):
        return json.loads(text)
    return yaml.safe_load(text)


def load_config(path) -> TrackerConfig:
    return config_from_dict(load_document(path))
