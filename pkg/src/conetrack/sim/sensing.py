"""Synthetic range-bearing cone detections with intensity profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import ConeColor, ConeObservation, TrackMap, wrap_angles
from .vehicle import VehicleState

DEFAULT_TEMPLATES = {
    # bright middle band: quadratic opens downward
    ConeColor.BLUE: (20.0, 45.0, 60.0, 45.0, 20.0),
    # dark middle band: quadratic opens upward
    ConeColor.YELLOW: (60.0, 35.0, 20.0, 35.0, 60.0),
    ConeColor.ORANGE_SMALL: (40.0, 40.0, 40.0, 40.0, 40.0),
    ConeColor.ORANGE_LARGE: (40.0, 40.0, 40.0, 40.0, 40.0),
}


@dataclass(frozen=True)
class SensorConfig:
    max_range: float = 20.0
    fov: float = math.radians(180.0)
    sigma_range: float = 0.05
    sigma_bearing: float = 0.005
    color_visibility_range: float = 12.0
    detection_dropout_prob: float = 0.0
    intensity_noise: float = 0.05   # fraction of template amplitude
    templates: dict = field(default_factory=lambda: dict(DEFAULT_TEMPLATES))

    def __post_init__(self):
        if not 0 < self.fov <= 2 * math.pi:
            raise ValueError("fov must lie in (0, 2*pi]")
        if not 0.0 <= self.detection_dropout_prob <= 1.0:
            raise ValueError("dropout probability must lie in [0, 1]")
        if self.max_range <= 0 or self.sigma_range < 0 or self.sigma_bearing < 0 or self.intensity_noise < 0:
            raise ValueError("invalid sensor noise or range")


def template_amplitude(t) -> float:
    t = np.asarray(t, dtype=float)
    return float(t.max() - t.min()) if t.size else 0.0


def synth_intensity(color: ConeColor, sc: SensorConfig, rng) -> tuple[float, ...]:
    t = np.asarray(sc.templates.get(color, DEFAULT_TEMPLATES[ConeColor.ORANGE_SMALL]), dtype=float)
    noise = rng.normal(0.0, sc.intensity_noise * max(template_amplitude(t), 1.0), t.size)
    return tuple(float(x) for x in t + noise)


def sense(s: VehicleState, track: TrackMap, sc: SensorConfig, rng) -> list[ConeObservation]:
    """Detections of the track cones from the vehicle pose, nearest first."""
    cones = track.cones
    if not cones:
        return []
    xy = np.array([c.position for c in cones])
    p = s.pose
    d = xy - p.xy
    rng_true = np.hypot(d[:, 0], d[:, 1])
    brg_true = wrap_angles(np.arctan2(d[:, 1], d[:, 0]) - p.theta)
    vis = (rng_true <= sc.max_range) & (np.abs(brg_true) <= 0.5 * sc.fov)
    idx = np.flatnonzero(vis)
    idx = idx[np.argsort(rng_true[idx], kind="stable")]
    # fixed draw count per visible cone keeps the random stream aligned across configs
    keep = rng.random(idx.size) >= sc.detection_dropout_prob
    nr = rng.normal(0.0, 1.0, idx.size) * sc.sigma_range
    nb = rng.normal(0.0, 1.0, idx.size) * sc.sigma_bearing
    out = []
    for k, i in enumerate(idx):
        if not keep[k]:
            continue
        color = cones[i].color if rng_true[i] <= sc.color_visibility_range else ConeColor.UNKNOWN
        layers = synth_intensity(cones[i].color, sc, rng)
        out.append(ConeObservation(max(0.0, float(rng_true[i] + nr[k])), float(brg_true[i] + nb[k]),
                                   color, layers))
    return out
