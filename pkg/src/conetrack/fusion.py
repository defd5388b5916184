"""LiDAR/camera cone fusion: intensity-profile colour classification, pinhole
projection of cluster centres and the box/field-of-view decision rules."""

from __future__ import annotations

import enum
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ConeColor

EPSILON_FLAT = 0.5


def classify_intensity(layers, epsilon_flat: float = EPSILON_FLAT) -> ConeColor:
    """Colour from per-layer median intensities (bottom to top).

    A quadratic is least-squares fitted over layer index. A profile that
    peaks in the middle (negative leading coefficient) is blue, one that dips
    in the middle is yellow, and a near-flat fit is unknown.
    """
    y = np.asarray(layers, dtype=float)
    if y.ndim != 1 or len(y) < 3:
        raise ValueError("need at least 3 intensity layers for a quadratic fit")
    # centred abscissa keeps the fit well conditioned
    t = np.arange(len(y), dtype=float) - 0.5 * (len(y) - 1)
    a = np.polyfit(t, y, 2)[0]
    if abs(a) < epsilon_flat:
        return ConeColor.UNKNOWN
    return ConeColor.BLUE if a < 0 else ConeColor.YELLOW


class BehindCamera:
    """Marker returned by :func:`project` for points that do not image."""

    def __repr__(self) -> str:
        return "BehindCamera"


BEHIND_CAMERA = BehindCamera()


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    T: np.ndarray = field(default_factory=lambda: np.zeros(3))
    width: int = 640
    height: int = 480

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float).reshape(3, 3)
        T = np.asarray(self.T, dtype=float).reshape(3)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("R must be a proper rotation")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def P(self) -> np.ndarray:
        return self.K @ np.column_stack([self.R, self.T])

    def in_image(self, px) -> bool:
        return 0.0 <= px[0] <= self.width and 0.0 <= px[1] <= self.height

    def backproject(self, px, depth: float) -> np.ndarray:
        """World point imaging at pixel ``px`` with camera-frame depth ``depth``."""
        pc = np.array([(px[0] - self.cx) / self.fx * depth, (px[1] - self.cy) / self.fy * depth, depth])
        return self.R.T @ (pc - self.T)

    @classmethod
    def from_json(cls, path) -> "CameraModel":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(d["fx"], d["fy"], d["cx"], d["cy"], np.array(d["R"]).reshape(3, 3),
                   np.array(d["T"]), int(d["width"]), int(d["height"]))

    def to_json(self, path) -> None:
        d = {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
             "R": self.R.ravel().tolist(), "T": self.T.tolist(), "width": self.width, "height": self.height}
        Path(path).write_text(json.dumps(d, indent=1), encoding="utf-8")


def project(cam: CameraModel, world):
    """Pixel ``(x/w, y/w)`` of a world point, or ``BEHIND_CAMERA`` when ``w`` is not positive."""
    x, y, w = cam.P @ np.append(np.asarray(world, dtype=float), 1.0)
    if w < 1e-12:
        return BEHIND_CAMERA
    return (x / w, y / w)


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    color: ConeColor
    confidence: float = 1.0

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("bounding box must have positive extent")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")

    def contains(self, px) -> bool:
        return self.x_min <= px[0] <= self.x_max and self.y_min <= px[1] <= self.y_max

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max)


class Source(enum.Enum):
    LIDAR_ONLY = "lidar_only"
    FUSED = "fused"
    REJECTED_FALSE_POSITIVE = "rejected_false_positive"


@dataclass(frozen=True)
class LidarCluster:
    position: tuple[float, float, float]
    intensity_color: ConeColor = ConeColor.UNKNOWN


@dataclass(frozen=True)
class FusedCone:
    position: tuple[float, float, float]
    color: ConeColor
    source: Source


def fuse(clusters, boxes, cam: CameraModel, tally: Counter | None = None) -> list[FusedCone]:
    """Assign every cluster to exactly one of LiDAR-only / fused / rejected.

    Clusters projecting outside the image (or behind the camera) keep their
    intensity colour. Inside the image, a cluster takes the colour of the
    containing box whose centre is nearest, or is rejected if no box contains
    it. ``tally`` (optional) counts camera/intensity colour disagreements.
    """
    out = []
    for c in clusters:
        pos = tuple(float(v) for v in c.position)
        px = project(cam, pos)
        if px is BEHIND_CAMERA or not cam.in_image(px):
            out.append(FusedCone(pos, c.intensity_color, Source.LIDAR_ONLY))
            continue
        hits = [b for b in boxes if b.contains(px)]
        if not hits:
            out.append(FusedCone(pos, c.intensity_color, Source.REJECTED_FALSE_POSITIVE))
            continue
        box = min(hits, key=lambda b: math.hypot(b.center[0] - px[0], b.center[1] - px[1]))
        if tally is not None and c.intensity_color is not ConeColor.UNKNOWN and c.intensity_color is not box.color:
            tally["color_disagreement"] += 1
        out.append(FusedCone(pos, box.color, Source.FUSED))
    return out


def planner_cones(fused: list[FusedCone]) -> list[FusedCone]:
    return [f for f in fused if f.source is not Source.REJECTED_FALSE_POSITIVE]


# ---------------------------------------------------------------------------
# synthetic camera used by the simulator


def forward_camera(mount_height: float = 1.0, width: int = 1280, height: int = 720,
                   hfov: float = math.radians(100.0)) -> CameraModel:
    """Camera looking along vehicle +x; the world frame here is the vehicle frame (x fwd, y left, z up)."""
    fx = 0.5 * width / math.tan(0.5 * hfov)
    R = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    T = -R @ np.array([0.0, 0.0, mount_height])
    return CameraModel(fx, fx, width / 2.0, height / 2.0, R, T, width, height)


def synthetic_box(cam: CameraModel, base, color: ConeColor, cone_height: float = 0.325,
                  cone_width: float = 0.228):
    """Image-space box around a cone standing at vehicle-frame point ``base`` (clipped to the image)."""
    x, y = float(base[0]), float(base[1])
    corners = [(x, y + s * cone_width / 2, z) for s in (-1, 1) for z in (0.0, cone_height)]
    pix = [project(cam, c) for c in corners]
    if any(p is BEHIND_CAMERA for p in pix):
        return None
    xs = [p[0] for p in pix]
    ys = [p[1] for p in pix]
    x0, x1 = max(min(xs), 0.0), min(max(xs), cam.width)
    y0, y1 = max(min(ys), 0.0), min(max(ys), cam.height)
    if x0 >= x1 or y0 >= y1:
        return None
    return BoundingBox(x0, y0, x1, y1, color)
