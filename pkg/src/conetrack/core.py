"""Shared domain types, planar geometry helpers and track/trajectory file I/O."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


class TrackFormatError(ValueError):
    """Malformed track or trajectory file."""


class TrackValidationError(ValueError):
    """A parsed track violates a TrackMap invariant."""


def wrap_angle(a: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    a = float(a)
    if not math.isfinite(a):
        raise ValueError(f"cannot wrap non-finite angle {a!r}")
    r = math.fmod(a + math.pi, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    r -= math.pi
    if r <= -math.pi:
        r = math.pi
    return r


def wrap_angles(a):
    """Vectorised :func:`wrap_angle` for numpy arrays."""
    a = np.asarray(a, dtype=float)
    r = np.mod(a + np.pi, TWO_PI) - np.pi
    return np.where(r <= -np.pi, np.pi, r)


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2D:
    """Planar pose; heading is CCW from +x and always stored wrapped."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @classmethod
    def from_array(cls, a) -> "Pose2D":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def to_world(self, p) -> np.ndarray:
        """Map body-frame point(s) into the world frame."""
        p = np.asarray(p, dtype=float)
        return p @ rotation(self.theta).T + self.xy

    def to_body(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return (p - self.xy) @ rotation(self.theta)

    def advanced(self, distance: float) -> "Pose2D":
        return Pose2D(self.x + distance * math.cos(self.theta),
                      self.y + distance * math.sin(self.theta), self.theta)


class ConeColor(enum.Enum):
    BLUE = "blue"
    YELLOW = "yellow"
    ORANGE_SMALL = "orange_small"
    ORANGE_LARGE = "orange_large"
    UNKNOWN = "unknown"

    @property
    def is_orange(self) -> bool:
        return self in (ConeColor.ORANGE_SMALL, ConeColor.ORANGE_LARGE)

    def compatible(self, other: "ConeColor") -> bool:
        """Unknown matches anything; known colors only match themselves."""
        return self is ConeColor.UNKNOWN or other is ConeColor.UNKNOWN or self is other


@dataclass(frozen=True)
class Cone:
    x: float
    y: float
    color: ConeColor = ConeColor.UNKNOWN

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"cone position must be finite, got ({self.x}, {self.y})")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class ConeObservation:
    """Range-bearing cone detection in the sensor (vehicle) frame."""

    range: float
    bearing: float
    color: ConeColor = ConeColor.UNKNOWN
    intensity_layers: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.range >= 0.0:
            raise ValueError(f"range must be >= 0, got {self.range}")
        object.__setattr__(self, "bearing", wrap_angle(self.bearing))

    def body_xy(self) -> np.ndarray:
        return np.array([self.range * math.cos(self.bearing), self.range * math.sin(self.bearing)])


@dataclass(frozen=True)
class TrajectoryPoint:
    x: float
    y: float
    heading: float
    curvature: float
    speed: float = 0.0


@dataclass
class Trajectory:
    """Array-backed reference trajectory (the planner -> controller contract).

    ``s`` is cumulative arc length from the first sample. A closed trajectory
    implicitly connects the last sample back to the first.
    """

    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    curvature: np.ndarray
    speed: np.ndarray = None
    closed: bool = False

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.heading = np.asarray(self.heading, dtype=float)
        self.curvature = np.asarray(self.curvature, dtype=float)
        n = self.x.size
        if self.speed is None:
            self.speed = np.zeros(n)
        self.speed = np.asarray(self.speed, dtype=float)
        if not (self.y.size == self.heading.size == self.curvature.size == self.speed.size == n):
            raise ValueError("trajectory arrays must share one length")
        if np.any(self.speed < 0):
            raise ValueError("trajectory speeds must be non-negative")

    def __len__(self) -> int:
        return int(self.x.size)

    @property
    def xy(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])

    @property
    def segment_lengths(self) -> np.ndarray:
        """Distances between consecutive samples (includes the closing segment if closed)."""
        xy = self.xy
        if self.closed:
            return np.linalg.norm(np.roll(xy, -1, axis=0) - xy, axis=1)
        return np.linalg.norm(np.diff(xy, axis=0), axis=1)

    @property
    def s(self) -> np.ndarray:
        xy = self.xy
        d = np.linalg.norm(np.diff(xy, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(d)])

    @property
    def length(self) -> float:
        return float(self.segment_lengths.sum())

    def point(self, i: int) -> TrajectoryPoint:
        return TrajectoryPoint(float(self.x[i]), float(self.y[i]), float(self.heading[i]),
                               float(self.curvature[i]), float(self.speed[i]))

    def points(self) -> list[TrajectoryPoint]:
        return [self.point(i) for i in range(len(self))]

    @classmethod
    def from_points(cls, pts: Sequence[TrajectoryPoint], closed: bool = False) -> "Trajectory":
        a = np.array([[p.x, p.y, p.heading, p.curvature, p.speed] for p in pts], dtype=float)
        if a.size == 0:
            a = np.zeros((0, 5))
        return cls(a[:, 0], a[:, 1], a[:, 2], a[:, 3], a[:, 4], closed=closed)

    def with_speed(self, speed) -> "Trajectory":
        return Trajectory(self.x, self.y, self.heading, self.curvature, speed, self.closed)


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 190.0
    front_cornering_stiffness: float = 40000.0
    l_f: float = 0.78
    l_r: float = 0.75
    max_steer: float = math.radians(25.0)
    a_long_max: float = 6.0
    a_brake_max: float = 8.0
    a_lat_max: float = 8.0
    v_max: float = 15.0
    width: float = 1.4

    def __post_init__(self):
        for name in ("mass", "front_cornering_stiffness", "l_f", "l_r", "max_steer",
                     "a_long_max", "a_brake_max", "a_lat_max", "v_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"VehicleParams.{name} must be > 0")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r


@dataclass
class TrackMap:
    left_cones: list[Cone]
    right_cones: list[Cone]
    start_cones: list[Cone] = field(default_factory=list)
    start_pose: Pose2D = field(default_factory=lambda: Pose2D(0.0, 0.0, 0.0))
    closed: bool = False
    generated: bool = False

    @property
    def cones(self) -> list[Cone]:
        return [*self.left_cones, *self.right_cones, *self.start_cones]

    def left_xy(self) -> np.ndarray:
        return np.array([c.position for c in self.left_cones]).reshape(-1, 2)

    def right_xy(self) -> np.ndarray:
        return np.array([c.position for c in self.right_cones]).reshape(-1, 2)

    def corridor_widths(self) -> np.ndarray:
        """Nearest opposite-side cone distance for every boundary cone."""
        left, right = self.left_xy(), self.right_xy()
        if len(left) == 0 or len(right) == 0:
            return np.zeros(0)
        d = np.linalg.norm(left[:, None, :] - right[None, :, :], axis=2)
        return np.concatenate([d.min(axis=1), d.min(axis=0)])

    def validate(self) -> None:
        if len(self.left_cones) == 0 or len(self.right_cones) == 0:
            raise TrackValidationError("track needs cones on both sides")
        if self.closed and (len(self.left_cones) < 3 or len(self.right_cones) < 3):
            raise TrackValidationError("a closed track needs at least 3 cones per side")
        if self.generated:
            w = self.corridor_widths()
            if w.min() < 2.5 or w.max() > 6.0:
                raise TrackValidationError(
                    f"generated track corridor width {w.min():.3f}..{w.max():.3f} m outside [2.5, 6.0]")


# ---------------------------------------------------------------------------
# boundary geometry


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Distances from points ``p`` (N,2) to segments a->b (M,2); returns (N,M) and the along-fraction."""
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    denom = np.where(denom > 0, denom, 1.0)
    ap = p[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("nmj,mj->nm", ap, ab) / denom, 0.0, 1.0)
    proj = a[None, :, :] + t[..., None] * ab[None, :, :]
    return np.linalg.norm(p[:, None, :] - proj, axis=2), t


def polyline_signed_distance(points, poly, closed: bool, left_positive: bool = True) -> np.ndarray:
    """Signed distance from ``points`` to the polyline ``poly``.

    Positive on the left side of the polyline's direction of travel when
    ``left_positive``; the sign comes from the nearest segment.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    poly = np.asarray(poly, dtype=float)
    if closed:
        a, b = poly, np.roll(poly, -1, axis=0)
    else:
        a, b = poly[:-1], poly[1:]
    d, t = _point_segment_distance(points, a, b)
    k = np.argmin(d, axis=1)
    rows = np.arange(len(points))
    seg = (b - a)[k]
    rel = points - a[k]
    cross = seg[:, 0] * rel[:, 1] - seg[:, 1] * rel[:, 0]
    sign = np.where(cross >= 0, 1.0, -1.0)
    if not left_positive:
        sign = -sign
    return sign * d[rows, k]


def boundary_distance(track: TrackMap, points) -> np.ndarray:
    """Signed clearance to the corridor: positive inside, negative once outside.

    Cones on each side must be listed in driving order.
    """
    left = polyline_signed_distance(points, track.left_xy(), track.closed, left_positive=False)
    right = polyline_signed_distance(points, track.right_xy(), track.closed, left_positive=True)
    return np.minimum(left, right)


# ---------------------------------------------------------------------------
# file I/O

_COLOR_BY_NAME = {c.value: c for c in ConeColor}


def _parse_flags(line: str) -> dict[str, bool]:
    flags = {}
    body = line.lstrip("#").strip()
    for part in body.split(","):
        if not part.strip():
            continue
        if ":" not in part:
            raise TrackFormatError(f"line 1: bad flag {part.strip()!r}")
        k, v = (s.strip().lower() for s in part.split(":", 1))
        if v not in ("true", "false"):
            raise TrackFormatError(f"line 1: flag {k} must be true or false")
        flags[k] = v == "true"
    return flags


def load_track(path) -> TrackMap:
    """Parse a track CSV (``tag,x,y,color``) and validate it."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not any(ln.strip() for ln in lines):
        raise TrackFormatError(f"{path}: empty track file")
    flags: dict[str, bool] = {}
    left, right, start = [], [], []
    start_pose = None
    header_seen = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if not header_seen:
                flags.update(_parse_flags(line))
            continue
        row = [c.strip() for c in next(csv.reader([line]))]
        if not header_seen:
            if row != ["tag", "x", "y", "color"]:
                raise TrackFormatError(f"{path}:{lineno}: expected header 'tag,x,y,color'")
            header_seen = True
            continue
        if len(row) != 4:
            raise TrackFormatError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
        tag, xs, ys, cs = row
        try:
            x, y = float(xs), float(ys)
        except ValueError:
            raise TrackFormatError(f"{path}:{lineno}: non-numeric coordinate") from None
        if tag == "start_pose":
            try:
                start_pose = Pose2D(x, y, float(cs))
            except ValueError:
                raise TrackFormatError(f"{path}:{lineno}: start_pose heading must be radians") from None
        elif tag == "cone":
            color = _COLOR_BY_NAME.get(cs.lower())
            if color is None or color is ConeColor.UNKNOWN:
                raise TrackFormatError(f"{path}:{lineno}: unknown cone color {cs!r}")
            try:
                cone = Cone(x, y, color)
            except ValueError as exc:
                raise TrackFormatError(f"{path}:{lineno}: {exc}") from None
            {ConeColor.BLUE: left, ConeColor.YELLOW: right}.get(color, start).append(cone)
        else:
            raise TrackFormatError(f"{path}:{lineno}: unknown tag {tag!r}")
    if not header_seen:
        raise TrackFormatError(f"{path}: missing header")
    track = TrackMap(left, right, start, start_pose or Pose2D(0.0, 0.0, 0.0),
                     closed=flags.get("closed", False), generated=flags.get("generated", False))
    track.validate()
    return track


def save_track(track: TrackMap, path) -> None:
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            fh.write(f"# generated: {str(track.generated).lower()}, closed: {str(track.closed).lower()}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tag", "x", "y", "color"])
            p = track.start_pose
            w.writerow(["start_pose", repr(float(p.x)), repr(float(p.y)), repr(float(p.theta))])
            for c in track.cones:
                w.writerow(["cone", repr(float(c.x)), repr(float(c.y)), c.color.value])
    except OSError as exc:
        raise OSError(f"cannot write track to {path}: {exc}") from exc


TRAJECTORY_HEADER = ["s", "x", "y", "heading", "curvature", "speed"]


def save_trajectory(traj: Trajectory | Sequence[TrajectoryPoint], path) -> None:
    """Write a trajectory CSV; values are stored at 17 significant digits."""
    if not isinstance(traj, Trajectory):
        traj = Trajectory.from_points(list(traj))
    if len(traj) == 0:
        raise ValueError("cannot save an empty trajectory")
    path = Path(path)
    s = traj.s
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRAJECTORY_HEADER)
            for i in range(len(traj)):
                w.writerow([f"{v:.17g}" for v in (s[i], traj.x[i], traj.y[i], traj.heading[i],
                                                  traj.curvature[i], traj.speed[i])])
    except OSError as exc:
        raise OSError(f"cannot write trajectory to {path}: {exc}") from exc


def load_trajectory(path, closed: bool = False) -> Trajectory:
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TRAJECTORY_HEADER:
        raise TrackFormatError(f"{path}: expected header {','.join(TRAJECTORY_HEADER)}")
    try:
        a = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float).reshape(-1, 6)
    except ValueError as exc:
        raise TrackFormatError(f"{path}: {exc}") from None
    return Trajectory(a[:, 1], a[:, 2], a[:, 3], a[:, 4], a[:, 5], closed=closed)


def as_xy(points: Iterable) -> np.ndarray:
    """Coerce cones, poses, trajectory points or raw pairs to an (N,2) array."""
    out = []
    for p in points:
        if hasattr(p, "x") and hasattr(p, "y"):
            out.append((float(p.x), float(p.y)))
        else:
            out.append((float(p[0]), float(p[1])))
    return np.array(out, dtype=float).reshape(-1, 2)
