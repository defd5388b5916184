"""End-to-end planning: cones to a timed reference trajectory, plus its quality metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import Cone, Pose2D, TrackMap, Trajectory, boundary_distance
from .fitting import fit_line, fit_spline
from .reward import RewardWeights, SearchConfig
from .search import Centerline, search_centerline
from .smoothing import simplify_opheim, smooth_moving_average
from .triangulation import PlanningError, triangulate
from .velocity import VelocityLimits, lap_time, velocity_profile

SMOOTHING_MODES = ("raw", "moving_avg", "opheim", "combined")


@dataclass(frozen=True)
class PlannerConfig:
    weights: RewardWeights = field(default_factory=RewardWeights)
    search: SearchConfig = field(default_factory=SearchConfig)
    limits: VelocityLimits = field(default_factory=VelocityLimits)
    smoothing: str = "combined"
    fit: str = "spline"  # or "line" for straight-line events

    def __post_init__(self):
        if self.smoothing not in SMOOTHING_MODES:
            raise ValueError(f"smoothing must be one of {SMOOTHING_MODES}")
        if self.fit not in ("spline", "line"):
            raise ValueError("fit must be 'spline' or 'line'")


@dataclass
class PlanResult:
    trajectory: Trajectory
    centerline: Centerline
    smoothed: np.ndarray


def smooth_points(points, closed: bool, mode: str, cfg: SearchConfig) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if mode in ("moving_avg", "combined"):
        p = smooth_moving_average(p, cfg.smoothing_window, closed)
    if mode in ("opheim", "combined"):
        if closed:
            # simplify as an open chain that returns to its first point, then drop the repeat
            p = simplify_opheim(np.vstack([p, p[:1]]), cfg.opheim_min_tol, cfg.opheim_max_tol)[:-1]
        else:
            p = simplify_opheim(p, cfg.opheim_min_tol, cfg.opheim_max_tol)
    return p


def plan_trajectory(cones: list[Cone], start: Pose2D, cfg: PlannerConfig | None = None) -> PlanResult:
    """Triangulate, search, smooth, fit and time a reference trajectory from ``start``."""
    cfg = cfg or PlannerConfig()
    mids = triangulate(cones)
    line = search_centerline(mids, start, cfg.weights, cfg.search)
    closed = line.cyclic
    pts = line.xy
    if not closed:
        pts = np.vstack([start.xy, pts])
    pts = smooth_points(pts, closed, cfg.smoothing, cfg.search)
    if cfg.fit == "line":
        traj = fit_line(pts, cfg.search.sample_ds)
    else:
        if len(pts) < 4:
            raise PlanningError(f"centreline too short to fit ({len(pts)} points)")
        traj = fit_spline(pts, closed, cfg.search.sample_ds)
    limits = cfg.limits
    traj = velocity_profile(traj, limits, closed)
    return PlanResult(traj, line, pts)


def trajectory_metrics(traj: Trajectory, track: TrackMap | None = None, eval_speed: float = 5.0) -> dict:
    """Lap time, lateral acceleration at ``eval_speed``, curvature variation rate and boundary clearance."""
    lat = np.abs(traj.curvature) * eval_speed ** 2
    k = traj.curvature
    ds = traj.segment_lengths
    dk = (np.roll(k, -1) - k)[:len(ds)] if traj.closed else np.diff(k)
    cvr = np.abs(dk / np.where(ds > 0, ds, np.inf))
    out = {
        "lap_time": lap_time(traj),
        "max_lat_acc": float(lat.max()),
        "mean_lat_acc": float(lat.mean()),
        "std_lat_acc": float(lat.std()),
        "max_cvr": float(cvr.max()) if cvr.size else 0.0,
        "mean_cvr": float(cvr.mean()) if cvr.size else 0.0,
        "std_cvr": float(cvr.std()) if cvr.size else 0.0,
    }
    if track is not None:
        out["min_dist_to_boundary"] = float(boundary_distance(track, traj.xy).min())
    return out


def write_metrics(metrics: dict, path) -> None:
    Path(path).write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8")
