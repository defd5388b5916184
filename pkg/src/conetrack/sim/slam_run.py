"""Open-loop SLAM runs: drive a known path at constant speed and score the filter."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..core import Pose2D, TrackMap, Trajectory, wrap_angle
from ..planner import PlannerConfig, plan_trajectory
from ..slam import FastSlam, GraphConfig, OdometryInput, SlamConfig, odometry_between
from .sensing import SensorConfig, sense
from .vehicle import VehicleState


@dataclass(frozen=True)
class SlamRunConfig:
    laps: int = 2
    speed: float = 8.0              # m/s
    dt: float = 0.1                 # s between filter updates
    odometry_sigma_v: float = 0.05  # injected odometry noise
    odometry_sigma_omega: float = 0.01
    standstill_scans: int = 10      # scans taken at the start before moving

    def __post_init__(self):
        if self.laps < 1 or self.speed <= 0 or self.dt <= 0 or self.standstill_scans < 1:
            raise ValueError("laps, speed, dt and standstill_scans must be positive")
        if self.odometry_sigma_v < 0 or self.odometry_sigma_omega < 0:
            raise ValueError("odometry noise must be non-negative")


@dataclass
class SlamRunResult:
    landmark_rmse: float
    matched: int
    spurious: int
    missed: int
    final_pose_error: float
    max_pose_error: float
    closures: int
    truth: list
    slam: FastSlam


def landmark_errors(estimated, truth, gate: float = 1.0) -> tuple[float, int, int, int]:
    """Optimal one-to-one matching of estimated to true cones within ``gate`` metres.

    Returns (rmse over matched pairs, matched, spurious estimates, missed truths).
    """
    est = np.array([c.position for c in estimated], dtype=float).reshape(-1, 2)
    tru = np.array([c.position for c in truth], dtype=float).reshape(-1, 2)
    if len(est) == 0 or len(tru) == 0:
        return math.inf, 0, len(est), len(tru)
    d = np.hypot(est[:, None, 0] - tru[None, :, 0], est[:, None, 1] - tru[None, :, 1])
    big = 1e6
    rows, cols = linear_sum_assignment(np.where(d <= gate, d, big))
    ok = d[rows, cols] <= gate
    m = int(ok.sum())
    if m == 0:
        return math.inf, 0, len(est), len(tru)
    rmse = float(math.sqrt(np.mean(d[rows[ok], cols[ok]] ** 2)))
    return rmse, m, len(est) - m, len(tru) - m


def _path_sampler(traj: Trajectory, start: Pose2D):
    """Pose at arc length s along a closed reference, measured from the sample nearest ``start``."""
    i0 = int(np.argmin((traj.x - start.x) ** 2 + (traj.y - start.y) ** 2))
    x = np.roll(traj.x, -i0)
    y = np.roll(traj.y, -i0)
    h = np.unwrap(np.roll(traj.heading, -i0))
    xs = np.append(x, x[0])
    ys = np.append(y, y[0])
    hs = np.append(h, h[0] + 2 * math.pi * round((h[-1] - h[0]) / (2 * math.pi)))
    seg = np.hypot(np.diff(xs), np.diff(ys))
    s_tab = np.concatenate([[0.0], np.cumsum(seg)])
    total = float(s_tab[-1])

    def at(s: float) -> Pose2D:
        lap, r = divmod(s, total)
        return Pose2D(float(np.interp(r, s_tab, xs)), float(np.interp(r, s_tab, ys)),
                      wrap_angle(float(np.interp(r, s_tab, hs))))

    return at, total


def run_scripted_slam(track: TrackMap, slam_cfg: SlamConfig | None = None,
                      sensor_cfg: SensorConfig | None = None, run_cfg: SlamRunConfig | None = None,
                      seed: int = 0, graph_cfg: GraphConfig | None = None) -> SlamRunResult:
    """Drive ``run_cfg.laps`` laps of the planned reference on a closed track with SLAM only.

    The vehicle is moved exactly along the path; the filter sees noisy
    odometry and noisy cone detections. Errors are scored against the truth.
    """
    if not track.closed:
        raise ValueError("scripted SLAM runs need a closed track")
    slam_cfg = slam_cfg or SlamConfig()
    sensor_cfg = sensor_cfg or SensorConfig()
    run_cfg = run_cfg or SlamRunConfig()
    ref = plan_trajectory(track.cones, track.start_pose, PlannerConfig()).trajectory
    at, total = _path_sampler(ref, track.start_pose)
    sensor_rng = np.random.default_rng([seed, 1])
    slam_rng = np.random.default_rng([seed, 2])
    odo_rng = np.random.default_rng([seed, 3])

    prev = at(0.0)
    slam = FastSlam(prev, slam_cfg, slam_rng, graph_cfg)
    slam.initialize([sense(VehicleState(prev), track, sensor_cfg, sensor_rng)
                     for _ in range(run_cfg.standstill_scans)])
    truth = [prev]
    errs = [0.0]
    n_steps = int(math.ceil(run_cfg.laps * total / (run_cfg.speed * run_cfg.dt)))
    for k in range(1, n_steps + 1):
        now = at(min(k * run_cfg.speed * run_cfg.dt, run_cfg.laps * total))
        u = odometry_between(prev, now, run_cfg.dt, slam_cfg.motion_model)
        u = OdometryInput(u.v + odo_rng.normal(0.0, run_cfg.odometry_sigma_v),
                          u.omega + odo_rng.normal(0.0, run_cfg.odometry_sigma_omega), u.dt)
        snap = slam.step(u, sense(VehicleState(now), track, sensor_cfg, sensor_rng))
        truth.append(now)
        errs.append(math.hypot(snap.pose.x - now.x, snap.pose.y - now.y))
        prev = now
    _, cones = slam.estimate()
    rmse, m, spur, miss = landmark_errors(cones, track.cones)
    return SlamRunResult(rmse, m, spur, miss, errs[-1], max(errs), slam.closures, truth, slam)
