"""The closed loop: sense, estimate, plan, control, step."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..control import VARIANTS, Controller, ControllerConfig, lateral_offset, write_control_log
from ..core import (ConeColor, ConeObservation, Pose2D, TrackMap, Trajectory, VehicleParams,
                    boundary_distance, load_track, save_trajectory)
from ..fusion import LidarCluster, Source, classify_intensity, forward_camera, fuse, synthetic_box
from ..planner import PlannerConfig, PlanningError, plan_trajectory
from ..planner.pipeline import SMOOTHING_MODES
from ..slam import FastSlam, GraphConfig, OdometryInput, SlamConfig, odometry_between
from .metrics import RunMetrics, compute_metrics
from .sensing import SensorConfig, sense
from .tracks import TRACK_KINDS, generate_track
from .vehicle import VehicleState, step_vehicle


@dataclass(frozen=True)
class ScenarioConfig:
    track_kind: str = "twisty"
    track_file: str | None = None
    track_seed: int = 0
    laps: int = 1
    dt: float = 0.05
    slam: bool = False
    controller: str = "combined"
    smoothing: str = "combined"
    seed: int = 0
    replan_every: int = 10        # ticks between replans (SLAM mode)
    slam_every: int = 2           # ticks between filter updates
    timeout_per_lap: float = 120.0  # simulated seconds
    odometry_sigma_v: float = 0.05
    odometry_sigma_omega: float = 0.01
    fusion: bool = True
    slew_rate_deg: float = 200.0
    steer_lag: float = 0.0          # s, first-order steering actuator time constant
    standstill_scans: int = 10      # SLAM scans at the start line before launch
    hold_closed_plan: bool = True   # SLAM mode: keep a closed plan until the next loop closure
    track_params: tuple = ()        # (name, value) pairs passed to the track generator

    def __post_init__(self):
        if not 0 < self.dt <= 0.1:
            raise ValueError("dt must lie in (0, 0.1]")
        if self.laps < 1:
            raise ValueError("laps must be >= 1")
        if self.controller not in VARIANTS:
            raise ValueError(f"controller must be one of {VARIANTS}")
        if self.smoothing not in SMOOTHING_MODES:
            raise ValueError(f"smoothing must be one of {SMOOTHING_MODES}")
        if self.track_file is None and self.track_kind not in TRACK_KINDS:
            raise ValueError(f"track_kind must be one of {TRACK_KINDS}")
        if (self.replan_every < 1 or self.slam_every < 1 or self.timeout_per_lap <= 0
                or self.standstill_scans < 1):
            raise ValueError("replan_every, slam_every, timeout_per_lap and standstill_scans must be positive")

    def load_track(self) -> TrackMap:
        if self.track_file is not None:
            return load_track(self.track_file)
        return generate_track(self.track_kind, self.track_seed, **dict(self.track_params))


@dataclass
class ModuleConfigs:
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    slam: SlamConfig = field(default_factory=SlamConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    vehicle: VehicleParams = field(default_factory=VehicleParams)


TICK_FIELDS = ("t", "x", "y", "theta", "v", "steer", "cg_x", "cg_y", "e", "est_x", "est_y", "est_theta",
               "boundary")


@dataclass
class RunResult:
    metrics: RunMetrics
    track: TrackMap
    trajectory: Trajectory | None
    ticks: list[tuple] = field(default_factory=list)
    controller: Controller | None = None
    slam: FastSlam | None = None
    fusion_tally: Counter = field(default_factory=Counter)
    replans: int = 0

    def write(self, out_dir, fmt: str = "json") -> None:
        """Metrics (JSON or CSV), per-tick CSV, control log, trajectory and (if any) SLAM snapshots."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if fmt == "json":
            self.metrics.write_json(out / "metrics.json")
        else:
            self.metrics.write_csv(out / "metrics.csv")
        with (out / "ticks.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TICK_FIELDS)
            for row in self.ticks:
                w.writerow([f"{v:.9g}" for v in row])
        if self.controller is not None:
            write_control_log(self.controller.log, out / "control.csv")
        if self.trajectory is not None:
            save_trajectory(self.trajectory, out / "trajectory.csv")
        if self.slam is not None:
            self.slam.write_snapshots(out / "slam.csv")


class StartLine:
    """Directed line crossing test through a pose, perpendicular to its heading."""

    def __init__(self, pose: Pose2D, half_width: float = 5.0):
        self.pose = pose
        self.half_width = half_width

    def crossing(self, p0, p1) -> float | None:
        """Fraction along p0 -> p1 where the line is crossed forwards, or None."""
        a = self.pose.to_body(p0)
        b = self.pose.to_body(p1)
        if not (a[0] < 0.0 <= b[0]):
            return None
        f = -a[0] / (b[0] - a[0])
        return f if abs(a[1] + f * (b[1] - a[1])) <= self.half_width else None

    def crossed(self, p0, p1) -> bool:
        return self.crossing(p0, p1) is not None


def finish_pose(track: TrackMap) -> Pose2D:
    """Pose at the last cone pair of an open track, facing the direction of travel."""
    l, r = track.left_cones[-1].position, track.right_cones[-1].position
    m = 0.5 * (l + r)
    d = l - r
    return Pose2D(float(m[0]), float(m[1]), math.atan2(-d[0], d[1]))


def _fused_observations(obs, sensor: SensorConfig, cam, tally: Counter) -> list[ConeObservation]:
    """Re-colour detections the way the perception stack would: camera where it sees, intensity elsewhere."""
    out = []
    for o in obs:
        if o.range > sensor.color_visibility_range or o.intensity_layers is None:
            out.append(ConeObservation(o.range, o.bearing, ConeColor.UNKNOWN, o.intensity_layers))
            continue
        bx, by = o.body_xy()
        cluster = LidarCluster((bx, by, 0.16), classify_intensity(o.intensity_layers))
        box = synthetic_box(cam, (bx, by), o.color) if o.color is not ConeColor.UNKNOWN else None
        f = fuse([cluster], [box] if box is not None else [], cam, tally)[0]
        tally[f.source.value] += 1
        if f.source is Source.REJECTED_FALSE_POSITIVE:
            continue
        out.append(ConeObservation(o.range, o.bearing, f.color, o.intensity_layers))
    return out


def _carry(ref_true: Pose2D, ref_est: Pose2D, now_true: Pose2D) -> Pose2D:
    """The filter pose at ``ref_est`` carried forward by the true motion since ``ref_true``."""
    w = ref_est.to_world(ref_true.to_body(now_true.xy))
    return Pose2D(float(w[0]), float(w[1]), ref_est.theta + (now_true.theta - ref_true.theta))


def run_closed_loop(cfg: ScenarioConfig, mods: ModuleConfigs | None = None,
                    track: TrackMap | None = None) -> RunResult:
    """Drive ``cfg.laps`` laps (or to the finish line on open tracks) and collect metrics."""
    mods = mods or ModuleConfigs()
    track = track if track is not None else cfg.load_track()
    vp = mods.vehicle
    sensor_rng = np.random.default_rng([cfg.seed, 1])
    slam_rng = np.random.default_rng([cfg.seed, 2])
    odo_rng = np.random.default_rng([cfg.seed, 3])
    pcfg = mods.planner
    if pcfg.smoothing != cfg.smoothing:
        pcfg = replace(pcfg, smoothing=cfg.smoothing)
    if not track.closed and cfg.track_file is None and cfg.track_kind == "acceleration":
        pcfg = replace(pcfg, fit="line")
    controller = Controller(cfg.controller, mods.controller, vp)
    cam = forward_camera()
    tally: Counter = Counter()
    slew = math.inf if math.isinf(cfg.slew_rate_deg) else math.radians(cfg.slew_rate_deg)

    state = VehicleState(track.start_pose)
    line = StartLine(track.start_pose) if track.closed else StartLine(finish_pose(track))
    target_laps = cfg.laps if track.closed else 1
    timeout = cfg.timeout_per_lap * target_laps

    slam = FastSlam(track.start_pose, mods.slam, slam_rng, mods.graph) if cfg.slam else None
    traj: Trajectory | None = None
    dnf, cause = False, ""
    replans = 0

    def replan(cones, start: Pose2D, v0: float):
        nonlocal traj, replans
        limits = replace(pcfg.limits, v_start=max(0.0, min(v0, pcfg.limits.v_max)))
        res = plan_trajectory(cones, start, replace(pcfg, limits=limits))
        traj = res.trajectory
        replans += 1

    est_pose = track.start_pose
    last_slam_true = state.pose
    last_slam_est = est_pose
    ticks, ts_log, es_log, cg_log = [], [], [], []
    lap_times, last_cross = [], 0.0
    t, k = 0.0, 0
    try:
        if not cfg.slam:
            replan(track.cones, track.start_pose, 0.0)
            # the car is placed on the reference at the start line
            i0 = int(np.argmin((traj.x - track.start_pose.x) ** 2 + (traj.y - track.start_pose.y) ** 2))
            state = VehicleState(Pose2D(float(traj.x[i0]), float(traj.y[i0]), float(traj.heading[i0])))
            if track.closed:
                line = StartLine(state.pose)
        else:
            scans = []
            for _ in range(cfg.standstill_scans):
                obs = sense(state, track, mods.sensor, sensor_rng)
                if cfg.fusion:
                    obs = _fused_observations(obs, mods.sensor, cam, tally)
                scans.append(obs)
            slam.initialize(scans)
            _, cones = slam.estimate()
            replan(cones, track.start_pose, 0.0)
    except (PlanningError, ValueError) as exc:
        dnf, cause = True, f"planner: {exc}"

    while not dnf:
        est_pose = _carry(last_slam_true, last_slam_est, state.pose) if cfg.slam else state.pose
        out, _ = controller(t, est_pose, state.v, state.r, traj, cfg.dt)
        prev = state
        state = step_vehicle(state, out.steer, out.torque_demand, vp, cfg.dt, slew, cfg.steer_lag)
        t += cfg.dt
        k += 1
        cg = state.cg(vp)
        i = int(np.argmin((traj.x - cg[0]) ** 2 + (traj.y - cg[1]) ** 2))
        e = lateral_offset(traj, cg, i)
        bd = float(boundary_distance(track, cg[None, :])[0])
        est_pose = _carry(last_slam_true, last_slam_est, state.pose) if cfg.slam else state.pose
        ticks.append((t, state.pose.x, state.pose.y, state.pose.theta, state.v, state.steer_actual,
                      cg[0], cg[1], e, est_pose.x, est_pose.y, est_pose.theta, bd))
        ts_log.append(t)
        es_log.append(e)
        cg_log.append(cg)
        f = line.crossing(prev.pose.xy, state.pose.xy)
        if f is not None:
            t_cross = t - cfg.dt + f * cfg.dt
            lap_times.append(t_cross - last_cross)
            last_cross = t_cross
            if len(lap_times) >= target_laps:
                break
        if bd < 0:
            dnf, cause = True, "boundary"
            break
        if t > timeout:
            dnf, cause = True, "timeout"
            break
        if cfg.slam and k % cfg.slam_every == 0:
            u = odometry_between(last_slam_true, state.pose, cfg.dt * cfg.slam_every, mods.slam.motion_model)
            u = OdometryInput(u.v + odo_rng.normal(0.0, cfg.odometry_sigma_v),
                              u.omega + odo_rng.normal(0.0, cfg.odometry_sigma_omega), u.dt)
            obs = sense(state, track, mods.sensor, sensor_rng)
            if cfg.fusion:
                obs = _fused_observations(obs, mods.sensor, cam, tally)
            snap = slam.step(u, obs)
            last_slam_true, last_slam_est = state.pose, snap.pose
            # a closed reference over a loop-closed map only changes at the next closure
            settled = cfg.hold_closed_plan and traj is not None and traj.closed and slam.closures > 0
            if snap.loop_closed if settled else k % cfg.replan_every == 0:
                _, cones = slam.estimate()
                try:
                    replan(cones, snap.pose, state.v)
                except (PlanningError, ValueError):
                    pass  # keep driving on the previous plan
    if ts_log:
        m = compute_metrics(ts_log, es_log, cfg.dt, traj, track, np.array(cg_log), lap_times)
    else:
        m = RunMetrics()
    m.dnf, m.dnf_cause = dnf, cause
    return RunResult(m, track, traj, ticks, controller, slam, tally, replans)
