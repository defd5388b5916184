"""Lateral and longitudinal tracking control.

Sign conventions: steering is positive to the left. The cross-track error
``e`` is positive when the path lies to the vehicle's left (the vehicle is to
the right of the path), so a positive ``e`` calls for a positive (left) steer.
The relative yaw ``theta`` is the path heading minus the vehicle heading.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .core import Pose2D, Trajectory, TrajectoryPoint, VehicleParams, wrap_angle

VARIANTS = ("stanley", "pure_pursuit", "combined")


@dataclass(frozen=True)
class ControllerConfig:
    k: float = 5.0           # cross-track gain
    k_soft: float = 1.0      # m/s
    k_v: float = 0.3         # s, look-ahead growth with speed
    L_d_min: float = 2.5     # m
    k_min: float = 0.3
    k_max: float = 0.9
    kappa_ref: float = 0.1   # 1/m
    k_curve: float = 0.5
    k_d_yaw: float = -0.05   # rad per rad/s; negative opposes excess yaw rate
    k_p_long: float = 1.0    # torque demand per m/s
    k_i_long: float = 0.0    # per m, integral term (off by default)
    stanley_front_axle: bool = True
    speed_preview: float = 1.0  # m ahead of the nearest sample used for the speed target

    def __post_init__(self):
        if not 0.0 <= self.k_min <= self.k_max <= 1.0:
            raise ValueError("need 0 <= k_min <= k_max <= 1")
        if self.k_soft <= 0 or self.L_d_min <= 0 or self.kappa_ref <= 0:
            raise ValueError("k_soft, L_d_min and kappa_ref must be positive")
        if self.k_v < 0 or self.k < 0 or self.k_curve < 0 or self.k_p_long < 0 or self.k_i_long < 0:
            raise ValueError("gains must be non-negative (except k_d_yaw)")


@dataclass(frozen=True)
class TrackingState:
    e: float
    theta: float
    v: float
    r_meas: float
    r_traj: float
    kappa_at_lookahead: float
    alpha: float
    L_d: float
    nearest_index: int
    nearest_traj_point: TrajectoryPoint
    lookahead_traj_point: TrajectoryPoint


@dataclass(frozen=True)
class ControlOutput:
    steer: float
    torque_demand: float


def _nearest(traj: Trajectory, p) -> int:
    d2 = (traj.x - p[0]) ** 2 + (traj.y - p[1]) ** 2
    return int(np.argmin(d2))  # argmin returns the lowest index on ties


def _point_at_s(traj: Trajectory, s_cum: np.ndarray, total: float, s: float) -> tuple[TrajectoryPoint, int]:
    """Linearly interpolated trajectory point at arc length ``s`` (wrapped on closed paths)."""
    n = len(traj)
    if traj.closed:
        s = s % total
    elif s > s_cum[-1]:
        # past the end of an open path: continue straight along the final heading
        end = traj.point(n - 1)
        over = s - float(s_cum[-1])
        return TrajectoryPoint(end.x + over * math.cos(end.heading), end.y + over * math.sin(end.heading),
                               end.heading, end.curvature, end.speed), n - 1
    else:
        s = max(s, 0.0)
    i = int(np.searchsorted(s_cum, s, side="right") - 1)
    i = min(max(i, 0), len(s_cum) - 2) if len(s_cum) > 1 else 0
    j = (i + 1) % n
    seg = s_cum[i + 1] - s_cum[i] if len(s_cum) > 1 else 0.0
    f = 0.0 if seg <= 0 else (s - s_cum[i]) / seg
    f = min(max(f, 0.0), 1.0)
    x = traj.x[i] + f * (traj.x[j] - traj.x[i])
    y = traj.y[i] + f * (traj.y[j] - traj.y[i])
    h = traj.heading[i] + f * wrap_angle(traj.heading[j] - traj.heading[i])
    k = traj.curvature[i] + f * (traj.curvature[j] - traj.curvature[i])
    v = traj.speed[i] + f * (traj.speed[j] - traj.speed[i])
    return TrajectoryPoint(float(x), float(y), wrap_angle(h), float(k), float(v)), (j if f > 0.5 else i)


def _cumulative_s(traj: Trajectory) -> np.ndarray:
    seg = traj.segment_lengths
    return np.concatenate([[0.0], np.cumsum(seg)])


def lateral_offset(traj: Trajectory, p, i: int) -> float:
    """Signed distance to the path near sample ``i``; positive when the path is to the left of ``p``."""
    n = len(traj)
    if n == 1:
        h = traj.heading[0]
        return -(-(p[0] - traj.x[0]) * math.sin(h) + (p[1] - traj.y[0]) * math.cos(h))
    best = None
    segs = []
    if traj.closed:
        segs = [((i - 1) % n, i), (i, (i + 1) % n)]
    else:
        if i > 0:
            segs.append((i - 1, i))
        if i < n - 1:
            segs.append((i, i + 1))
    for a, b in segs:
        ax, ay, bx, by = traj.x[a], traj.y[a], traj.x[b], traj.y[b]
        dx, dy = bx - ax, by - ay
        L2 = dx * dx + dy * dy
        if L2 == 0:
            continue
        t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / L2
        # open paths extend straight beyond their end points
        lo = -math.inf if not traj.closed and a == 0 else 0.0
        hi = math.inf if not traj.closed and b == n - 1 else 1.0
        t = min(max(t, lo), hi)
        fx, fy = ax + t * dx, ay + t * dy
        dist = math.hypot(p[0] - fx, p[1] - fy)
        if best is None or dist < best[0]:
            cross = dx * (p[1] - ay) - dy * (p[0] - ax)
            best = (dist, -1.0 if cross > 0 else 1.0)
    if best is None:
        return 0.0
    return best[1] * best[0]


def compute_tracking_state(pose: Pose2D, v: float, r_meas: float, traj: Trajectory,
                           cfg: ControllerConfig, s_cum: np.ndarray | None = None) -> TrackingState:
    """Geometric errors of ``pose`` relative to ``traj`` plus the speed-scheduled look-ahead point."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    p = (pose.x, pose.y)
    i = _nearest(traj, p)
    near = traj.point(i)
    e = lateral_offset(traj, p, i)
    theta = wrap_angle(near.heading - pose.theta)
    if s_cum is None:
        s_cum = _cumulative_s(traj)
    total = float(s_cum[-1])
    L_d = cfg.L_d_min + cfg.k_v * max(v, 0.0)
    ahead, _ = _point_at_s(traj, s_cum, total, float(s_cum[i]) + L_d)
    alpha = wrap_angle(math.atan2(ahead.y - pose.y, ahead.x - pose.x) - pose.theta)
    return TrackingState(e, theta, v, r_meas, near.curvature * v, ahead.curvature, alpha, L_d, i,
                         near, ahead)


def steady_state_yaw(ts: TrackingState, vp: VehicleParams) -> float:
    return vp.mass * ts.r_traj * ts.v / (vp.front_cornering_stiffness * (1.0 + vp.l_f / vp.l_r))


def stanley(ts: TrackingState, vp: VehicleParams, cfg: ControllerConfig) -> float:
    """Unsaturated Stanley steering with the steady-state yaw feedforward."""
    return math.atan(cfg.k * ts.e / (cfg.k_soft + ts.v)) + (ts.theta - steady_state_yaw(ts, vp))


def pure_pursuit(ts: TrackingState, vp: VehicleParams, cfg: ControllerConfig) -> float:
    """Unsaturated pure-pursuit steering toward the look-ahead point."""
    if ts.L_d <= 0:
        raise ValueError("look-ahead distance must be positive")
    return math.atan(2.0 * vp.wheelbase * math.sin(ts.alpha) / ts.L_d)


def pp_weight(kappa: float, cfg: ControllerConfig) -> float:
    """Pure-pursuit share; grows linearly with |kappa| from k_min and saturates at k_max."""
    return min(cfg.k_min + abs(kappa) / cfg.kappa_ref * cfg.k_curve, cfg.k_max)


def saturate(delta: float, vp: VehicleParams) -> float:
    return min(max(delta, -vp.max_steer), vp.max_steer)


def combine(delta_st: float, delta_pp: float, ts: TrackingState, cfg: ControllerConfig,
            vp: VehicleParams | None = None) -> float:
    """Curvature-weighted blend of both laws plus yaw-rate damping, saturated once."""
    k_pp = pp_weight(ts.kappa_at_lookahead, cfg)
    delta = (1.0 - k_pp) * delta_st + k_pp * delta_pp + cfg.k_d_yaw * (ts.r_meas - ts.r_traj)
    return saturate(delta, vp or VehicleParams())


class LongitudinalController:
    """P (optionally PI) speed controller producing a torque demand in [-1, 1]."""

    def __init__(self, cfg: ControllerConfig):
        self.cfg = cfg
        self.integral = 0.0

    def __call__(self, v_meas: float, v_target: float, dt: float = 0.0) -> float:
        err = v_target - v_meas
        u = self.cfg.k_p_long * err
        if self.cfg.k_i_long > 0:
            self.integral += err * dt
            u += self.cfg.k_i_long * self.integral
        return min(max(u, -1.0), 1.0)


def longitudinal(v_meas: float, v_target: float, cfg: ControllerConfig) -> float:
    return min(max(cfg.k_p_long * (v_target - v_meas), -1.0), 1.0)


LOG_FIELDS = ("t", "e", "theta", "alpha", "kappa_ld", "k_pp", "delta_st", "delta_pp", "delta_c",
              "v_target", "v_meas", "torque")


@dataclass(frozen=True)
class ControlLogRow:
    t: float
    e: float
    theta: float
    alpha: float
    kappa_ld: float
    k_pp: float
    delta_st: float
    delta_pp: float
    delta_c: float
    v_target: float
    v_meas: float
    torque: float


class Controller:
    """Full controller for one variant; keeps the longitudinal state and the log."""

    def __init__(self, variant: str = "combined", cfg: ControllerConfig | None = None,
                 vp: VehicleParams | None = None):
        if variant not in VARIANTS:
            raise ValueError(f"controller variant must be one of {VARIANTS}")
        self.variant = variant
        self.cfg = cfg or ControllerConfig()
        self.vp = vp or VehicleParams()
        self.long = LongitudinalController(self.cfg)
        self.log: list[ControlLogRow] = []
        self._traj = None
        self._s_cum = None

    def _prepare(self, traj: Trajectory):
        if traj is not self._traj:
            self._traj = traj
            self._s_cum = _cumulative_s(traj)

    def __call__(self, t: float, pose: Pose2D, v: float, r_meas: float, traj: Trajectory,
                 dt: float = 0.0) -> tuple[ControlOutput, TrackingState]:
        """``pose`` is the rear-axle pose; Stanley uses the front axle unless configured otherwise."""
        self._prepare(traj)
        cfg, vp = self.cfg, self.vp
        ts = compute_tracking_state(pose, v, r_meas, traj, cfg, self._s_cum)
        ts_st = ts
        if cfg.stanley_front_axle:
            ts_st = compute_tracking_state(pose.advanced(vp.wheelbase), v, r_meas, traj, cfg, self._s_cum)
        d_st = stanley(ts_st, vp, cfg)
        d_pp = pure_pursuit(ts, vp, cfg)
        k_pp = pp_weight(ts.kappa_at_lookahead, cfg)
        if self.variant == "stanley":
            delta = saturate(d_st, vp)
        elif self.variant == "pure_pursuit":
            delta = saturate(d_pp, vp)
        else:
            delta = combine(d_st, d_pp, ts, cfg, vp)
        s_near = float(self._s_cum[ts.nearest_index]) + cfg.speed_preview
        v_target = _point_at_s(traj, self._s_cum, float(self._s_cum[-1]), s_near)[0].speed
        torque = self.long(v, v_target, dt)
        self.log.append(ControlLogRow(t, ts_st.e, ts_st.theta, ts.alpha, ts.kappa_at_lookahead, k_pp,
                                      d_st, d_pp, delta, v_target, v, torque))
        return ControlOutput(delta, torque), ts


def write_control_log(rows, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_FIELDS)
        for r in rows:
            w.writerow([f"{getattr(r, f.name):.9g}" for f in fields(ControlLogRow)])
