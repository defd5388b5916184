"""Kinematic bicycle referenced at the rear axle."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import Pose2D, VehicleParams

DEFAULT_SLEW = math.radians(200.0)


@dataclass(frozen=True)
class VehicleState:
    pose: Pose2D
    v: float = 0.0
    r: float = 0.0
    steer_actual: float = 0.0

    def __post_init__(self):
        if self.v < 0:
            raise ValueError("vehicle speed must be non-negative")

    def cg(self, vp: VehicleParams) -> np.ndarray:
        """Centre of gravity, ``l_r`` ahead of the rear axle."""
        return self.pose.advanced(vp.l_r).xy


def _deriv(state, v_dot, tan_d, L):
    _, _, th, v = state
    return np.array([v * math.cos(th), v * math.sin(th), v * tan_d / L, v_dot])


def step_vehicle(s: VehicleState, steer_cmd: float, torque_demand: float, vp: VehicleParams,
                 dt: float, slew_rate: float = DEFAULT_SLEW, steer_lag: float = 0.0) -> VehicleState:
    """Advance one step with RK4; steering and acceleration are held over the step.

    The steering actuator follows the command through an optional first-order
    lag (time constant ``steer_lag`` seconds) and a slew-rate limit.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    cmd = min(max(steer_cmd, -vp.max_steer), vp.max_steer)
    if steer_lag > 0:
        cmd = s.steer_actual + (cmd - s.steer_actual) * (1.0 - math.exp(-dt / steer_lag))
    if math.isinf(slew_rate):
        steer = cmd
    else:
        dmax = slew_rate * dt
        steer = s.steer_actual + min(max(cmd - s.steer_actual, -dmax), dmax)
    steer = min(max(steer, -vp.max_steer), vp.max_steer)
    L = vp.wheelbase
    tan_d = math.tan(steer)
    torque = min(max(torque_demand, -1.0), 1.0)
    a_cap = vp.a_long_max if torque >= 0 else vp.a_brake_max
    # the lateral load at the current speed shrinks the longitudinal budget
    a_lat = s.v * s.v * abs(tan_d) / L
    ratio = a_lat / vp.a_lat_max
    accel = torque * a_cap * math.sqrt(max(0.0, 1.0 - ratio * ratio))
    stops = accel < 0 and s.v + accel * dt <= 0
    if stops:
        accel = -s.v / dt  # stop at the end of the step, never reverse
    y0 = np.array([s.pose.x, s.pose.y, s.pose.theta, s.v])
    k1 = _deriv(y0, accel, tan_d, L)
    k2 = _deriv(y0 + 0.5 * dt * k1, accel, tan_d, L)
    k3 = _deriv(y0 + 0.5 * dt * k2, accel, tan_d, L)
    k4 = _deriv(y0 + dt * k3, accel, tan_d, L)
    y = y0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    v = 0.0 if stops else max(0.0, float(y[3]))
    if torque == 0 or accel == 0:
        v = s.v  # keep speed bit-exact when no force acts
    return VehicleState(Pose2D(float(y[0]), float(y[1]), float(y[2])), v, v * tan_d / L, steer)
