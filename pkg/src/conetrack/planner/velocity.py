"""Forward-backward speed profile under a friction-ellipse budget."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import Trajectory


@dataclass(frozen=True)
class VelocityLimits:
    a_lat_max: float = 7.0
    a_long_max: float = 6.0
    a_brake_max: float = 8.0
    v_max: float = 15.0
    v_start: float = 0.0

    def __post_init__(self):
        for name in ("a_lat_max", "a_long_max", "a_brake_max", "v_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"VelocityLimits.{name} must be positive")
        if self.v_start < 0:
            raise ValueError("v_start must be non-negative")


def _budget(a_max: float, v: float, kappa: float, a_lat: float) -> float:
    r = v * v * abs(kappa) / a_lat
    return a_max * math.sqrt(max(0.0, 1.0 - r * r))


def curvature_cap(kappa, lim: VelocityLimits) -> np.ndarray:
    k = np.abs(np.asarray(kappa, dtype=float))
    with np.errstate(divide="ignore"):
        cap = np.where(k > 0, np.sqrt(lim.a_lat_max / np.where(k > 0, k, 1.0)), np.inf)
    return np.minimum(lim.v_max, cap)


def velocity_profile(traj: Trajectory, lim: VelocityLimits, closed: bool | None = None,
                     max_sweeps: int = 10, tol: float = 1e-6) -> Trajectory:
    """Return ``traj`` with speeds filled in.

    Speeds start at the curvature cap, then a forward pass limits acceleration
    and a backward pass limits braking, each with the longitudinal budget
    shrunk by the lateral load. Closed tracks repeat both passes around the
    loop until nothing changes; open tracks start from ``v_start``.
    """
    closed = traj.closed if closed is None else closed
    n = len(traj)
    if n == 0:
        raise ValueError("empty trajectory")
    if n == 1:
        return traj.with_speed([min(lim.v_max, lim.v_start)])
    ds = Trajectory(traj.x, traj.y, traj.heading, traj.curvature, closed=closed).segment_lengths
    mean = ds.mean()
    if mean <= 0 or np.any(np.abs(ds - mean) > 0.1 * mean + 1e-12):
        raise ValueError("trajectory samples must be evenly spaced (within 10%)")
    k = traj.curvature
    v = curvature_cap(k, lim)
    a_lat = lim.a_lat_max
    m = len(ds)  # n segments if closed, n-1 if open
    if not closed:
        v[0] = min(v[0], lim.v_start)
        sweeps = 1
    else:
        sweeps = max_sweeps
    for _ in range(sweeps):
        before = v.copy()
        for i in range(m):
            j = (i + 1) % n
            vf = math.sqrt(v[i] ** 2 + 2.0 * _budget(lim.a_long_max, v[i], k[i], a_lat) * ds[i])
            if vf < v[j]:
                v[j] = vf
        for i in range(m - 1, -1, -1):
            j = (i + 1) % n
            vb = math.sqrt(v[j] ** 2 + 2.0 * _budget(lim.a_brake_max, v[j], k[j], a_lat) * ds[i])
            if vb < v[i]:
                v[i] = vb
        if closed and np.max(np.abs(v - before)) < tol:
            break
    return traj.with_speed(v)


def lap_time(traj: Trajectory) -> float:
    """Time to drive the trajectory using trapezoidal mean speeds per segment."""
    n = len(traj)
    if n < 2:
        raise ValueError("need at least two samples to time a trajectory")
    v = traj.speed
    ds = traj.segment_lengths
    interior = v[1:] if not traj.closed else v
    if np.any(interior <= 0):
        raise ValueError("speed profile has a stop; lap time is unbounded")
    vm = 0.5 * (v + np.roll(v, -1))[:len(ds)]
    return float(np.sum(ds / vm))
