"""The SLAM front-end/back-end coupling used by the closed loop."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import Cone, ConeObservation, Pose2D
from .fastslam import (ParticleSet, SlamConfig, OdometryInput, best_estimate, best_index,
                       predict, resample, step_increments, update, VERBATIM)
from .graph import GraphConfig, LoopClosureDetector, PoseGraph, optimize_graph


@dataclass(frozen=True)
class SlamSnapshot:
    step: int
    pose: Pose2D
    cones: tuple[Cone, ...]
    ess: float
    degenerate: bool = False
    loop_closed: bool = False
    graph_converged: bool | None = None

    @property
    def n_landmarks(self) -> int:
        return len(self.cones)


class FastSlam:
    """Particle-filter SLAM with pose-graph optimisation at every loop closure.

    The filter keeps the best particle's pose trace, the odometry between
    trace poses and the raw observations. When the vehicle returns to the
    start, a graph is built from the trace and the best particle's map,
    optimised, and written back: the best particle takes the optimised map and
    pose, and every other particle is re-seeded from it.
    """

    def __init__(self, start_pose: Pose2D, cfg: SlamConfig | None = None, rng=None,
                 graph_cfg: GraphConfig | None = None):
        self.cfg = cfg or SlamConfig()
        self.graph_cfg = graph_cfg or GraphConfig()
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.particles = ParticleSet(self.cfg.n_particles, start_pose)
        self.start_pose = start_pose
        self.trace = [start_pose.as_array()]
        self.odometry: list[tuple[float, float]] = []
        self.observations: list[list[ConeObservation]] = [[]]
        self.loop = LoopClosureDetector(start_pose, self.cfg.loop_radius, self.cfg.loop_min_length)
        self.step_count = 0
        self.closures = 0
        self.last_graph: PoseGraph | None = None
        self.snapshots: list[SlamSnapshot] = []
        self._dt = 0.1

    def initialize(self, scans) -> SlamSnapshot:
        """Map one or more scans taken at standstill from the known start pose.

        ``scans`` is a list of observations or a list of such lists. No motion
        step is applied, so every scan constrains the anchored first pose.
        """
        if self.step_count or self.observations[0]:
            raise RuntimeError("initialize must be called once, before the first step")
        scans = list(scans)
        if scans and isinstance(scans[0], ConeObservation):
            scans = [scans]
        for obs in scans:
            update(self.particles, obs, self.cfg, self.rng)
            self.observations[0].extend(obs)
        pose, cones = best_estimate(self.particles)
        snap = SlamSnapshot(0, pose, tuple(cones), self.particles.ess, self.particles.degenerate)
        self.snapshots.append(snap)
        return snap

    def step(self, u: OdometryInput, observations: list[ConeObservation]) -> SlamSnapshot:
        self._dt = u.dt
        predict(self.particles, u, self.cfg, self.rng)
        update(self.particles, observations, self.cfg, self.rng)
        ess = self.particles.ess
        degenerate = self.particles.degenerate
        resample(self.particles, self.cfg, self.rng)
        pose, cones = best_estimate(self.particles)
        self.step_count += 1
        self.trace.append(pose.as_array())
        self.odometry.append(tuple(float(x) for x in step_increments(u.v, u.omega, u.dt, self.cfg.motion_model)))
        self.observations.append(list(observations))
        closed, converged = False, None
        if self.loop(pose):
            closed = True
            self.closures += 1
            if self.cfg.graph_optimization:
                converged = self._close_loop()
                pose, cones = best_estimate(self.particles)
        snap = SlamSnapshot(self.step_count, pose, tuple(cones), ess, degenerate, closed, converged)
        self.snapshots.append(snap)
        return snap

    def estimate(self) -> tuple[Pose2D, list[Cone]]:
        return best_estimate(self.particles)

    # ------------------------------------------------------------------
    def build_graph(self) -> tuple[PoseGraph, np.ndarray]:
        """Graph over the best trace and the best particle's map; returns it with landmark slot ids."""
        i = best_index(self.particles)
        ids, means, _ = self.particles.landmarks_of(i)
        poses = np.array(self.trace)
        n = len(poses)
        me = np.column_stack([np.arange(n - 1), np.arange(1, n), np.array(self.odometry).reshape(-1, 2)])
        rows = []
        for k, obs in enumerate(self.observations):
            if not obs or len(means) == 0:
                continue
            p = poses[k]
            r = np.array([o.range for o in obs])
            b = np.array([o.bearing for o in obs])
            wx = p[0] + r * np.cos(p[2] + b)
            wy = p[1] + r * np.sin(p[2] + b)
            d = np.hypot(means[:, 0][None, :] - wx[:, None], means[:, 1][None, :] - wy[:, None])
            j = np.argmin(d, axis=1)
            ok = d[np.arange(len(obs)), j] < 1.0
            for oi in np.flatnonzero(ok):
                rows.append((k, j[oi], r[oi], b[oi]))
        oe = np.array(rows, dtype=float).reshape(-1, 4)
        cfg = self.cfg
        scale = 1.0 if cfg.motion_model == VERBATIM else 0.5
        dt = self._dt
        sig = (cfg.sigma_v * dt, cfg.sigma_v * dt, 2 * scale * cfg.sigma_omega * dt)
        g = PoseGraph(poses, means, me, oe, sig, cfg.sigma_range, cfg.sigma_bearing)
        return g, ids

    def _close_loop(self) -> bool:
        g, ids = self.build_graph()
        if len(g.observation_edges) == 0:
            return False
        opt = optimize_graph(g, self.graph_cfg)
        self.last_graph = opt
        if not opt.converged:
            return False
        i = best_index(self.particles)
        self.particles.mean[i, ids] = opt.landmarks
        self.particles.poses[i] = opt.poses[-1]
        self.trace = [p for p in opt.poses]
        self.particles.take(np.full(len(self.particles), i))
        return True

    def write_snapshots(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "est_x", "est_y", "est_theta", "n_landmarks", "ess"])
            for s in self.snapshots:
                w.writerow([s.step, f"{s.pose.x:.9g}", f"{s.pose.y:.9g}", f"{s.pose.theta:.9g}",
                            s.n_landmarks, f"{s.ess:.9g}"])
