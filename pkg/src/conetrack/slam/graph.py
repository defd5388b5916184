"""Pose-graph back-end: landmark-observation and pose-motion residuals, and their
weighted least-squares minimisation by damped Gauss-Newton."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from ..core import Pose2D, wrap_angle, wrap_angles


def landmark_residual(p: Pose2D, l, m_r: float, m_theta: float) -> np.ndarray:
    """World landmark rotated into the body frame minus the measured body-frame point."""
    c, s = math.cos(p.theta), math.sin(p.theta)
    dx, dy = l[0] - p.x, l[1] - p.y
    return np.array([c * dx + s * dy - m_r * math.cos(m_theta),
                     -s * dx + c * dy - m_r * math.sin(m_theta)])


def pose_residual(p_prev: Pose2D, p_curr: Pose2D, v: float, omega: float) -> np.ndarray:
    """Motion residual between consecutive poses; ``v`` and ``omega`` are per-step increments.

    The heading component is wrapped so that poses differing by full turns agree.
    """
    return np.array([
        (p_curr.x - p_prev.x) - v * math.cos(p_prev.theta + omega),
        (p_curr.y - p_prev.y) - v * math.sin(p_prev.theta + omega),
        wrap_angle((p_curr.theta - p_prev.theta) - 2.0 * omega),
    ])


def landmark_residuals_and_jacobians(poses, lms, meas):
    """Vectorised observation residuals (K,2) with d/dpose (K,2,3) and d/dlandmark (K,2,2)."""
    th = poses[:, 2]
    c, s = np.cos(th), np.sin(th)
    dx = lms[:, 0] - poses[:, 0]
    dy = lms[:, 1] - poses[:, 1]
    r = np.column_stack([c * dx + s * dy - meas[:, 0] * np.cos(meas[:, 1]),
                         -s * dx + c * dy - meas[:, 0] * np.sin(meas[:, 1])])
    Jp = np.empty((len(th), 2, 3))
    Jp[:, 0, 0], Jp[:, 0, 1], Jp[:, 0, 2] = -c, -s, -s * dx + c * dy
    Jp[:, 1, 0], Jp[:, 1, 1], Jp[:, 1, 2] = s, -c, -c * dx - s * dy
    Jl = np.empty((len(th), 2, 2))
    Jl[:, 0, 0], Jl[:, 0, 1] = c, s
    Jl[:, 1, 0], Jl[:, 1, 1] = -s, c
    return r, Jp, Jl


def pose_residuals_and_jacobians(prev, curr, odo):
    """Vectorised motion residuals (K,3) with d/dprev and d/dcurr (K,3,3)."""
    v, w = odo[:, 0], odo[:, 1]
    phi = prev[:, 2] + w
    r = np.column_stack([curr[:, 0] - prev[:, 0] - v * np.cos(phi),
                         curr[:, 1] - prev[:, 1] - v * np.sin(phi),
                         wrap_angles(curr[:, 2] - prev[:, 2] - 2.0 * w)])
    Jprev = np.zeros((len(v), 3, 3))
    Jprev[:, 0, 0] = -1.0
    Jprev[:, 1, 1] = -1.0
    Jprev[:, 2, 2] = -1.0
    Jprev[:, 0, 2] = v * np.sin(phi)
    Jprev[:, 1, 2] = -v * np.cos(phi)
    Jcurr = np.tile(np.eye(3), (len(v), 1, 1))
    return r, Jprev, Jcurr


@dataclass
class GraphConfig:
    max_iterations: int = 100
    cost_tol: float = 1e-9
    grad_tol: float = 1e-9
    initial_damping: float = 0.0
    max_damping: float = 1e8


@dataclass
class PoseGraph:
    """Poses, landmarks and the two edge classes.

    Motion edges hold ``(prev, curr, v, omega)`` in per-step increments;
    observation edges hold ``(pose, landmark, range, bearing)``.
    """

    poses: np.ndarray
    landmarks: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    motion_edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    observation_edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    motion_sigma: tuple[float, float, float] = (0.05, 0.05, 0.01)
    range_sigma: float = 0.05
    bearing_sigma: float = 0.005
    converged: bool = True
    iterations: int = 0
    cost_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=float).reshape(-1, 3)
        self.landmarks = np.asarray(self.landmarks, dtype=float).reshape(-1, 2)
        self.motion_edges = np.asarray(self.motion_edges, dtype=float).reshape(-1, 4)
        self.observation_edges = np.asarray(self.observation_edges, dtype=float).reshape(-1, 4)
        self.validate()

    def validate(self) -> None:
        n, m = len(self.poses), len(self.landmarks)
        me, oe = self.motion_edges, self.observation_edges
        if len(me) and (me[:, :2].min() < 0 or me[:, :2].max() >= n):
            raise ValueError("motion edge references a missing pose node")
        if len(oe) and (oe[:, 0].min() < 0 or oe[:, 0].max() >= n
                        or oe[:, 1].min() < 0 or oe[:, 1].max() >= m):
            raise ValueError("observation edge references a missing node")

    def copy(self) -> "PoseGraph":
        return replace(self, poses=self.poses.copy(), landmarks=self.landmarks.copy(),
                       motion_edges=self.motion_edges.copy(),
                       observation_edges=self.observation_edges.copy(),
                       cost_history=list(self.cost_history))

    # -- whitening -------------------------------------------------------
    def _motion_whitener(self) -> np.ndarray:
        return np.diag(1.0 / np.asarray(self.motion_sigma, dtype=float))

    def _observation_whiteners(self) -> np.ndarray:
        """Per-edge inverse Cholesky factors of the range/bearing noise mapped to Cartesian."""
        oe = self.observation_edges
        r, b = oe[:, 2], oe[:, 3]
        J = np.empty((len(oe), 2, 2))
        J[:, 0, 0], J[:, 0, 1] = np.cos(b), -r * np.sin(b)
        J[:, 1, 0], J[:, 1, 1] = np.sin(b), r * np.cos(b)
        Q = np.diag([self.range_sigma ** 2, self.bearing_sigma ** 2])
        C = J @ Q @ np.swapaxes(J, 1, 2) + 1e-12 * np.eye(2)
        return np.linalg.inv(np.linalg.cholesky(C))

    def residuals(self, poses=None, landmarks=None, with_jacobians=False):
        poses = self.poses if poses is None else poses
        landmarks = self.landmarks if landmarks is None else landmarks
        me, oe = self.motion_edges, self.observation_edges
        i0, i1 = me[:, 0].astype(int), me[:, 1].astype(int)
        rm, Jprev, Jcurr = pose_residuals_and_jacobians(poses[i0], poses[i1], me[:, 2:4])
        Wm = self._motion_whitener()
        pi, li = oe[:, 0].astype(int), oe[:, 1].astype(int)
        ro, Jp, Jl = landmark_residuals_and_jacobians(poses[pi], landmarks[li], oe[:, 2:4])
        Wo = self._observation_whiteners()
        rm = rm @ Wm.T
        ro = np.einsum("kij,kj->ki", Wo, ro)
        if not with_jacobians:
            return rm, ro
        return rm, ro, (Wm @ Jprev, Wm @ Jcurr, Wo @ Jp, Wo @ Jl)

    def cost(self, poses=None, landmarks=None) -> float:
        """Weighted sum of squared residuals."""
        rm, ro = self.residuals(poses, landmarks)
        return float(np.sum(rm * rm) + np.sum(ro * ro))

    # -- serialisation ---------------------------------------------------
    def to_json(self) -> str:
        return json.dumps({
            "nodes": [{"id": i, "type": "pose", "x": p[0], "y": p[1], "theta": p[2]}
                      for i, p in enumerate(self.poses.tolist())]
                     + [{"id": i, "type": "landmark", "x": l[0], "y": l[1]}
                        for i, l in enumerate(self.landmarks.tolist())],
            "edges": [{"type": "motion", "from": int(e[0]), "to": int(e[1]), "v": e[2], "omega": e[3]}
                      for e in self.motion_edges.tolist()]
                     + [{"type": "observation", "pose": int(e[0]), "landmark": int(e[1]),
                         "range": e[2], "bearing": e[3]} for e in self.observation_edges.tolist()],
            "noise": {"motion_sigma": list(self.motion_sigma), "range_sigma": self.range_sigma,
                      "bearing_sigma": self.bearing_sigma},
        }, indent=1, sort_keys=True)

    def dump(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_json(cls, text: str) -> "PoseGraph":
        d = json.loads(text)
        poses = [(n["x"], n["y"], n["theta"]) for n in d["nodes"] if n["type"] == "pose"]
        lms = [(n["x"], n["y"]) for n in d["nodes"] if n["type"] == "landmark"]
        me = [(e["from"], e["to"], e["v"], e["omega"]) for e in d["edges"] if e["type"] == "motion"]
        oe = [(e["pose"], e["landmark"], e["range"], e["bearing"])
              for e in d["edges"] if e["type"] == "observation"]
        nz = d.get("noise", {})
        return cls(np.array(poses), np.array(lms), np.array(me), np.array(oe),
                   tuple(nz.get("motion_sigma", (0.05, 0.05, 0.01))),
                   nz.get("range_sigma", 0.05), nz.get("bearing_sigma", 0.005))


def _system(g: PoseGraph, poses, landmarks):
    """Stacked whitened residual vector and sparse Jacobian (pose 0 anchored)."""
    n, m = len(poses), len(landmarks)
    me, oe = g.motion_edges, g.observation_edges
    rm, ro, (Jprev, Jcurr, Jp, Jl) = g.residuals(poses, landmarks, with_jacobians=True)
    nvar = 3 * (n - 1) + 2 * m

    def pose_cols(idx):
        return 3 * (idx[:, None] - 1) + np.arange(3)[None, :]

    rows, cols, vals = [], [], []
    k = len(me)
    i0, i1 = me[:, 0].astype(int), me[:, 1].astype(int)
    base = np.arange(k) * 3
    for idx, J in ((i0, Jprev), (i1, Jcurr)):
        rr = np.broadcast_to(base[:, None, None] + np.arange(3)[None, :, None], (k, 3, 3))
        cc = np.broadcast_to(pose_cols(idx)[:, None, :], (k, 3, 3))
        keep = np.broadcast_to((idx > 0)[:, None, None], (k, 3, 3))
        rows.append(rr[keep]); cols.append(cc[keep]); vals.append(J[keep])
    off = 3 * k
    q = len(oe)
    pi, li = oe[:, 0].astype(int), oe[:, 1].astype(int)
    base = off + np.arange(q) * 2
    rr = np.broadcast_to(base[:, None, None] + np.arange(2)[None, :, None], (q, 2, 3))
    cc = np.broadcast_to(pose_cols(pi)[:, None, :], (q, 2, 3))
    keep = np.broadcast_to((pi > 0)[:, None, None], (q, 2, 3))
    rows.append(rr[keep]); cols.append(cc[keep]); vals.append(Jp[keep])
    rr = np.broadcast_to(base[:, None, None] + np.arange(2)[None, :, None], (q, 2, 2))
    cc = np.broadcast_to((3 * (n - 1) + 2 * li[:, None] + np.arange(2)[None, :])[:, None, :], (q, 2, 2))
    rows.append(rr.ravel()); cols.append(cc.ravel()); vals.append(Jl.ravel())
    J = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(off + 2 * q, nvar))
    r = np.concatenate([rm.ravel(), ro.ravel()])
    return r, J


def _apply(poses, landmarks, delta):
    n = len(poses)
    p = poses.copy()
    p[1:] += delta[:3 * (n - 1)].reshape(-1, 3)
    p[:, 2] = wrap_angles(p[:, 2])
    l = landmarks + delta[3 * (n - 1):].reshape(-1, 2)
    return p, l


def optimize_graph(g: PoseGraph, cfg: GraphConfig | None = None) -> PoseGraph:
    """Minimise the weighted squared residuals with pose node 0 held fixed.

    Plain Gauss-Newton steps are tried first; a rejected or singular step
    switches to Levenberg damping (``H + lambda I``), relaxed again after
    accepted steps. If damping runs past ``max_damping`` the input graph is
    returned with ``converged = False``.
    """
    cfg = cfg or GraphConfig()
    out = g.copy()
    out.converged = True
    out.iterations = 0
    if len(g.poses) < 2 or (len(g.motion_edges) == 0 and len(g.observation_edges) == 0):
        out.cost_history = [g.cost()] if len(g.poses) else []
        return out
    poses, lms = g.poses.copy(), g.landmarks.copy()
    cost = g.cost(poses, lms)
    history = [cost]
    lam = cfg.initial_damping
    it = 0
    while it < cfg.max_iterations:
        r, J = _system(g, poses, lms)
        grad = J.T @ r
        if np.max(np.abs(grad), initial=0.0) < cfg.grad_tol:
            break
        H = (J.T @ J).tocsc()
        I = sp.identity(H.shape[0], format="csc")
        while True:
            with np.errstate(all="ignore"), warnings.catch_warnings():
                # singular systems are handled below by raising the damping
                warnings.simplefilter("ignore", MatrixRankWarning)
                try:
                    delta = spsolve(H + lam * I, -grad) if lam > 0 else spsolve(H, -grad)
                except RuntimeError:
                    delta = None
            ok = delta is not None and np.all(np.isfinite(delta))
            if ok:
                new_p, new_l = _apply(poses, lms, delta)
                new_cost = g.cost(new_p, new_l)
                if new_cost <= cost:
                    break
                if new_cost - cost < cfg.cost_tol:
                    # numerically at the minimum
                    new_p, new_l, new_cost = poses, lms, cost
                    break
            lam = max(1e-6, 10.0 * lam)
            if lam > cfg.max_damping:
                bad = g.copy()
                bad.converged = False
                bad.iterations = it
                bad.cost_history = history
                return bad
        it += 1
        change = cost - new_cost
        poses, lms, cost = new_p, new_l, new_cost
        history.append(cost)
        lam = lam / 10.0 if lam > 1e-6 else 0.0
        if abs(change) < cfg.cost_tol:
            break
    out.poses, out.landmarks = poses, lms
    out.iterations = it
    out.cost_history = history
    return out


def path_length(trace) -> float:
    xy = np.array([(p.x, p.y) if isinstance(p, Pose2D) else (p[0], p[1]) for p in trace]).reshape(-1, 2)
    if len(xy) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(xy, axis=0), axis=1).sum())


def detect_loop_closure(trace, start_pose: Pose2D, radius: float = 2.0, min_length: float = 20.0) -> bool:
    """True when the last pose of ``trace`` is back near ``start_pose`` after a long enough drive.

    ``trace`` should hold the poses since the previous closure so that the
    detector fires once per lap.
    """
    if len(trace) == 0:
        raise ValueError("trace must be non-empty")
    last = trace[-1]
    lx, ly = (last.x, last.y) if isinstance(last, Pose2D) else (last[0], last[1])
    near = math.hypot(lx - start_pose.x, ly - start_pose.y) <= radius
    return near and path_length(trace) > min_length


class LoopClosureDetector:
    """Stateful wrapper around :func:`detect_loop_closure` that resets after each firing."""

    def __init__(self, start_pose: Pose2D, radius: float = 2.0, min_length: float = 20.0):
        self.start_pose = start_pose
        self.radius = radius
        self.min_length = min_length
        self._length = 0.0
        self._last = None

    def __call__(self, pose: Pose2D) -> bool:
        if self._last is not None:
            self._length += math.hypot(pose.x - self._last.x, pose.y - self._last.y)
        self._last = pose
        fired = (self._length > self.min_length
                 and math.hypot(pose.x - self.start_pose.x, pose.y - self.start_pose.y) <= self.radius)
        if fired:
            self._length = 0.0
        return fired
