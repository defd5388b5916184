"""Receding-horizon centreline search over triangulation midpoints."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..core import Pose2D, wrap_angle
from .reward import RewardWeights, SearchConfig, last_heading, midpoint_reward
from .triangulation import Midpoint, PlanningError


@dataclass
class Centerline:
    """Ordered midpoints chosen by the search; ``cyclic`` marks a closed loop."""

    midpoints: list[Midpoint] = field(default_factory=list)
    cyclic: bool = False

    def __len__(self) -> int:
        return len(self.midpoints)

    def __iter__(self):
        return iter(self.midpoints)

    def __getitem__(self, i):
        return self.midpoints[i]

    @property
    def xy(self) -> np.ndarray:
        return np.array([[m.x, m.y] for m in self.midpoints]).reshape(-1, 2)


class _Gate:
    """Feasible successors of a position given the incoming heading."""

    def __init__(self, midpoints, cfg: SearchConfig):
        self.mids = midpoints
        self.pos = np.array([[m.x, m.y] for m in midpoints]).reshape(-1, 2)
        self.tree = cKDTree(self.pos)
        self.cfg = cfg

    def candidates(self, history, start_heading: float, excluded) -> list[int]:
        cfg = self.cfg
        cur = history[-1]
        h = last_heading(history, start_heading)
        idx = self.tree.query_ball_point(cur, cfg.max_step)
        out = []
        for i in idx:
            if i in excluded:
                continue
            dx, dy = self.pos[i, 0] - cur[0], self.pos[i, 1] - cur[1]
            d = math.hypot(dx, dy)
            if d < 1e-9:
                continue
            if abs(wrap_angle(math.atan2(dy, dx) - h)) > cfg.max_turn:
                continue
            out.append((d, i))
        out.sort()
        return [i for _, i in out[:cfg.max_candidates]]


def _best_value(gate: _Gate, history, start_heading, excluded, depth, weights, cfg) -> float:
    """Maximum cumulative reward over at most ``depth`` further plies."""
    if depth == 0:
        return 0.0
    best = 0.0
    for i in gate.candidates(history, start_heading, excluded):
        m = gate.mids[i]
        r = midpoint_reward(m, history, weights, cfg, start_heading)
        history.append((m.x, m.y))
        excluded.add(i)
        val = r + _best_value(gate, history, start_heading, excluded, depth - 1, weights, cfg)
        excluded.discard(i)
        history.pop()
        if val > best:
            best = val
    return best


def search_centerline(midpoints: list[Midpoint], start: Pose2D, weights: RewardWeights | None = None,
                      cfg: SearchConfig | None = None, max_points: int = 2000) -> Centerline:
    """Greedy walk from ``start``; each move maximises reward over ``horizon_depth`` plies.

    A ply may only reach unvisited midpoints within ``max_step`` and within
    ``max_turn`` of the current direction. The walk stops when nothing is
    reachable, or closes the loop once the first chosen midpoint is reachable
    again after at least four moves.
    """
    weights = weights or RewardWeights()
    cfg = cfg or SearchConfig()
    if not midpoints:
        raise PlanningError("no midpoints to search")
    gate = _Gate(midpoints, cfg)
    history = [(start.x, start.y)]
    visited: set[int] = set()
    chosen: list[int] = []
    cyclic = False
    while len(chosen) < max_points:
        cands = gate.candidates(history, start.theta, visited)
        if len(chosen) >= 4:
            first = chosen[0]
            if first in gate.candidates(history, start.theta, visited - {first}):
                cyclic = True
                break
        if not cands:
            break
        best_i, best_v = None, -math.inf
        for i in cands:
            m = midpoints[i]
            r = midpoint_reward(m, history, weights, cfg, start.theta)
            history.append((m.x, m.y))
            visited.add(i)
            v = r + _best_value(gate, history, start.theta, visited, cfg.horizon_depth - 1, weights, cfg)
            visited.discard(i)
            history.pop()
            if v > best_v:
                best_i, best_v = i, v
        visited.add(best_i)
        chosen.append(best_i)
        history.append((midpoints[best_i].x, midpoints[best_i].y))
        # keep only what the reward model looks at
        if len(history) > cfg.prediction_window + 1:
            history.pop(0)
    if not chosen:
        raise PlanningError("no midpoint reachable from the start pose")
    return Centerline([midpoints[i] for i in chosen], cyclic)
