"""Reward factors for choosing successive centreline midpoints."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import ConeColor, wrap_angle
from .triangulation import Midpoint


@dataclass(frozen=True)
class RewardWeights:
    w_color: float = 3.0
    w_width: float = 5.0
    w_angle: float = 2.0
    w_distance: float = 1.0
    w_prediction: float = 0.5

    def __post_init__(self):
        w = self.as_array()
        if np.any(w < 0) or not np.any(w > 0):
            raise ValueError("reward weights must be non-negative with at least one positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.w_color, self.w_width, self.w_angle, self.w_distance, self.w_prediction])

    @property
    def total(self) -> float:
        return float(self.as_array().sum())


@dataclass(frozen=True)
class SearchConfig:
    horizon_depth: int = 3
    max_step: float = 4.0
    max_turn: float = math.radians(60.0)
    target_step: float = 2.5
    step_sigma: float = 1.0
    prediction_sigma: float = 1.0
    prediction_window: int = 3
    max_candidates: int = 8
    smoothing_window: int = 3
    opheim_min_tol: float = 0.7
    opheim_max_tol: float = 8.0
    sample_ds: float = 0.5

    def __post_init__(self):
        if self.horizon_depth < 1:
            raise ValueError("horizon_depth must be >= 1")
        for name in ("max_step", "max_turn", "target_step", "step_sigma", "prediction_sigma",
                     "prediction_window", "max_candidates", "smoothing_window", "opheim_min_tol",
                     "opheim_max_tol", "sample_ds"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SearchConfig.{name} must be positive")


WIDTH_LOW, WIDTH_HIGH, WIDTH_SIGMA = 3.0, 5.0, 0.4


def track_width_score(w: float, printed_upper_branch: bool = False) -> float:
    """Plateau of 1 on [3, 5] m with Gaussian fall-off to -0.3 on both sides.

    ``printed_upper_branch`` evaluates the w > 5 branch around 3 m instead of
    5 m, which makes the score jump at 5 m.
    """
    if w < 0:
        raise ValueError("track width must be non-negative")
    if WIDTH_LOW <= w <= WIDTH_HIGH:
        return 1.0
    center = WIDTH_LOW if (w < WIDTH_LOW or printed_upper_branch) else WIDTH_HIGH
    return 1.3 * math.exp(-(((w - center) / WIDTH_SIGMA) ** 2) / 2.0) - 0.3


def _gauss(x: float, sigma: float) -> float:
    return math.exp(-0.5 * (x / sigma) ** 2)


def color_score(candidate: Midpoint, direction) -> float:
    """+1 for blue-left/yellow-right of travel, 0 if a colour is missing, -1 otherwise."""
    a, b = candidate.cone_a, candidate.cone_b
    known = (ConeColor.BLUE, ConeColor.YELLOW)
    if a.color not in known or b.color not in known:
        return 0.0
    dx, dy = direction
    ax, ay = a.x - candidate.x, a.y - candidate.y
    left, right = (a, b) if dx * ay - dy * ax > 0 else (b, a)
    if left.color is ConeColor.BLUE and right.color is ConeColor.YELLOW:
        return 1.0
    return -1.0


def predict_next(history, start_heading: float, cfg: SearchConfig) -> np.ndarray:
    """Constant-turn extrapolation from the trailing ``prediction_window`` points."""
    pts = np.asarray(history[-cfg.prediction_window:], dtype=float)
    last = pts[-1]
    if len(pts) == 1:
        h, step = start_heading, cfg.target_step
    else:
        d = np.diff(pts, axis=0)
        headings = np.arctan2(d[:, 1], d[:, 0])
        step = float(np.mean(np.hypot(d[:, 0], d[:, 1])))
        turn = 0.0
        if len(headings) > 1:
            turn = float(np.mean([wrap_angle(b - a) for a, b in zip(headings[:-1], headings[1:])]))
        h = headings[-1] + turn
    return last + step * np.array([math.cos(h), math.sin(h)])


def last_heading(history, start_heading: float) -> float:
    if len(history) < 2:
        return start_heading
    (x0, y0), (x1, y1) = history[-2], history[-1]
    return math.atan2(y1 - y0, x1 - x0)


def factor_scores(candidate: Midpoint, history, start_heading: float, cfg: SearchConfig) -> np.ndarray:
    """The five factor scores (colour, width, angle, distance, prediction), each in [-1, 1]."""
    cur = history[-1]
    d = (candidate.x - cur[0], candidate.y - cur[1])
    step = math.hypot(*d)
    turn = wrap_angle(math.atan2(d[1], d[0]) - last_heading(history, start_heading)) if step > 0 else 0.0
    pred = predict_next(history, start_heading, cfg)
    return np.array([
        color_score(candidate, d),
        min(1.0, max(-1.0, track_width_score(candidate.edge_length))),
        _gauss(turn, cfg.max_turn / 2.0),
        _gauss(step - cfg.target_step, cfg.step_sigma),
        _gauss(math.hypot(candidate.x - pred[0], candidate.y - pred[1]), cfg.prediction_sigma),
    ])


def midpoint_reward(candidate: Midpoint, history, weights: RewardWeights, cfg: SearchConfig,
                    start_heading: float = 0.0) -> float:
    """Weighted sum of the factor scores.

    ``history`` holds the centreline so far (at least the current position);
    ``start_heading`` stands in for the travel direction while it has one point.
    """
    if len(history) == 0:
        raise ValueError("history must contain the current position")
    return float(weights.as_array() @ factor_scores(candidate, history, start_heading, cfg))
