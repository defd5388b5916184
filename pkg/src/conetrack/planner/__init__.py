"""Cone-map path planning: triangulation, centreline search, smoothing, fitting, speed profile."""

from .triangulation import Midpoint, PlanningError, triangulate
from .reward import (RewardWeights, SearchConfig, color_score, factor_scores, midpoint_reward,
                     predict_next, track_width_score)
from .search import Centerline, search_centerline
from .smoothing import simplify_opheim, smooth_moving_average
from .fitting import CenterlineSpline, fit_line, fit_spline
from .velocity import VelocityLimits, curvature_cap, lap_time, velocity_profile
from .pipeline import (SMOOTHING_MODES, PlannerConfig, PlanResult, plan_trajectory, smooth_points,
                       trajectory_metrics, write_metrics)

__all__ = [
    "Midpoint", "PlanningError", "triangulate", "RewardWeights", "SearchConfig", "color_score",
    "factor_scores", "midpoint_reward", "predict_next", "track_width_score", "Centerline",
    "search_centerline", "simplify_opheim", "smooth_moving_average", "CenterlineSpline", "fit_line",
    "fit_spline", "VelocityLimits", "curvature_cap", "lap_time", "velocity_profile", "SMOOTHING_MODES",
    "PlannerConfig", "PlanResult", "plan_trajectory", "smooth_points", "trajectory_metrics",
    "write_metrics",
]
