"""Closed-loop simulation: vehicle, sensing, tracks, metrics."""

from .vehicle import VehicleState, step_vehicle
from .sensing import DEFAULT_TEMPLATES, SensorConfig, sense, synth_intensity
from .tracks import (TRACK_KINDS, acceleration_track, generate_track, hairpin_track, ring_track,
                     twisty_track)
from .metrics import RunMetrics, compute_metrics
from .loop import ModuleConfigs, RunResult, ScenarioConfig, StartLine, run_closed_loop
from .slam_run import SlamRunConfig, SlamRunResult, landmark_errors, run_scripted_slam

__all__ = [
    "VehicleState", "step_vehicle", "DEFAULT_TEMPLATES", "SensorConfig", "sense", "synth_intensity",
    "TRACK_KINDS", "acceleration_track", "generate_track", "hairpin_track", "ring_track", "twisty_track",
    "RunMetrics", "compute_metrics", "ModuleConfigs", "RunResult", "ScenarioConfig", "StartLine",
    "run_closed_loop", "SlamRunConfig", "SlamRunResult", "landmark_errors", "run_scripted_slam",
]
