"""Landmark SLAM: particle-filter front-end and pose-graph back-end."""

from .fastslam import (CONVENTIONAL, FASTSLAM1, FASTSLAM2, NEW_LANDMARK, VERBATIM, LandmarkEstimate,
                       OdometryInput, Particle, ParticleSet, SlamConfig, associate, best_estimate,
                       expected_measurement, motion_model, odometry_between, predict, resample,
                       step_increments, systematic_indices, update)
from .filter import FastSlam, SlamSnapshot
from .graph import (GraphConfig, LoopClosureDetector, PoseGraph, detect_loop_closure,
                    landmark_residual, optimize_graph, pose_residual)

__all__ = [
    "CONVENTIONAL", "FASTSLAM1", "FASTSLAM2", "NEW_LANDMARK", "VERBATIM", "LandmarkEstimate",
    "OdometryInput", "Particle", "ParticleSet", "SlamConfig", "associate", "best_estimate",
    "expected_measurement", "motion_model", "odometry_between", "predict", "resample",
    "step_increments", "systematic_indices", "update", "FastSlam", "SlamSnapshot", "GraphConfig",
    "LoopClosureDetector", "PoseGraph", "detect_loop_closure", "landmark_residual",
    "optimize_graph", "pose_residual",
]
