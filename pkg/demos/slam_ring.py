"""Mapping a ring of cones with FastSLAM, then closing the loop.

The car drives two laps of a ring along its planned reference while the
particle filter builds a cone map from noisy range-bearing detections and
noisy odometry. Each time the car passes the start, the best particle's
trajectory and map are handed to the pose-graph optimiser and written back.

    python demos/slam_ring.py [--seed 0] [--proposal fastslam2]
"""

import argparse

from conetrack.sim import SlamRunConfig, ring_track, run_scripted_slam
from conetrack.slam import FASTSLAM1, FASTSLAM2, SlamConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--proposal", choices=(FASTSLAM1, FASTSLAM2), default=FASTSLAM1)
    ap.add_argument("--laps", type=int, default=2)
    args = ap.parse_args()

    track = ring_track()
    res = run_scripted_slam(track, SlamConfig(proposal=args.proposal), run_cfg=SlamRunConfig(laps=args.laps),
                            seed=args.seed)
    print(f"{len(track.cones)} true cones, {res.matched} matched, {res.spurious} spurious, {res.missed} missed")
    print(f"landmark RMSE {res.landmark_rmse:.3f} m")
    print(f"pose error: final {res.final_pose_error:.3f} m, worst {res.max_pose_error:.3f} m")
    print(f"loop closures: {res.closures}")

    # how the estimate evolved: effective sample size and map size every 50 steps
    for snap in res.slam.snapshots[::50]:
        print(f"  step {snap.step:4d}  landmarks {snap.n_landmarks:3d}  ESS {snap.ess:6.1f}"
              f"{'  loop closed' if snap.loop_closed else ''}")
    g = res.slam.last_graph
    if g is not None:
        print(f"last graph: {len(g.poses)} poses, {len(g.landmarks)} landmarks, "
              f"{len(g.observation_edges)} observations, converged {g.converged}")


if __name__ == "__main__":
    main()
