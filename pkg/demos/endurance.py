"""Ten laps with everything in the loop.

Sensing, colour fusion, FastSLAM with loop closure, planning on the estimated
map, the blended controller and the kinematic vehicle all run together on a
twisty track. The first lap is slow: the car only plans as far as it has seen.
Once the loop closes, the whole track is known and lap times settle.

    python demos/endurance.py [--laps 10] [--seed 0] [--out demo_out/endurance]
"""

import argparse

import numpy as np

from conetrack.sim import ScenarioConfig, run_closed_loop


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--laps", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="demo_out/endurance")
    args = ap.parse_args()

    cfg = ScenarioConfig(track_kind="twisty", track_seed=args.seed, seed=args.seed, slam=True, laps=args.laps)
    res = run_closed_loop(cfg)
    m = res.metrics
    for i, t in enumerate(m.lap_times, 1):
        print(f"lap {i:2d}: {t:7.3f} s")
    if len(m.lap_times) > 2:
        settled = np.array(m.lap_times[2:])
        print(f"laps 3+: mean {settled.mean():.3f} s, std/mean {settled.std() / settled.mean():.2%}")
    print(f"RMS lateral error {m.rms_lateral_error:.3f} m, closest approach to a boundary "
          f"{m.min_dist_to_boundary:.2f} m, DNF {m.dnf} {m.dnf_cause}")
    print(f"replans {res.replans}, loop closures {res.slam.closures}, fusion tally {dict(res.fusion_tally)}")
    res.write(args.out)
    print(f"logs written to {args.out}")


if __name__ == "__main__":
    main()
