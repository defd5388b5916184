"""Why the centreline search looks more than one midpoint ahead.

A single stray blue cone inside the lane near the start creates Delaunay
midpoints that score well for one step but lead into a dead end. A greedy
search (horizon 1) walks into them; with a horizon of three midpoints the
search sees the poor rewards behind the detour and stays on the lane centre.

    python demos/horizon_search.py
"""

from conetrack.core import Cone, ConeColor, Pose2D
from conetrack.planner import RewardWeights, SearchConfig, search_centerline, triangulate


def corridor(n_pairs=8, spacing=3.0, width=4.0):
    cones = []
    for k in range(n_pairs):
        cones.append(Cone(k * spacing, width / 2, ConeColor.BLUE))
        cones.append(Cone(k * spacing, -width / 2, ConeColor.YELLOW))
    return cones


def main():
    cones = corridor() + [Cone(1.5, 1.0, ConeColor.BLUE)]  # the stray cone
    mids = triangulate(cones)
    start = Pose2D(-1.0, 0.0, 0.0)
    print(f"{len(cones)} cones give {len(mids)} candidate midpoints")
    for depth in (1, 2, 3, 4):
        line = search_centerline(mids, start, RewardWeights(), SearchConfig(horizon_depth=depth))
        path = " ".join(f"({m.x:.1f},{m.y:+.1f})" for m in line[:6])
        off = max(abs(m.y) for m in line)
        print(f"depth {depth}: {path} ...  max offset from centre {off:.2f} m")


if __name__ == "__main__":
    main()
