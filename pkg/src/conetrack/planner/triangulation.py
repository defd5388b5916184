from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, QhullError

from ..core import Cone


class PlanningError(RuntimeError):
    """The planner cannot produce a path from its input."""


@dataclass(frozen=True)
class Midpoint:
    """Midpoint of one triangulation edge; ``edge_length`` is the local track width."""

    x: float
    y: float
    cone_a: Cone
    cone_b: Cone
    edge_length: float

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


def triangulate(cones: list[Cone]) -> list[Midpoint]:
    """Delaunay-triangulate the cone map and return one midpoint per unique edge."""
    if len(cones) < 3:
        raise PlanningError(f"need at least 3 cones to triangulate, got {len(cones)}")
    pts = np.array([c.position for c in cones])
    try:
        tri = Delaunay(pts)
    except QhullError as exc:
        raise PlanningError("cones are collinear or degenerate") from exc
    edges = set()
    for a, b, c in tri.simplices:
        for i, j in ((a, b), (b, c), (c, a)):
            edges.add((min(i, j), max(i, j)))
    out = []
    for i, j in sorted(edges):
        p = 0.5 * (pts[i] + pts[j])
        out.append(Midpoint(float(p[0]), float(p[1]), cones[i], cones[j],
                            float(np.linalg.norm(pts[i] - pts[j]))))
    return out
