"""Line and cubic-spline fits of the centreline, resampled at even arc length."""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.integrate import cumulative_trapezoid

from ..core import Trajectory
from .triangulation import PlanningError


def fit_line(points, sample_ds: float = 0.5) -> Trajectory:
    """Total-least-squares line through ``points``, sampled every ``sample_ds``.

    The line is oriented from the first input point towards the last and spans
    the projections of all inputs.
    """
    p = np.asarray(points, dtype=float)
    if len(p) < 2:
        raise PlanningError("line fit needs at least 2 points")
    c = p.mean(axis=0)
    q = p - c
    if np.max(np.linalg.norm(q, axis=1)) < 1e-12:
        raise PlanningError("all points coincide; line direction undefined")
    d = np.linalg.svd(q, full_matrices=False)[2][0]
    if np.dot(p[-1] - p[0], d) < 0:
        d = -d
    t = q @ d
    t0, t1 = float(t.min()), float(t.max())
    n = max(1, int(round((t1 - t0) / sample_ds)))
    ts = np.linspace(t0, t1, n + 1)
    xy = c + ts[:, None] * d
    m = len(ts)
    return Trajectory(xy[:, 0], xy[:, 1], np.full(m, np.arctan2(d[1], d[0])), np.zeros(m))


class CenterlineSpline:
    """Cubic spline through ``points`` over cumulative chord length.

    Natural end conditions for open paths, periodic for closed ones (the
    closing chord is added automatically).
    """

    def __init__(self, points, closed: bool = False):
        p = np.asarray(points, dtype=float)
        if len(p) < 4:
            raise PlanningError("spline fit needs at least 4 points")
        if closed:
            p = np.vstack([p, p[:1]])
        chord = np.linalg.norm(np.diff(p, axis=0), axis=1)
        if np.any(chord < 1e-9):
            raise PlanningError("duplicate consecutive points")
        self.closed = closed
        self.points = p
        self.knots = np.concatenate([[0.0], np.cumsum(chord)])
        self._cs = CubicSpline(self.knots, p, bc_type="periodic" if closed else "natural")

    def __call__(self, t, nu: int = 0) -> np.ndarray:
        return self._cs(t, nu)

    def curvature(self, t) -> np.ndarray:
        d1 = self._cs(t, 1)
        d2 = self._cs(t, 2)
        num = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return num / np.hypot(d1[..., 0], d1[..., 1]) ** 3

    def arc_length_table(self, per_segment: int = 40):
        t = np.concatenate([np.linspace(a, b, per_segment, endpoint=False)
                            for a, b in zip(self.knots[:-1], self.knots[1:])] + [self.knots[-1:]])
        sp = np.linalg.norm(self._cs(t, 1), axis=1)
        return t, cumulative_trapezoid(sp, t, initial=0.0)

    def resample(self, sample_ds: float) -> Trajectory:
        t_tab, s_tab = self.arc_length_table()
        length = s_tab[-1]
        n = max(1, int(round(length / sample_ds)))
        if self.closed:
            s = np.arange(n) * (length / n)
        else:
            s = np.linspace(0.0, length, n + 1)
        t = np.interp(s, s_tab, t_tab)
        xy = self._cs(t)
        d1 = self._cs(t, 1)
        return Trajectory(xy[:, 0], xy[:, 1], np.arctan2(d1[:, 1], d1[:, 0]), self.curvature(t),
                          closed=self.closed)


def fit_spline(points, closed: bool = False, sample_ds: float = 0.5) -> Trajectory:
    """C2 cubic-spline fit resampled at (near) ``sample_ds`` spacing with heading and curvature."""
    return CenterlineSpline(points, closed).resample(sample_ds)
