"""Seeded cone-track generators."""

from __future__ import annotations

import math

import numpy as np

from ..core import Cone, ConeColor, Pose2D, TrackMap

TRACK_KINDS = ("acceleration", "ring", "twisty", "hairpin")


def _cones_from_centerline(c: np.ndarray, width: float, closed: bool) -> tuple[list[Cone], list[Cone]]:
    """Blue cones on the left and yellow on the right of centreline stations ``c``."""
    if closed:
        t = np.roll(c, -1, axis=0) - np.roll(c, 1, axis=0)
    else:
        t = np.gradient(c, axis=0)
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    n = np.column_stack([-t[:, 1], t[:, 0]])
    left = c + 0.5 * width * n
    right = c - 0.5 * width * n
    return ([Cone(float(x), float(y), ConeColor.BLUE) for x, y in left],
            [Cone(float(x), float(y), ConeColor.YELLOW) for x, y in right])


def _resample_closed(curve: np.ndarray, spacing: float) -> np.ndarray:
    seg = np.linalg.norm(np.diff(np.vstack([curve, curve[:1]]), axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    n = int(math.ceil(s[-1] / spacing))
    q = np.arange(n) * (s[-1] / n)
    closed = np.vstack([curve, curve[:1]])
    return np.column_stack([np.interp(q, s, closed[:, 0]), np.interp(q, s, closed[:, 1])])


def _check(width: float, spacing: float) -> None:
    if not 3.0 <= width <= 5.0:
        raise ValueError("track width must lie in [3, 5] m")
    if not 0 < spacing <= 5.0:
        raise ValueError("cone spacing must lie in (0, 5] m")


def acceleration_track(length: float = 75.0, width: float = 4.0, spacing: float = 5.0) -> TrackMap:
    _check(width, spacing)
    if length <= spacing:
        raise ValueError("track length must exceed the cone spacing")
    n = int(math.ceil(length / spacing))
    x = np.linspace(0.0, length, n + 1)
    c = np.column_stack([x, np.zeros_like(x)])
    left, right = _cones_from_centerline(c, width, closed=False)
    return TrackMap(left, right, start_pose=Pose2D(0.0, 0.0, 0.0), closed=False, generated=True)


def ring_track(radius: float = 20.0, width: float = 4.0, spacing: float = 4.0) -> TrackMap:
    """Counter-clockwise ring: blue on the inner circle, yellow outside; starts at the bottom heading +x."""
    _check(width, spacing)
    if radius - width / 2 < 2.0:
        raise ValueError("ring radius too small for the track width")
    n = int(math.ceil(2 * math.pi * (radius + width / 2) / spacing))
    phi = -math.pi / 2 + 2 * math.pi * np.arange(n) / n
    ri, ro = radius - width / 2, radius + width / 2
    left = [Cone(ri * math.cos(p), ri * math.sin(p), ConeColor.BLUE) for p in phi]
    right = [Cone(ro * math.cos(p), ro * math.sin(p), ConeColor.YELLOW) for p in phi]
    return TrackMap(left, right, start_pose=Pose2D(0.0, -radius, 0.0), closed=True, generated=True)


def _radius_of_curvature(c: np.ndarray) -> np.ndarray:
    d1 = (np.roll(c, -1, axis=0) - np.roll(c, 1, axis=0)) / 2
    d2 = np.roll(c, -1, axis=0) - 2 * c + np.roll(c, 1, axis=0)
    k = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / np.hypot(d1[:, 0], d1[:, 1]) ** 3
    return 1.0 / np.maximum(np.abs(k), 1e-12)


def twisty_track(seed: int = 0, base_radius: float = 32.0, width: float = 4.0, spacing: float = 4.0,
                 min_radius: float = 10.0, harmonics: int = 4, amplitude: float = 0.18,
                 jitter: float = 0.1) -> TrackMap:
    """Closed twisty loop: a circle whose radius is perturbed by random low-order harmonics.

    Draws are repeated (deterministically from ``seed``) until the centreline's
    tightest turn is at least ``min_radius``; the amplitude shrinks if that
    takes too long, so generation always terminates. Cones are then displaced
    by Gaussian placement error of std ``jitter`` (metres).
    """
    _check(width, spacing)
    if min_radius < width / 2 + 1.0:
        raise ValueError("min_radius must leave room for half the track width")
    rng = np.random.default_rng(seed)
    phi = np.linspace(0.0, 2 * math.pi, 2000, endpoint=False)
    amp = amplitude
    for attempt in range(200):
        k = np.arange(2, harmonics + 2)
        a = rng.uniform(0.3, 1.0, len(k)) * amp / np.sqrt(k)
        p = rng.uniform(0, 2 * math.pi, len(k))
        r = base_radius * (1.0 + (a[:, None] * np.cos(k[:, None] * phi[None, :] + p[:, None])).sum(axis=0))
        c = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
        if np.min(r) > min_radius and np.min(_radius_of_curvature(c)) >= min_radius:
            break
        if attempt % 20 == 19:
            amp *= 0.8
    else:  # pragma: no cover - amplitude decay makes this unreachable in practice
        raise ValueError("could not generate a twisty track with the requested minimum radius")
    stations = _resample_closed(c, spacing)
    # start on the lowest point of the loop so every seed starts in a comparable place
    i0 = int(np.argmin(stations[:, 1]))
    stations = np.roll(stations, -i0, axis=0)
    left, right = _cones_from_centerline(stations, width, closed=True)
    if jitter > 0:
        e = rng.normal(0.0, jitter, (2, len(stations), 2))
        left = [Cone(c.x + dx, c.y + dy, c.color) for c, (dx, dy) in zip(left, e[0])]
        right = [Cone(c.x + dx, c.y + dy, c.color) for c, (dx, dy) in zip(right, e[1])]
    t = stations[1] - stations[-1]
    start = Pose2D(float(stations[0, 0]), float(stations[0, 1]), math.atan2(t[1], t[0]))
    return TrackMap(left, right, start_pose=start, closed=True, generated=True)


def hairpin_track(straight: float = 40.0, turn_radius: float = 7.0, width: float = 4.0,
                  spacing: float = 3.0) -> TrackMap:
    """Closed stadium loop with two tight hairpins joined by straights."""
    _check(width, spacing)
    if turn_radius < width / 2 + 1.0:
        raise ValueError("hairpin radius below half the track width")
    n_arc = 400
    a1 = np.linspace(-math.pi / 2, math.pi / 2, n_arc, endpoint=False)
    a2 = np.linspace(math.pi / 2, 3 * math.pi / 2, n_arc, endpoint=False)
    xs = np.linspace(0.0, straight, n_arc, endpoint=False)
    c = np.vstack([
        np.column_stack([xs, np.full(n_arc, -turn_radius)]),
        np.column_stack([straight + turn_radius * np.cos(a1), turn_radius * np.sin(a1)]),
        np.column_stack([straight - xs, np.full(n_arc, turn_radius)]),
        np.column_stack([turn_radius * np.cos(a2), turn_radius * np.sin(a2)]),
    ])
    stations = _resample_closed(c, spacing)
    left, right = _cones_from_centerline(stations, width, closed=True)
    return TrackMap(left, right, start_pose=Pose2D(0.0, -turn_radius, 0.0), closed=True, generated=True)


def generate_track(kind: str, seed: int = 0, **params) -> TrackMap:
    """Build a track of the given kind; ``params`` go to the matching generator."""
    if kind == "acceleration":
        track = acceleration_track(**params)
    elif kind == "ring":
        track = ring_track(**params)
    elif kind == "twisty":
        track = twisty_track(seed=seed, **params)
    elif kind == "hairpin":
        track = hairpin_track(**params)
    else:
        raise ValueError(f"unknown track kind {kind!r}; expected one of {TRACK_KINDS}")
    track.validate()
    return track
