"""Moving-average smoothing and Opheim polyline simplification."""

from __future__ import annotations

import numpy as np


def smooth_moving_average(points, window: int, closed: bool = False) -> np.ndarray:
    """Replace each point by the mean of its ``window`` neighbourhood.

    Open paths keep both endpoints and shrink the window symmetrically near
    them; closed paths wrap around.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    p = np.asarray(points, dtype=float)
    n = len(p)
    h = window // 2
    if h == 0 or n < 3:
        return p.copy()
    if closed:
        idx = (np.arange(n)[:, None] + np.arange(-h, h + 1)[None, :]) % n
        return p[idx].mean(axis=1)
    out = p.copy()
    for i in range(1, n - 1):
        k = min(h, i, n - 1 - i)
        out[i] = p[i - k:i + k + 1].mean(axis=0)
    return out


def _ray_distance(p, a, d):
    """Perpendicular distance of ``p`` from the ray starting at ``a`` with unit direction ``d``."""
    v = p - a
    return abs(v[0] * d[1] - v[1] * d[0])


def simplify_opheim(points, min_tol: float, max_tol: float) -> np.ndarray:
    """Opheim simplification; returns the kept points (a subsequence, endpoints included).

    From each key point, the ray runs through the first later point farther
    than ``min_tol``. Following points are skipped while they stay within
    ``min_tol`` of that ray and within ``max_tol`` of the key; the last such
    point becomes the next key.
    """
    if not min_tol < max_tol:
        raise ValueError("min_tol must be smaller than max_tol")
    p = np.asarray(points, dtype=float)
    n = len(p)
    if n <= 2:
        return p.copy()
    keep = [0]
    key = 0
    while key < n - 1:
        a = p[key]
        j = key + 1
        # points inside the min_tol disc around the key are skipped outright
        while j < n - 1 and np.linalg.norm(p[j] - a) <= min_tol:
            j += 1
        if np.linalg.norm(p[j] - a) > max_tol:
            # even the ray point is too far: step to its predecessor if there is one
            key = max(j - 1, key + 1)
            keep.append(key)
            continue
        if j == n - 1:
            keep.append(j)
            break
        d = (p[j] - a) / np.linalg.norm(p[j] - a)
        last = j
        k = j + 1
        while k < n:
            if np.linalg.norm(p[k] - a) > max_tol or _ray_distance(p[k], a, d) > min_tol:
                break
            last = k
            k += 1
        keep.append(last)
        key = last
    return p[keep]
