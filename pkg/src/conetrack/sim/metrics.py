"""Run metrics: tracking error statistics, reference-path smoothness and clearance."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..core import TrackMap, Trajectory, boundary_distance
from ..planner.pipeline import trajectory_metrics


@dataclass
class RunMetrics:
    lap_times: list[float] = field(default_factory=list)
    rms_lateral_error: float = 0.0
    itae: float = 0.0
    max_lateral_error: float = 0.0
    max_lat_acc: float = 0.0
    mean_lat_acc: float = 0.0
    std_lat_acc: float = 0.0
    max_cvr: float = 0.0
    mean_cvr: float = 0.0
    std_cvr: float = 0.0
    min_dist_to_boundary: float = 0.0
    dnf: bool = False
    dnf_cause: str = ""
    sim_time: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def flat(self) -> dict:
        """One-row view: lap times collapsed to count, mean and spread."""
        d = self.to_dict()
        laps = d.pop("lap_times")
        d["laps"] = len(laps)
        d["lap_time_mean"] = float(np.mean(laps)) if laps else math.nan
        d["lap_time_std"] = float(np.std(laps)) if laps else math.nan
        return d

    def write_csv(self, path) -> None:
        d = self.flat()
        keys = sorted(d)
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(keys)
            w.writerow([format_cell(d[k]) for k in keys])


def format_cell(v) -> str:
    """Stable text for a CSV cell: floats at 9 significant digits, booleans lower-case."""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def compute_metrics(t, e, dt: float, reference: Trajectory | None = None, track: TrackMap | None = None,
                    driven_xy=None, lap_times=(), eval_speed: float = 5.0) -> RunMetrics:
    """Aggregate a run log.

    ``t`` and ``e`` are the logged times and lateral errors; ITAE is
    sum(t * |e| * dt). Clearance is taken over ``driven_xy`` when given,
    otherwise over the reference path.
    """
    t = np.asarray(t, dtype=float)
    e = np.abs(np.asarray(e, dtype=float))
    if t.size == 0 or t.size != e.size:
        raise ValueError("log must be non-empty with matching t and e")
    m = RunMetrics(lap_times=[float(x) for x in lap_times])
    m.rms_lateral_error = float(math.sqrt(np.mean(e ** 2)))
    m.itae = float(np.sum(t * e) * dt)
    m.max_lateral_error = float(e.max())
    m.sim_time = float(t[-1])
    if reference is not None and len(reference) >= 2:
        speedless = reference.with_speed(np.ones(len(reference)))
        tm = trajectory_metrics(speedless, None, eval_speed)
        for k in ("max_lat_acc", "mean_lat_acc", "std_lat_acc", "max_cvr", "mean_cvr", "std_cvr"):
            setattr(m, k, tm[k])
    if track is not None:
        pts = driven_xy if driven_xy is not None else (reference.xy if reference is not None else None)
        if pts is not None and len(pts):
            m.min_dist_to_boundary = float(boundary_distance(track, np.asarray(pts)).min())
    return m
