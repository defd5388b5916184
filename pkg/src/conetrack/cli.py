"""Command-line front end.

Exit status is 0 on success (a DNF is a result, not a failure), 1 when the
input is invalid and 2 when a run fails at runtime.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, SweepSpec, load_scenario, load_sweep, track_params
from .core import (TrackFormatError, TrackValidationError, load_track, load_trajectory, save_track,
                   save_trajectory)
from .planner import PlannerConfig, PlanningError, plan_trajectory, trajectory_metrics
from .planner.pipeline import SMOOTHING_MODES
from .sim import compute_metrics, generate_track, run_closed_loop, run_scripted_slam
from .sim.metrics import format_cell
from .sim.tracks import TRACK_KINDS

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this front end reserves 2 for runtime failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=None,
                   help="random seed; overrides the scenario seed (simulate, slam-demo) "
                        "or seeds the generator (gen-track). compare takes seeds from the sweep file")
    g.add_argument("--out", default="results", help="output directory (default: results)")
    g.add_argument("--format", choices=("csv", "json"), default=None, dest="fmt",
                   help="format of metric tables (default: json for single runs, csv for compare)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    p = _Parser(prog="conetrack", description="Cone-track racing stack: simulation, planning and SLAM tools.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser, metavar="COMMAND")

    s = sub.add_parser("simulate", parents=[common], help="run one closed-loop scenario",
                       description="Run a closed-loop scenario and write metrics, per-tick and control logs, "
                                   "the reference trajectory and SLAM snapshots.")
    s.add_argument("scenario", help="scenario INI file")

    s = sub.add_parser("plan", parents=[common], help="plan a trajectory on a track file",
                       description="Plan a reference trajectory on a track CSV and write it with its metrics. "
                                   "Files are suffixed with the smoothing mode.")
    s.add_argument("track", help="track CSV (tag,x,y,color)")
    s.add_argument("--smoothing", choices=SMOOTHING_MODES, default="combined")
    s.add_argument("--fit", choices=("spline", "line"), default="spline")
    s.add_argument("--config", default=None, help="scenario INI whose planner sections are used")

    s = sub.add_parser("slam-demo", parents=[common], help="scripted SLAM run on a scenario's track",
                       description="Drive the scenario's closed track along its reference with SLAM only "
                                   "and score the map and pose estimates. [slam_run] sets laps, speed and noise.")
    s.add_argument("scenario", help="scenario INI file")

    s = sub.add_parser("compare", parents=[common], help="run a controller or smoothing sweep",
                       description="Run the cross product of a sweep file's axes and write one aggregate table, "
                                   "one row per (controller, smoothing, seed).")
    s.add_argument("sweep", help="sweep INI file")
    s.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")

    s = sub.add_parser("gen-track", parents=[common], help="write a generated track CSV",
                       description="Generate a track and write it as <out>/<kind>_<seed>.csv.")
    s.add_argument("kind", choices=TRACK_KINDS)
    s.add_argument("--param", action="append", default=[], metavar="NAME=VALUE",
                   help="generator parameter, repeatable (e.g. --param width=4.5)")

    s = sub.add_parser("metrics", parents=[common], help="recompute metrics from a per-tick log",
                       description="Recompute tracking metrics from a CSV log with t and e columns "
                                   "(ticks.csv or control.csv). Prints the metrics and writes them to --out.")
    s.add_argument("log", help="log CSV")
    s.add_argument("--trajectory", default=None, help="reference trajectory CSV for path metrics")
    s.add_argument("--track", default=None, help="track CSV for boundary clearance (needs cg_x, cg_y)")
    return p


# ----------------------------------------------------------------------
# output helpers

def _jsonable(d: dict) -> dict:
    # NaN is not valid JSON; missing values become null
    return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}


def write_rows(rows: list[dict], path_stem: Path, fmt: str) -> Path:
    """Write a list of flat dicts as CSV or JSON; column order follows the first row."""
    path = path_stem.with_suffix("." + fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path.write_text(json.dumps([_jsonable(r) for r in rows], indent=2) + "\n", encoding="utf-8")
        return path
    keys = list(rows[0]) if rows else []
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([format_cell(r[k]) for k in keys])
    return path


def _write_dict(d: dict, path_stem: Path, fmt: str) -> Path:
    if fmt == "json":
        path = path_stem.with_suffix(".json")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_jsonable(d), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path
    return write_rows([{k: d[k] for k in sorted(d)}], path_stem, fmt)


# ----------------------------------------------------------------------
# commands; each returns a callable that does the work once inputs are valid

def _cmd_simulate(args):
    sc = load_scenario(args.scenario)
    cfg = sc.scenario if args.seed is None else replace(sc.scenario, seed=args.seed)
    track = cfg.load_track()
    fmt = args.fmt or "json"

    def run():
        res = run_closed_loop(cfg, sc.modules, track)
        res.write(args.out, fmt)
        m = res.metrics
        status = f"DNF ({m.dnf_cause})" if m.dnf else f"{len(m.lap_times)} lap(s)"
        print(f"{status}, rms e {m.rms_lateral_error:.4f} m, results in {args.out}")
    return run


def _cmd_plan(args):
    track = load_track(args.track)
    pcfg = load_scenario(args.config).modules.planner if args.config else PlannerConfig()
    pcfg = replace(pcfg, smoothing=args.smoothing, fit=args.fit)
    fmt = args.fmt or "json"

    def run():
        res = plan_trajectory(track.cones, track.start_pose, pcfg)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_trajectory(res.trajectory, out / f"trajectory_{args.smoothing}.csv")
        m = trajectory_metrics(res.trajectory, track)
        m["smoothing"] = args.smoothing
        m["n_points"] = len(res.trajectory)
        _write_dict(m, out / f"metrics_{args.smoothing}", fmt)
        print(f"{args.smoothing}: lap time {m['lap_time']:.3f} s, mean cvr {m['mean_cvr']:.4f}")
    return run


def _cmd_slam_demo(args):
    sc = load_scenario(args.scenario)
    cfg = sc.scenario if args.seed is None else replace(sc.scenario, seed=args.seed)
    track = cfg.load_track()
    if not track.closed:
        raise ConfigError("slam-demo needs a closed track")
    fmt = args.fmt or "json"

    def run():
        res = run_scripted_slam(track, sc.modules.slam, sc.modules.sensor, sc.slam_run, cfg.seed, sc.modules.graph)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        res.slam.write_snapshots(out / "slam.csv")
        with (out / "poses.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "x", "y", "theta", "est_x", "est_y", "est_theta", "error"])
            for snap, p in zip(res.slam.snapshots, res.truth):
                e = math.hypot(snap.pose.x - p.x, snap.pose.y - p.y)
                w.writerow([snap.step] + [f"{v:.9g}" for v in (p.x, p.y, p.theta, snap.pose.x, snap.pose.y,
                                                                snap.pose.theta, e)])
        _, cones = res.slam.estimate()
        with (out / "landmarks.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "color"])
            for c in cones:
                w.writerow([f"{c.x:.9g}", f"{c.y:.9g}", c.color.value])
        summary = {"landmark_rmse": res.landmark_rmse, "matched": res.matched, "spurious": res.spurious,
                   "missed": res.missed, "final_pose_error": res.final_pose_error,
                   "max_pose_error": res.max_pose_error, "loop_closures": res.closures,
                   "n_landmarks": len(cones), "seed": cfg.seed}
        _write_dict(summary, out / "slam_metrics", fmt)
        print(f"landmark rmse {res.landmark_rmse:.4f} m over {res.matched} cones, "
              f"final pose error {res.final_pose_error:.3f} m")
    return run


def _sweep_row(spec: SweepSpec, key) -> dict:
    controller, smoothing, seed = key
    cfg = spec.scenario_for(controller, smoothing, seed)
    mods = spec.base.modules
    if spec.mode == "plan":
        track = cfg.load_track()
        pcfg = replace(mods.planner, smoothing=smoothing)
        row = {"smoothing": smoothing, "seed": seed}
        try:
            traj = plan_trajectory(track.cones, track.start_pose, pcfg).trajectory
            row.update(trajectory_metrics(traj, track))
            row["failed"] = False
        except PlanningError:
            row["failed"] = True
        return row
    m = run_closed_loop(cfg, mods).metrics.flat()
    return {"controller": controller, "smoothing": smoothing, "seed": seed, **{k: m[k] for k in sorted(m)}}


_PLAN_KEYS = ("lap_time", "max_lat_acc", "mean_lat_acc", "std_lat_acc", "max_cvr", "mean_cvr", "std_cvr",
              "min_dist_to_boundary")


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list[dict]:
    """All rows of a sweep in key order, whatever the worker count."""
    keys = spec.runs()
    if jobs > 1 and len(keys) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_sweep_row, [spec] * len(keys), keys))
    else:
        rows = [_sweep_row(spec, k) for k in keys]
    if spec.mode == "plan":
        # failed plans lack metric columns; pad so every row has the same schema
        for r in rows:
            for k in _PLAN_KEYS:
                r.setdefault(k, math.nan)
        rows = [{k: r[k] for k in ("smoothing", "seed", "failed", *_PLAN_KEYS)} for r in rows]
    return rows


def _cmd_compare(args):
    spec = load_sweep(args.sweep)
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    # every track is built up front so a bad generator setting aborts before any run
    for key in spec.runs():
        spec.scenario_for(*key).load_track()
    fmt = args.fmt or "csv"

    def run():
        rows = run_sweep(spec, args.jobs)
        path = write_rows(rows, Path(args.out) / "aggregate", fmt)
        print(f"{len(rows)} runs written to {path}")
    return run


def _cmd_gen_track(args):
    seed = 0 if args.seed is None else args.seed
    section = {}
    for item in args.param:
        if "=" not in item:
            raise ConfigError(f"--param expects NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        section[k.strip()] = v.strip()
    params = dict(track_params(args.kind, section))
    track = generate_track(args.kind, seed, **params)

    def run():
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{args.kind}_{seed}.csv"
        save_track(track, path)
        print(f"{len(track.cones)} cones written to {path}")
    return run


def _read_log(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"log file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or "t" not in rows[0] or "e" not in rows[0]:
        raise ConfigError(f"{path}: log needs 't' and 'e' columns")
    head = rows[0]
    try:
        a = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(head))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if len(a) == 0:
        raise ConfigError(f"{path}: log has no rows")
    return {h: a[:, i] for i, h in enumerate(head)}


def _cmd_metrics(args):
    log = _read_log(args.log)
    track = load_track(args.track) if args.track else None
    if track is not None and not ("cg_x" in log and "cg_y" in log):
        raise ConfigError("--track needs a log with cg_x and cg_y columns")
    closed = track.closed if track is not None else False
    traj = load_trajectory(args.trajectory, closed) if args.trajectory else None
    fmt = args.fmt or "json"

    def run():
        t = log["t"]
        dt = float(np.median(np.diff(t))) if len(t) > 1 else float(t[0])
        xy = np.column_stack([log["cg_x"], log["cg_y"]]) if track is not None else None
        m = compute_metrics(t, log["e"], dt, traj, track, xy)
        d = m.flat()
        print(json.dumps(_jsonable(d), indent=2, sort_keys=True))
        _write_dict(d, Path(args.out) / "metrics", fmt)
    return run


_COMMANDS = {"simulate": _cmd_simulate, "plan": _cmd_plan, "slam-demo": _cmd_slam_demo,
             "compare": _cmd_compare, "gen-track": _cmd_gen_track, "metrics": _cmd_metrics}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        run = _COMMANDS[args.command](args)
    except (ConfigError, TrackFormatError, TrackValidationError, ValueError, OSError) as exc:
        print(f"conetrack {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        run()
    except KeyboardInterrupt:
        raise
    except Exception as exc:  # noqa: BLE001  any failure past validation is a runtime error
        print(f"conetrack {args.command}: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
