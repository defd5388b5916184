"""INI loading for scenario and sweep files.

A scenario file has a ``[scenario]`` section plus optional module sections::

    [scenario]
    track_kind = twisty
    track_seed = 3
    laps = 2
    slam = true

    [track]
    width = 4.5

    [controller]
    k = 5.0

    [planner.search]
    max_turn = 60deg

Section names map onto config dataclasses and keys onto their fields. Angles
may carry a ``deg`` suffix; bare numbers are radians. Unknown sections or keys
are rejected so typos do not pass silently.
"""

from __future__ import annotations

import configparser
import inspect
import math
import types
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .control import ControllerConfig, VARIANTS
from .core import VehicleParams
from .planner import PlannerConfig
from .planner.pipeline import SMOOTHING_MODES
from .planner.reward import RewardWeights, SearchConfig
from .planner.velocity import VelocityLimits
from .sim.loop import ModuleConfigs, ScenarioConfig
from .sim.sensing import SensorConfig
from .sim.slam_run import SlamRunConfig
from .sim.tracks import (TRACK_KINDS, acceleration_track, hairpin_track, ring_track,
                         twisty_track)
from .slam import GraphConfig, SlamConfig


class ConfigError(ValueError):
    """A config file that cannot be turned into valid settings."""


_GENERATORS = {"acceleration": acceleration_track, "ring": ring_track, "twisty": twisty_track,
               "hairpin": hairpin_track}
_SKIP = {"templates"}  # not expressible as a scalar key
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_value(text: str, tp):
    """Coerce one INI value to ``tp`` (bool, int, float, str or an optional of those)."""
    raw = text.strip()
    if typing.get_origin(tp) in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if raw.lower() in ("", "none"):
            return None
        tp = args[0]
    if tp is bool:
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    if tp is int:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"not an integer: {raw!r}") from None
    if tp is float:
        deg = raw.lower().endswith("deg")
        try:
            v = float(raw[:-3] if deg else raw)
        except ValueError:
            raise ConfigError(f"not a number: {raw!r}") from None
        return math.radians(v) if deg else v
    return raw


def _coerce_section(cls, section, context: str) -> dict:
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls)} - _SKIP
    out = {}
    for key, raw in section.items():
        if key not in names:
            raise ConfigError(f"[{context}] unknown key {key!r}")
        try:
            out[key] = parse_value(raw, hints[key])
        except ConfigError as exc:
            raise ConfigError(f"[{context}] {key}: {exc}") from None
    return out


def _build(cls, section, context: str, base=None):
    kw = _coerce_section(cls, section, context)
    try:
        return replace(base, **kw) if base is not None else cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{context}] {exc}") from None


def track_params(kind: str, section) -> tuple:
    """Validate generator keyword arguments for ``kind`` against its signature."""
    if kind not in _GENERATORS:
        raise ConfigError(f"track_kind must be one of {TRACK_KINDS}")
    sig = inspect.signature(_GENERATORS[kind])
    out = []
    for key, raw in section.items():
        p = sig.parameters.get(key)
        if p is None or key == "seed":
            raise ConfigError(f"[track] {kind} tracks take no parameter {key!r}")
        tp = type(p.default) if p.default is not inspect.Parameter.empty else float
        try:
            out.append((key, parse_value(str(raw), tp)))
        except ConfigError as exc:
            raise ConfigError(f"[track] {key}: {exc}") from None
    return tuple(sorted(out))


def _read(path) -> configparser.ConfigParser:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep key case (L_d_min)
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return cp


@dataclass
class Scenario:
    """Everything a scenario file specifies."""
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    modules: ModuleConfigs = field(default_factory=ModuleConfigs)
    slam_run: SlamRunConfig = field(default_factory=SlamRunConfig)


_MODULE_SECTIONS = {
    "controller": ("controller", ControllerConfig),
    "slam": ("slam", SlamConfig),
    "graph": ("graph", GraphConfig),
    "sensor": ("sensor", SensorConfig),
    "vehicle": ("vehicle", VehicleParams),
}
_PLANNER_SECTIONS = {
    "planner.weights": ("weights", RewardWeights),
    "planner.search": ("search", SearchConfig),
    "planner.limits": ("limits", VelocityLimits),
}
SCENARIO_SECTIONS = ("scenario", "track", "planner", "slam_run", *_MODULE_SECTIONS, *_PLANNER_SECTIONS)


def scenario_from_parser(cp: configparser.ConfigParser, base_dir: Path, extra=()) -> Scenario:
    allowed = set(SCENARIO_SECTIONS) | set(extra)
    for name in cp.sections():
        if name not in allowed:
            raise ConfigError(f"unknown section [{name}]")
    sec = dict(cp["scenario"]) if cp.has_section("scenario") else {}
    if sec.get("track_file"):
        p = Path(sec["track_file"])
        sec["track_file"] = str(p if p.is_absolute() else base_dir / p)
    if "track_params" in sec:
        raise ConfigError("[scenario] generator parameters belong in a [track] section")
    kw = _coerce_section(ScenarioConfig, sec, "scenario")
    if cp.has_section("planner") and "smoothing" in cp["planner"]:
        ps = cp["planner"]["smoothing"].strip()
        if kw.setdefault("smoothing", ps) != ps:
            raise ConfigError("[planner] smoothing disagrees with [scenario] smoothing")
    if cp.has_section("track"):
        kw["track_params"] = track_params(kw.get("track_kind", ScenarioConfig.track_kind), cp["track"])
    try:
        scen = ScenarioConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[scenario] {exc}") from None
    if scen.track_file is not None and not Path(scen.track_file).is_file():
        raise ConfigError(f"track file not found: {scen.track_file}")

    mods = ModuleConfigs()
    for name, (attr, cls) in _MODULE_SECTIONS.items():
        if cp.has_section(name):
            setattr(mods, attr, _build(cls, cp[name], name, getattr(mods, attr)))
    planner_kw = {}
    for name, (attr, cls) in _PLANNER_SECTIONS.items():
        if cp.has_section(name):
            planner_kw[attr] = _build(cls, cp[name], name)
    if cp.has_section("planner"):
        for key, raw in cp["planner"].items():
            if key not in ("smoothing", "fit"):
                raise ConfigError(f"[planner] unknown key {key!r}")
            planner_kw[key] = raw.strip()
    try:
        mods.planner = PlannerConfig(**planner_kw)
    except ValueError as exc:
        raise ConfigError(f"[planner] {exc}") from None
    run = _build(SlamRunConfig, cp["slam_run"], "slam_run") if cp.has_section("slam_run") else SlamRunConfig()
    return Scenario(scen, mods, run)


def load_scenario(path) -> Scenario:
    path = Path(path)
    return scenario_from_parser(_read(path), path.parent)


# ----------------------------------------------------------------------
# sweeps

SWEEP_MODES = ("closed_loop", "plan")


@dataclass
class SweepSpec:
    """Axes of a comparison sweep plus the base scenario every run starts from."""
    mode: str
    controllers: tuple[str, ...]
    smoothings: tuple[str, ...]
    seeds: tuple[int, ...]
    base: Scenario
    track_seed_follows_seed: bool = True

    def runs(self) -> list[tuple[str, str, int]]:
        """The cross product keyed (controller, smoothing, seed), in a fixed order."""
        ctrl = self.controllers if self.mode == "closed_loop" else ("-",)
        return [(c, s, seed) for c in ctrl for s in self.smoothings for seed in self.seeds]

    def scenario_for(self, controller: str, smoothing: str, seed: int) -> ScenarioConfig:
        kw = {"smoothing": smoothing, "seed": seed}
        if self.mode == "closed_loop":
            kw["controller"] = controller
        if self.track_seed_follows_seed:
            kw["track_seed"] = seed
        return replace(self.base.scenario, **kw)


def _axis(section, key: str, default, conv) -> tuple:
    if key not in section:
        return tuple(default)
    items = [t for t in section[key].replace(",", " ").split()]
    if not items:
        raise ConfigError(f"[sweep] axis {key!r} is empty")
    try:
        return tuple(conv(t) for t in items)
    except ValueError:
        raise ConfigError(f"[sweep] bad value in {key!r}: {section[key]!r}") from None


def load_sweep(path) -> SweepSpec:
    """Read and fully validate a sweep file; nothing runs unless every cell is valid."""
    path = Path(path)
    cp = _read(path)
    if not cp.has_section("sweep"):
        raise ConfigError("sweep file needs a [sweep] section")
    sw = cp["sweep"]
    known = {"mode", "controllers", "smoothings", "seeds", "track_seed_follows_seed", "scenario"}
    for key in sw:
        if key not in known:
            raise ConfigError(f"[sweep] unknown key {key!r}")
    mode = sw.get("mode", "closed_loop").strip()
    if mode not in SWEEP_MODES:
        raise ConfigError(f"[sweep] mode must be one of {SWEEP_MODES}")
    if "scenario" in sw:
        bp = Path(sw["scenario"].strip())
        bp = bp if bp.is_absolute() else path.parent / bp
        base_cp = _read(bp)
        for name in cp.sections():
            if name == "sweep":
                continue
            if not base_cp.has_section(name):
                base_cp.add_section(name)
            for k, v in cp[name].items():
                base_cp[name][k] = v
        base = scenario_from_parser(base_cp, bp.parent)
    else:
        base = scenario_from_parser(cp, path.parent, extra=("sweep",))
    controllers = _axis(sw, "controllers", (base.scenario.controller,), str)
    smoothings = _axis(sw, "smoothings", (base.scenario.smoothing,), str)
    seeds = _axis(sw, "seeds", (base.scenario.seed,), int)
    follow = parse_value(sw.get("track_seed_follows_seed", "true"), bool)
    for c in controllers:
        if c not in VARIANTS:
            raise ConfigError(f"[sweep] unknown controller {c!r}; expected one of {VARIANTS}")
    for s in smoothings:
        if s not in SMOOTHING_MODES:
            raise ConfigError(f"[sweep] unknown smoothing {s!r}; expected one of {SMOOTHING_MODES}")
    if len(set(seeds)) != len(seeds) or len(set(controllers)) != len(controllers) \
            or len(set(smoothings)) != len(smoothings):
        raise ConfigError("[sweep] axis values must be unique")
    spec = SweepSpec(mode, controllers, smoothings, seeds, base, follow)
    for key in spec.runs():
        try:
            spec.scenario_for(*key)
        except ValueError as exc:
            raise ConfigError(f"run {key}: {exc}") from None
    return spec
