"""Scenario configuration: parsing, validation, overrides and the bundled scenarios."""

from __future__ import annotations

import bisect
import copy
import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .control import tuned
from .coordination import Strategy, StrategyError
from .thermal import UnitParams
from .weather import WeatherError, WeatherSeries, load_weather_csv, synth_weather

ALLOCATION_MODES = ("clamp", "redistribute")
FEEDBACK_MODES = ("continuous", "sampled")
DEFICIT_TRACKING = ("live", "held")
A1_SIGNS = ("as-given", "negated")
SYNTH_KEYS = ("base", "amplitude", "period", "depth", "snap", "duration")
UNIT_KEYS = ("unit_id", "R_ext", "R_hs", "C_in", "C_hs", "eta", "k_p", "a0", "a1")


class ScenarioError(ValueError):
    pass


def bundled_names() -> list[str]:
    files = resources.files("fairheat").joinpath("scenarios").iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".json"))


def parse_units(raw) -> list[UnitParams]:
    if isinstance(raw, dict) and "units" in raw:
        raw = raw["units"]
    if not isinstance(raw, list) or not raw:
        raise ScenarioError("units must be a non-empty list")
    units = []
    for i, entry in enumerate(raw, start=1):
        if not isinstance(entry, dict):
            raise ScenarioError(f"unit {i}: expected a mapping")
        unknown = set(entry) - set(UNIT_KEYS)
        if unknown:
            raise ScenarioError(f"unit {i}: unknown keys {sorted(unknown)}")
        kwargs = dict(entry)
        kwargs["unit_id"] = str(kwargs.get("unit_id", i))
        try:
            units.append(UnitParams(**kwargs))
        except TypeError as exc:
            raise ScenarioError(f"unit {i}: {exc}") from None
    return units


@dataclass
class Scenario:
    """Everything needed for one deterministic run.

    ``P_max`` is either a constant (kW) or a piecewise-constant schedule
    given as ``[[t_h, kW], ...]``; each value holds until the next breakpoint.
    ``weather`` is ``{"csv": path}`` (relative paths resolve against
    ``base_dir``) or ``{"synthetic": {...}}`` with :func:`synth_weather`
    keywords.
    """

    units: list
    strategy: Strategy
    P_max: Union[float, list]
    weather: dict
    t0: float = 0.0
    t_end: float = 240.0
    T_c: float = 20.0
    name: str = "scenario"
    coordination_interval: float = 60.0
    output_interval: float = 0.1
    allocation_mode: str = "clamp"
    feedback_mode: str = "continuous"
    deficit_tracking: str = "live"
    a1_sign: str = "as-given"
    tune_controllers: bool = False
    initial_state: Union[str, list] = "auto"
    weather_hold_ends: bool = False
    broadcast_loss: list = field(default_factory=list)
    base_dir: Optional[str] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.units = [u if isinstance(u, UnitParams) else parse_units([u])[0] for u in self.units]
        if not self.units:
            raise ScenarioError("scenario needs at least one unit")
        try:
            self.strategy = Strategy.from_spec(self.strategy)
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"invalid strategy: {exc}") from None
        if not self.t_end > self.t0:
            raise ScenarioError(f"t_end ({self.t_end}) must exceed t0 ({self.t0})")
        if not self.coordination_interval > 0:
            raise ScenarioError("coordination_interval must be > 0")
        if not self.output_interval > 0:
            raise ScenarioError("output_interval must be > 0")
        for key, allowed in (
            ("allocation_mode", ALLOCATION_MODES),
            ("feedback_mode", FEEDBACK_MODES),
            ("deficit_tracking", DEFICIT_TRACKING),
            ("a1_sign", A1_SIGNS),
        ):
            if getattr(self, key) not in allowed:
                raise ScenarioError(f"{key} must be one of {allowed}, got {getattr(self, key)!r}")
        self._schedule = self._parse_schedule(self.P_max)
        self._check_weather_spec()
        self._check_initial_state()
        self._check_broadcast_loss()

    def _parse_schedule(self, P_max):
        if isinstance(P_max, (int, float)) and not isinstance(P_max, bool):
            if not P_max >= 0:
                raise ScenarioError(f"P_max must be >= 0, got {P_max}")
            return [(-math.inf, float(P_max))]
        try:
            points = [(float(t), float(v)) for t, v in P_max]
        except (TypeError, ValueError):
            raise ScenarioError("P_max must be a number or a list of [t_h, kW] pairs") from None
        if not points:
            raise ScenarioError("P_max schedule is empty")
        times = [t for t, _ in points]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ScenarioError("P_max schedule times must increase")
        if times[0] > self.t0:
            raise ScenarioError(f"P_max schedule starts at {times[0]} h, after t0={self.t0} h")
        if any(not v >= 0 for _, v in points):
            raise ScenarioError("P_max must be >= 0 everywhere")
        return points

    def _check_weather_spec(self):
        if not isinstance(self.weather, dict) or len(self.weather) != 1:
            raise ScenarioError('weather must be {"csv": path} or {"synthetic": {...}}')
        (kind, value), = self.weather.items()
        if kind == "synthetic":
            unknown = set(value) - set(SYNTH_KEYS)
            if unknown:
                raise ScenarioError(f"unknown synthetic weather keys {sorted(unknown)}")
        elif kind != "csv":
            raise ScenarioError(f"unknown weather source {kind!r}")

    def _check_initial_state(self):
        if self.initial_state == "auto":
            return
        states = self.initial_state
        if not isinstance(states, list) or len(states) != len(self.units):
            raise ScenarioError('initial_state must be "auto" or one [T_in, T_hs] pair per unit')
        for pair in states:
            if len(pair) != 2 or not all(math.isfinite(float(v)) for v in pair):
                raise ScenarioError(f"invalid initial state {pair!r}")

    def _check_broadcast_loss(self):
        for entry in self.broadcast_loss:
            if set(entry) != {"unit", "t_h", "rounds"}:
                raise ScenarioError('broadcast_loss entries need exactly "unit", "t_h", "rounds"')
            if not 0 <= int(entry["unit"]) < len(self.units):
                raise ScenarioError(f"broadcast_loss unit index {entry['unit']} out of range")
            if int(entry["rounds"]) < 0:
                raise ScenarioError("broadcast_loss rounds must be >= 0")

    def P_max_at(self, t_h: float) -> float:
        times = [t for t, _ in self._schedule]
        return self._schedule[bisect.bisect_right(times, t_h) - 1][1]

    def effective_units(self) -> list[UnitParams]:
        """Units as simulated: ``a1_sign`` applied, then optional retuning."""
        units = self.units
        if self.a1_sign == "negated":
            units = [dataclasses.replace(u, a1=-u.a1) for u in units]
        if self.tune_controllers:
            units = [tuned(u, self.T_c) for u in units]
        return units

    def load_weather(self) -> WeatherSeries:
        (kind, value), = self.weather.items()
        if kind == "synthetic":
            kwargs = dict(value)
            if "snap" in kwargs:
                kwargs["snap"] = tuple(kwargs["snap"])
            return synth_weather(**kwargs)
        path = Path(value)
        if not path.is_absolute() and self.base_dir:
            path = Path(self.base_dir) / path
        if not path.exists():
            raise WeatherError(f"weather file not found: {path}")
        return load_weather_csv(path)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "units": [u.as_dict() for u in self.units],
            "strategy": self.strategy.to_dict(),
            "P_max": self.P_max,
            "weather": copy.deepcopy(self.weather),
            "t0": self.t0,
            "t_end": self.t_end,
            "T_c": self.T_c,
            "coordination_interval": self.coordination_interval,
            "output_interval": self.output_interval,
            "allocation_mode": self.allocation_mode,
            "feedback_mode": self.feedback_mode,
            "deficit_tracking": self.deficit_tracking,
            "a1_sign": self.a1_sign,
            "tune_controllers": self.tune_controllers,
            "initial_state": self.initial_state,
            "weather_hold_ends": self.weather_hold_ends,
            "broadcast_loss": copy.deepcopy(self.broadcast_loss),
        }

    @classmethod
    def from_dict(cls, data: dict, base_dir: Optional[str] = None) -> "Scenario":
        allowed = {f.name for f in dataclasses.fields(cls)} - {"base_dir"}
        unknown = set(data) - allowed
        if unknown:
            raise ScenarioError(f"unknown scenario keys {sorted(unknown)}")
        missing = {"units", "strategy", "P_max", "weather"} - set(data)
        if missing:
            raise ScenarioError(f"missing scenario keys {sorted(missing)}")
        kwargs = dict(data)
        kwargs["units"] = parse_units(data["units"])
        try:
            kwargs["strategy"] = Strategy.from_spec(data["strategy"])
            return cls(base_dir=base_dir, **kwargs)
        except (StrategyError, TypeError, KeyError) as exc:
            raise ScenarioError(str(exc)) from None

    def replace(self, **changes) -> "Scenario":
        data = self.to_dict()
        data.update(changes)
        return Scenario.from_dict(data, base_dir=self.base_dir)


def load_scenario(source: Union[str, os.PathLike]) -> Scenario:
    """Load a scenario from a JSON file path or a bundled scenario name."""
    path = Path(source)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
        base_dir = str(path.resolve().parent)
    elif str(source) in bundled_names():
        text = resources.files("fairheat").joinpath("scenarios", f"{source}.json").read_text(
            encoding="utf-8"
        )
        base_dir = None
    else:
        raise ScenarioError(
            f"scenario {str(source)!r} is neither a file nor a bundled name {bundled_names()}"
        )
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}: invalid JSON ({exc})") from None
    return Scenario.from_dict(data, base_dir=base_dir)


def apply_overrides(scenario: Scenario, assignments: list[str]) -> Scenario:
    """Apply ``key=value`` overrides; values are parsed as JSON when possible.

    Dotted keys reach into nested mappings (``weather.synthetic.depth=12``).
    """
    data = scenario.to_dict()
    for item in assignments:
        key, sep, text = item.partition("=")
        if not sep or not key:
            raise ScenarioError(f"override {item!r} is not of the form key=value")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        parts = key.split(".")
        target = data
        for part in parts[:-1]:
            if not isinstance(target, dict) or part not in target:
                raise ScenarioError(f"unknown override key {key!r}")
            target = target[part]
        if not isinstance(target, dict) or (len(parts) == 1 and parts[0] not in target):
            raise ScenarioError(f"unknown override key {key!r}")
        target[parts[-1]] = value
    return Scenario.from_dict(data, base_dir=scenario.base_dir)
