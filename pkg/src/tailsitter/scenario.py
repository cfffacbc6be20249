"""Scenario files: line-oriented ``section.key = value`` text.

Blank lines and ``#`` comments are ignored. Vectors are comma separated and
waypoint lists separate points with ``;``. A handful of scenario keys may be
written without the ``scenario.`` prefix (``mode = e_tailsitter``).
Assertions live under ``assert.<metric>`` or, to apply to a single mode,
``assert.<mode>.<metric>``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .guidance import FlightPhase, GuidanceGains, OuterConfig, WaypointPlan
from .indi import MODES, AttitudeObjective, IndiConfig, WeightSchedule
from .model import DEG, VehicleParams
from .pivot import PivotGains
from .plant import AeroModel, WindModel


class ParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class ValidationError(ValueError):
    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


PROFILES = ("circuit", "vertical", "hover", "pivot")
START_PHASES = ("GroundedPivotUp", "Hover")

_VEHICLE = {f.name: f.default for f in fields(VehicleParams)}
_AERO = {f.name: f.default for f in fields(AeroModel)}
_GUIDANCE = {f.name: f.default for f in fields(GuidanceGains)}

SCHEMA: dict[str, dict] = {
    "scenario": {"name": "unnamed", "mode": "tre", "seed": 0, "duration": 30.0},
    "vehicle": _VEHICLE,
    "aero": _AERO,
    "pivot": {"k1": 4.0, "k2": 6.0, "ramp_rate": 0.0, "landing_ramp_rate": 0.6,
              "disturbance": 0.0},
    "indi": {"gamma": 1.0e4, "w_v": (10.0, 10.0, 0.1, 1.0), "k_att": (8.0, 8.0, 5.0),
             "k_rate": (20.0, 20.0, 10.0), "band_deg": (-60.0, -30.0), "w_min": 0.001,
             "w_max": 1.0, "thrust_weight": 0.001, "filter_hz": 0.0},
    "outer": {"gamma": 1.0e4, "w_u": (1.0, 1.0, 1.0), "w_v": (100.0, 100.0, 1.0),
              "w_v_forward": (100.0, 100.0, 100.0), "roll_max_deg": 40.0, "hover_pitch_deg": (-55.0, 30.0),
              "forward_pitch_deg": (-110.0, -55.0), "attitude_step": 0.1,
              "thrust_z_range": (0.5, 30.0), "hover_thrust_floor": 4.0, "accel_filter_hz": 8.0},
    "guidance": _GUIDANCE,
    "wind": {"mean": (0.0, 0.0, 0.0), "gust_sigma": (0.0, 0.0, 0.0), "gust_tau": 2.0},
    "mission": {"profile": "hover", "start_phase": "Hover", "start_position": (0.0, 0.0, -2.0),
                "start_euler_deg": (0.0, 0.0, 0.0), "start_theta_deg": -90.0,
                "waypoints": (), "radius": 10.0, "speeds": (16.0,),
                "hover_speed": (3.0, 2.0), "brake_accel": 3.0, "climb_altitude": 10.0,
                "vertical_speed": 1.2, "hold_time": 3.0, "settle_time": 3.0},
    "sim": {"dt": 0.002, "outer_divider": 5, "airspeed_noise": 0.0, "divergence_bound": 1.0e4,
            "stop_after_gate": 0.5},
}

ASSERTIONS = {
    "phase_sequence": "",
    "waypoints_reached": False,
    "gate_reached": False,
    "gate_time_max": 0.0,
    "max_saturation_duty": 0.0,
    "min_descent_saturation": 0.0,
    "descent_climb_ratio_min": 0.0,
    "descent_climb_ratio_max": 0.0,
    "max_hover_error": 0.0,
}

_ALIASES = {"name", "mode", "seed", "duration"}


def _kind(default):
    if isinstance(default, bool):
        return bool
    if isinstance(default, int):
        return int
    if isinstance(default, float) or default is None:
        return float
    if isinstance(default, str):
        return str
    if isinstance(default, tuple) and len(default) == 0:
        return "points"
    return tuple


def _parse_value(text: str, default, key: str):
    kind = _kind(default)
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind is int:
            return int(text)
        if kind is float:
            if default is None and text.lower() == "auto":
                return None
            return float(text)
        if kind is str:
            return text
        if kind == "points":
            if not text.strip():
                return ()
            pts = tuple(tuple(float(v) for v in p.split(",")) for p in text.split(";") if p.strip())
            if any(len(p) != 3 for p in pts):
                raise ValueError("waypoints need three coordinates")
            return pts
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ValidationError(key, f"cannot parse {text!r}: {exc}") from None


def _format_value(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(", ".join(repr(float(v)) for v in p) for p in value)
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


@dataclass
class ScenarioConfig:
    """Fully resolved scenario: every schema key has a value."""

    values: dict = field(default_factory=lambda: copy.deepcopy(SCHEMA))
    assertions: dict = field(default_factory=dict)

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.values == other.values \
            and self.assertions == other.assertions

    def __getitem__(self, dotted: str):
        section, key = dotted.split(".", 1)
        return self.values[section][key]

    # -- accessors ---------------------------------------------------------

    @property
    def name(self) -> str:
        return self.values["scenario"]["name"]

    @property
    def mode(self) -> str:
        return self.values["scenario"]["mode"]

    @property
    def seed(self) -> int:
        return self.values["scenario"]["seed"]

    @property
    def duration(self) -> float:
        return self.values["scenario"]["duration"]

    def vehicle_params(self) -> VehicleParams:
        return VehicleParams(**self.values["vehicle"])

    def aero_model(self) -> AeroModel:
        return AeroModel(**self.values["aero"])

    def pivot_gains(self) -> PivotGains:
        v = self.values["pivot"]
        return PivotGains(v["k1"], v["k2"])

    def guidance_gains(self) -> GuidanceGains:
        return GuidanceGains(**self.values["guidance"])

    def indi_config(self) -> IndiConfig:
        v = self.values["indi"]
        lo, hi = (a * DEG for a in v["band_deg"])
        schedule = WeightSchedule((lo, hi), v["w_min"], v["w_max"], v["thrust_weight"])
        return IndiConfig(v["gamma"], np.array(v["w_v"]), schedule, self.mode)

    def attitude_objective(self) -> AttitudeObjective:
        v = self.values["indi"]
        return AttitudeObjective(k_att=np.array(v["k_att"]), k_rate=np.array(v["k_rate"]))

    def outer_config(self) -> OuterConfig:
        v = self.values["outer"]
        return OuterConfig(v["gamma"], np.array(v["w_u"]), np.array(v["w_v"]), np.array(v["w_v_forward"]),
                           v["roll_max_deg"] * DEG,
                           tuple(a * DEG for a in v["hover_pitch_deg"]), v["attitude_step"],
                           tuple(v["thrust_z_range"]), v["hover_thrust_floor"])

    def wind_model(self) -> WindModel:
        v = self.values["wind"]
        return WindModel(np.array(v["mean"]), np.array(v["gust_sigma"]), v["gust_tau"], self.seed)

    def plan(self) -> WaypointPlan | None:
        m = self.values["mission"]
        if not m["waypoints"]:
            return None
        n = len(m["waypoints"])
        speeds = m["speeds"] if len(m["speeds"]) in (1, n - 1) else m["speeds"][:1]
        return WaypointPlan(np.array(m["waypoints"]), m["radius"], np.array(speeds))

    def active_assertions(self) -> dict:
        """Assertions that apply to the configured mode."""
        out = {}
        for key, val in self.assertions.items():
            parts = key.split(".")
            if len(parts) == 1:
                out.setdefault(key, val)
            elif parts[0] == self.mode:
                out[parts[1]] = val
        return out

    # -- mutation ----------------------------------------------------------

    def set(self, dotted: str, text: str) -> None:
        """Set a key from its text form, validating the key name."""
        section, key = _split_key(dotted)
        if section == "assert":
            parts = key.split(".")
            metric = parts[-1]
            if metric not in ASSERTIONS or len(parts) > 2 or (len(parts) == 2 and parts[0] not in MODES):
                raise ValidationError(dotted, "unknown assertion")
            self.assertions[key] = _parse_value(text, ASSERTIONS[metric], dotted)
            return
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ValidationError(dotted, "unknown key")
        self.values[section][key] = _parse_value(text, SCHEMA[section][key], dotted)

    def validate(self) -> "ScenarioConfig":
        s = self.values["scenario"]
        if s["mode"] not in MODES:
            raise ValidationError("scenario.mode", f"must be one of {', '.join(MODES)}")
        if not s["duration"] > 0:
            raise ValidationError("scenario.duration", "must be positive")
        if s["seed"] < 0:
            raise ValidationError("scenario.seed", "must be non-negative")
        for section, build in (("vehicle", self.vehicle_params), ("aero", self.aero_model),
                               ("pivot", self.pivot_gains), ("guidance", self.guidance_gains),
                               ("wind", self.wind_model)):
            try:
                build()
            except (ValueError, TypeError) as exc:
                raise ValidationError(f"{section}.*", str(exc)) from None
        ind = self.values["indi"]
        for key in ("k_att", "k_rate"):
            if len(ind[key]) != 3 or any(g <= 0 for g in ind[key]):
                raise ValidationError(f"indi.{key}", "needs three positive gains")
        if len(ind["w_v"]) != 4 or any(w < 0 for w in ind["w_v"]):
            raise ValidationError("indi.w_v", "needs four non-negative weights")
        if not ind["gamma"] > 0:
            raise ValidationError("indi.gamma", "must be positive")
        lo, hi = ind["band_deg"] if len(ind["band_deg"]) == 2 else (0, 0)
        if not lo < hi:
            raise ValidationError("indi.band_deg", "needs increasing pair")
        if not 0 < ind["w_min"] <= ind["w_max"]:
            raise ValidationError("indi.w_min", "weights must satisfy 0 < w_min <= w_max")
        if ind["filter_hz"] < 0:
            raise ValidationError("indi.filter_hz", "must be non-negative")
        o = self.values["outer"]
        for key, n in (("w_u", 3), ("w_v", 3), ("w_v_forward", 3), ("hover_pitch_deg", 2), ("forward_pitch_deg", 2),
                       ("thrust_z_range", 2)):
            if len(o[key]) != n:
                raise ValidationError(f"outer.{key}", f"needs {n} values")
        for key in ("hover_pitch_deg", "forward_pitch_deg", "thrust_z_range"):
            if not o[key][0] < o[key][1]:
                raise ValidationError(f"outer.{key}", "needs increasing pair")
        if not (o["roll_max_deg"] > 0 and o["attitude_step"] > 0 and o["gamma"] > 0
                and o["hover_thrust_floor"] >= 0 and o["accel_filter_hz"] >= 0):
            raise ValidationError("outer.roll_max_deg", "outer limits must be positive")
        for key in ("ramp_rate", "landing_ramp_rate"):
            if self.values["pivot"][key] < 0:
                raise ValidationError(f"pivot.{key}", "must be non-negative")
        m = self.values["mission"]
        if m["profile"] not in PROFILES:
            raise ValidationError("mission.profile", f"must be one of {', '.join(PROFILES)}")
        if m["start_phase"] not in START_PHASES:
            raise ValidationError("mission.start_phase", f"must be one of {', '.join(START_PHASES)}")
        if m["profile"] == "circuit":
            try:
                if self.plan() is None:
                    raise ValueError("circuit profile needs waypoints")
            except ValueError as exc:
                raise ValidationError("mission.waypoints", str(exc)) from None
        if not m["radius"] > 0:
            raise ValidationError("mission.radius", "must be positive")
        for key in ("start_position", "start_euler_deg"):
            if len(m[key]) != 3:
                raise ValidationError(f"mission.{key}", "needs three values")
        if len(m["hover_speed"]) != 2 or any(v <= 0 for v in m["hover_speed"]):
            raise ValidationError("mission.hover_speed", "needs positive horizontal and vertical speeds")
        for key in ("brake_accel", "vertical_speed"):
            if not m[key] > 0:
                raise ValidationError(f"mission.{key}", "must be positive")
        for key in ("hold_time", "settle_time"):
            if m[key] < 0:
                raise ValidationError(f"mission.{key}", "must be non-negative")
        sim = self.values["sim"]
        if not sim["dt"] > 0:
            raise ValidationError("sim.dt", "must be positive")
        if sim["outer_divider"] < 1:
            raise ValidationError("sim.outer_divider", "must be a positive integer")
        if sim["airspeed_noise"] < 0 or not sim["divergence_bound"] > 0:
            raise ValidationError("sim.airspeed_noise", "noise must be non-negative and bound positive")
        return self


def _split_key(dotted: str) -> tuple[str, str]:
    dotted = dotted.strip()
    if "." not in dotted:
        if dotted in _ALIASES:
            return "scenario", dotted
        raise ValidationError(dotted, "unknown key")
    return dotted.split(".", 1)


def parse_text(text: str) -> ScenarioConfig:
    cfg = ScenarioConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(lineno, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError(lineno, "missing key")
        cfg.set(key, value)
    return cfg.validate()


def parse_scenario(path) -> ScenarioConfig:
    return parse_text(Path(path).read_text())


def serialize(cfg: ScenarioConfig) -> str:
    lines = []
    for section, keys in cfg.values.items():
        for key, value in keys.items():
            lines.append(f"{section}.{key} = {_format_value(value)}")
    for key, value in cfg.assertions.items():
        lines.append(f"assert.{key} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def canned_scenarios() -> list[str]:
    root = resources.files(__package__) / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".scn"))


def load_canned(name: str) -> ScenarioConfig:
    path = resources.files(__package__) / "scenarios" / f"{name}.scn"
    if not path.is_file():
        raise FileNotFoundError(f"no canned scenario {name!r}")
    return parse_text(path.read_text())


def resolve_scenario(name_or_path: str) -> ScenarioConfig:
    """A path to a scenario file, or the name of a canned scenario."""
    p = Path(name_or_path)
    if p.suffix == ".scn" or p.exists():
        return parse_scenario(p)
    return load_canned(name_or_path)


def phase_names(sequence: str) -> list[FlightPhase]:
    return [FlightPhase[s.strip()] for s in sequence.split(",") if s.strip()]


def wrap_start_euler(cfg: ScenarioConfig) -> tuple[float, float, float]:
    phi, theta, psi = (a * DEG for a in cfg.values["mission"]["start_euler_deg"])
    return phi, theta, (psi + math.pi) % (2 * math.pi) - math.pi
