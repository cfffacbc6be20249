"""Simulation and control of a tilt-rotor tailsitter with elevons."""

from .guidance import FlightPhase, GuidanceGains, OuterConfig
from .indi import IndiConfig
from .model import ACTUATOR_NAMES, VehicleParams
from .plant import AeroModel
from .report import RunReport, build_report, check_assertions
from .scenario import ScenarioConfig, canned_scenarios, load_canned, parse_scenario, resolve_scenario
from .sim import ConfigError, NumericalDivergence, simulate_scenario
from .telemetry import TelemetryLog

__all__ = [
    "ACTUATOR_NAMES", "AeroModel", "ConfigError", "FlightPhase", "GuidanceGains", "IndiConfig",
    "NumericalDivergence", "OuterConfig", "RunReport", "ScenarioConfig", "TelemetryLog", "VehicleParams",
    "build_report", "canned_scenarios", "check_assertions", "load_canned", "parse_scenario",
    "resolve_scenario", "simulate_scenario",
]

__version__ = "0.1.0"
