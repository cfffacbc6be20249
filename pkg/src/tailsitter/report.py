"""Run summaries computed from telemetry alone.

Everything here is a function of a :class:`TelemetryLog` (rows plus its
metadata), so a report built right after a run and one rebuilt from the CSV
on disk are identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .guidance import PIVOT_GATE_ANGLE, PIVOT_GATE_RATE, FlightPhase
from .model import ACTUATOR_NAMES
from .telemetry import TelemetryLog

GROUND_PHASES = (FlightPhase.GroundedPivotUp, FlightPhase.PivotDown, FlightPhase.Landed)
VERTICAL_SPEED_MIN = 0.05
ELEVONS = (4, 5)


@dataclass
class RunReport:
    scenario: str
    mode: str
    seed: int
    duration: float
    diverged: bool
    ground_impact: float | None
    phase_sequence: list[str]
    phase_times: dict[str, float]
    phase_errors: dict[str, tuple[float, float]]
    saturation_duty: dict[str, float]
    climb_error: float | None
    descent_error: float | None
    descent_saturation: float | None
    gate_time: float | None
    waypoints: list[tuple[int, float, bool]] = field(default_factory=list)
    settled_hover_error: float | None = None
    lyapunov_slope: float | None = None
    lyapunov_expected: float | None = None

    @property
    def max_saturation_duty(self) -> float:
        return max(self.saturation_duty.values(), default=0.0)

    @property
    def descent_climb_ratio(self) -> float | None:
        if self.climb_error is None or self.descent_error is None or self.climb_error == 0:
            return None
        return self.descent_error / self.climb_error

    @property
    def waypoints_reached(self) -> bool:
        return bool(self.waypoints) and all(hit for _, _, hit in self.waypoints)

    def hover_error(self) -> float | None:
        return self.settled_hover_error

    # -- output --------------------------------------------------------------

    def to_kv(self) -> str:
        """Machine-readable ``key=value`` lines, one per field."""
        items = [
            ("scenario", self.scenario), ("mode", self.mode), ("seed", self.seed),
            ("duration", self.duration), ("diverged", self.diverged),
            ("ground_impact", self.ground_impact),
            ("phase_sequence", ",".join(self.phase_sequence)),
        ]
        items += [(f"phase_time.{k}", v) for k, v in self.phase_times.items()]
        for k, (mean, peak) in self.phase_errors.items():
            items += [(f"error_mean.{k}", mean), (f"error_max.{k}", peak)]
        items += [(f"saturation.{k}", v) for k, v in self.saturation_duty.items()]
        items += [
            ("climb_error", self.climb_error), ("descent_error", self.descent_error),
            ("descent_climb_ratio", self.descent_climb_ratio),
            ("descent_saturation", self.descent_saturation), ("gate_time", self.gate_time),
            ("settled_hover_error", self.settled_hover_error),
        ]
        for i, dist, hit in self.waypoints:
            items.append((f"waypoint.{i}", f"{_fmt(dist)},{'hit' if hit else 'miss'}"))
        items += [("lyapunov_slope", self.lyapunov_slope), ("lyapunov_expected", self.lyapunov_expected)]
        return "\n".join(f"{k}={_fmt(v)}" for k, v in items) + "\n"

    def to_text(self) -> str:
        lines = [f"scenario {self.scenario} (mode {self.mode}, seed {self.seed}), {self.duration:.2f} s"]
        if self.diverged:
            lines.append("  DIVERGED")
        if self.ground_impact is not None:
            lines.append(f"  ground impact at {self.ground_impact:.2f} s")
        lines.append("phases:")
        for name, t in self.phase_times.items():
            mean, peak = self.phase_errors.get(name, (math.nan, math.nan))
            lines.append(f"  {name:<20} from {t:8.2f} s   error mean {mean:6.3f} m  max {peak:6.3f} m")
        lines.append("saturation duty outside ground phases:")
        lines.append("  " + "  ".join(f"{k} {100 * v:.2f}%" for k, v in self.saturation_duty.items()))
        if self.climb_error is not None or self.descent_error is not None:
            lines.append(f"climb error {_num(self.climb_error)} m, descent error {_num(self.descent_error)} m, "
                         f"ratio {_num(self.descent_climb_ratio)}")
            lines.append(f"downward elevon saturation during descent {_pct(self.descent_saturation)}")
        if self.settled_hover_error is not None:
            lines.append(f"settled hover error max {self.settled_hover_error:.3f} m")
        lines.append(f"pivot gate: {'not reached' if self.gate_time is None else f'{self.gate_time:.3f} s'}")
        if self.lyapunov_slope is not None:
            lines.append(f"ln E slope {self.lyapunov_slope:.3f} 1/s (ideal {self.lyapunov_expected:.3f})")
        for i, dist, hit in self.waypoints:
            lines.append(f"waypoint {i}: closest {dist:.2f} m  {'hit' if hit else 'MISS'}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _num(v) -> str:
    return "n/a" if v is None else f"{v:.3f}"


def _pct(v) -> str:
    return "n/a" if v is None else f"{100 * v:.2f}%"


def _meta_float(meta: dict, key: str, default=None):
    v = meta.get(key)
    return default if v in (None, "", "none") else float(v)


def build_report(log: TelemetryLog) -> RunReport:
    """Summarise a run from its telemetry."""
    meta = log.meta
    t = log["t"]
    phase = log["phase"].astype(int)
    err = np.linalg.norm(log.block("px", 3) - log.block("px_ref", 3), axis=1)

    seq, times = [], {}
    for i, ph in enumerate(phase):
        name = FlightPhase(ph).name
        if not seq or seq[-1] != name:
            seq.append(name)
            times.setdefault(name, float(t[i]))

    errors = {}
    for name in times:
        mask = phase == FlightPhase[name]
        if FlightPhase[name] in GROUND_PHASES:
            continue
        errors[name] = (float(err[mask].mean()), float(err[mask].max()))

    airborne = ~np.isin(phase, [int(p) for p in GROUND_PHASES])
    sat = log["sat_mask"].astype(np.int64)
    duty = {}
    for j, name in enumerate(ACTUATOR_NAMES):
        bits = ((sat >> j) & 1).astype(bool)
        duty[name] = float(bits[airborne].mean()) if airborne.any() else 0.0

    vz_ref = log["vz_ref"]
    hovering = phase == FlightPhase.Hover
    climb = hovering & (vz_ref < -VERTICAL_SPEED_MIN)
    descent = hovering & (vz_ref > VERTICAL_SPEED_MIN)
    climb_err = float(err[climb].mean()) if climb.any() else None
    descent_err = float(err[descent].mean()) if descent.any() else None
    descent_sat = None
    if descent.any():
        down = np.zeros(len(log), dtype=bool)
        for j in ELEVONS:
            down |= ((sat >> j) & 1).astype(bool) & (log[f"uc_{ACTUATOR_NAMES[j]}"] < 0.0)
        descent_sat = float(down[descent].mean())

    settled = hovering & (t >= _meta_float(meta, "settle_time", 0.0))
    settled_err = float(err[settled].max()) if settled.any() else None

    gate = _gate_time(log, phase)
    wps = _waypoint_hits(log, meta)
    slope, expected = _lyapunov_fit(log, phase, meta)

    return RunReport(
        scenario=meta.get("scenario", "unnamed"), mode=meta.get("mode", "tre"),
        seed=int(meta.get("seed", 0)), duration=float(t[-1]) if len(t) else 0.0,
        diverged=meta.get("diverged", "false") == "true",
        ground_impact=_meta_float(meta, "ground_impact"),
        phase_sequence=seq, phase_times=times, phase_errors=errors, saturation_duty=duty,
        climb_error=climb_err, descent_error=descent_err, descent_saturation=descent_sat,
        gate_time=gate, waypoints=wps, settled_hover_error=settled_err, lyapunov_slope=slope, lyapunov_expected=expected,
    )


def _gate_time(log: TelemetryLog, phase: np.ndarray) -> float | None:
    """First time the upright gate is met after a pivot takeoff."""
    up = np.flatnonzero(phase == FlightPhase.GroundedPivotUp)
    if not len(up):
        return None
    theta, q = log["theta"], log["q"]
    ok = (np.abs(theta) <= PIVOT_GATE_ANGLE) & (np.abs(q) <= PIVOT_GATE_RATE)
    ok[:up[0]] = False
    hits = np.flatnonzero(ok)
    return float(log["t"][hits[0]]) if len(hits) else None


def _waypoint_hits(log: TelemetryLog, meta: dict) -> list[tuple[int, float, bool]]:
    text = meta.get("waypoints", "")
    if not text:
        return []
    radius = _meta_float(meta, "radius", 10.0)
    p = log.block("px", 3)
    out = []
    for i, w in enumerate(text.split(";")):
        wp = np.array([float(v) for v in w.split(",")])
        dist = float(np.linalg.norm(p - wp, axis=1).min()) if len(p) else math.inf
        out.append((i, dist, dist <= radius))
    return out


def _lyapunov_fit(log: TelemetryLog, phase: np.ndarray, meta: dict):
    """Least-squares slope of ln E over the pivot takeoff."""
    k1, k2 = _meta_float(meta, "k1"), _meta_float(meta, "k2")
    mask = (phase == FlightPhase.GroundedPivotUp) & (log["contact"] > 0.5)
    if k1 is None or k2 is None or mask.sum() < 10:
        return None, None
    t = log["t"][mask]
    th_d = log["theta_ref"][mask]
    th_d_dot = np.gradient(th_d, t)
    z = k1 * (log["theta"][mask] - th_d) + log["q"][mask] - th_d_dot
    E = 0.5 * z * z
    keep = E > 1e-12
    if keep.sum() < 10:
        return None, -2.0 * k2
    slope = float(np.polyfit(t[keep], np.log(E[keep]), 1)[0])
    return slope, -2.0 * k2


def check_assertions(report: RunReport, assertions: dict) -> list[tuple[str, bool, str]]:
    """Evaluate a scenario's assertion block against a report."""
    results = []
    for key, want in assertions.items():
        ok, got = _check(report, key, want)
        results.append((key, ok, got))
    return results


def _check(r: RunReport, key: str, want):
    if key == "phase_sequence":
        expected = [s.strip() for s in str(want).split(",") if s.strip()]
        return r.phase_sequence == expected, ",".join(r.phase_sequence)
    if key == "waypoints_reached":
        return (not want) or r.waypoints_reached, str(r.waypoints_reached).lower()
    if key == "gate_reached":
        return (not want) or r.gate_time is not None, _fmt(r.gate_time)
    if key == "gate_time_max":
        return r.gate_time is not None and r.gate_time <= want, _fmt(r.gate_time)
    if key == "max_saturation_duty":
        return r.max_saturation_duty <= want, repr(r.max_saturation_duty)
    if key == "min_descent_saturation":
        v = r.descent_saturation
        return v is not None and v >= want, _fmt(v)
    if key == "descent_climb_ratio_min":
        v = r.descent_climb_ratio
        return v is not None and v >= want, _fmt(v)
    if key == "descent_climb_ratio_max":
        v = r.descent_climb_ratio
        return v is not None and v <= want, _fmt(v)
    if key == "max_hover_error":
        v = r.hover_error()
        return v is not None and v <= want, _fmt(v)
    raise KeyError(f"unknown assertion {key!r}")
