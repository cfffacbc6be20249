"""Command-line front end.

::

    tailsitter run <scenario> [--out DIR] [--seed N] [--set key=value]... [--sweep N]
    tailsitter report <telemetry.csv> [--kv]
    tailsitter list-scenarios

``run`` exits 0 only when no run diverged and every assertion passed.
"""

from __future__ import annotations

import argparse
import copy
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .report import RunReport, build_report, check_assertions
from .scenario import ParseError, ValidationError, canned_scenarios, resolve_scenario
from .sim import ConfigError, NumericalDivergence, simulate_scenario
from .telemetry import FormatError, TelemetryLog


@dataclass
class RunResult:
    seed: int
    report: RunReport
    checks: list[tuple[str, bool, str]]
    diverged: bool
    telemetry: Path | None

    @property
    def ok(self) -> bool:
        return not self.diverged and all(ok for _, ok, _ in self.checks)


def run(cfg) -> tuple[TelemetryLog, RunReport, bool]:
    """Simulate a config and summarise it. Partial telemetry is kept on divergence."""
    try:
        log = simulate_scenario(cfg)
        diverged = False
    except NumericalDivergence as exc:
        log, diverged = exc.log, True
    return log, build_report(log), diverged


def _run_one(cfg, out: Path | None) -> RunResult:
    log, report, diverged = run(cfg)
    path = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{cfg.name}.csv"
        log.to_csv(path)
        (out / f"{cfg.name}.report.txt").write_text(report.to_text())
        (out / f"{cfg.name}.report.kv").write_text(report.to_kv())
    return RunResult(cfg.seed, report, check_assertions(report, cfg.active_assertions()), diverged, path)


def _print_checks(result: RunResult) -> None:
    if result.diverged:
        print("FAIL numerical divergence")
    for key, ok, got in result.checks:
        print(f"{'PASS' if ok else 'FAIL'} {key} (got {got})")


def _cmd_run(args) -> int:
    cfg = resolve_scenario(args.scenario)
    if args.seed is not None:
        cfg.set("scenario.seed", str(args.seed))
    for item in args.set:
        if "=" not in item:
            raise ValidationError(item, "expected key=value")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    cfg.validate()
    out = Path(args.out) if args.out else None

    if args.sweep <= 1:
        result = _run_one(cfg, out)
        print(result.report.to_text(), end="")
        _print_checks(result)
        if result.telemetry:
            print(f"telemetry written to {result.telemetry}")
        return 0 if result.ok else 1

    cfgs = []
    for i in range(args.sweep):
        c = copy.deepcopy(cfg)
        c.set("scenario.seed", str(cfg.seed + i))
        cfgs.append(c)
    outs = [None if out is None else out / f"seed_{c.seed}" for c in cfgs]
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(_run_one, cfgs, outs))
    gates = []
    for r in results:
        status = "ok" if r.ok else "FAIL"
        gate = "none" if r.report.gate_time is None else f"{r.report.gate_time:.3f}"
        print(f"seed {r.seed}: {status}  gate {gate} s  max saturation {100 * r.report.max_saturation_duty:.2f}%")
        for key, ok, got in r.checks:
            if not ok:
                print(f"  FAIL {key} (got {got})")
        if r.report.gate_time is not None:
            gates.append(r.report.gate_time)
    if gates:
        print(f"gate time spread: min {min(gates):.3f} s  max {max(gates):.3f} s  range {max(gates) - min(gates):.3f} s")
    passed = sum(r.ok for r in results)
    print(f"{passed}/{len(results)} runs passed")
    return 0 if passed == len(results) else 1


def _cmd_report(args) -> int:
    report = build_report(TelemetryLog.from_csv(Path(args.telemetry)))
    print(report.to_kv() if args.kv else report.to_text(), end="")
    return 0


def _cmd_list(args) -> int:
    for name in canned_scenarios():
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tailsitter", description="Tilt-rotor and elevon tailsitter simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario file or canned scenario")
    p.add_argument("scenario", help="path to a .scn file or a canned scenario name")
    p.add_argument("--out", help="directory for telemetry and reports")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a scenario key (repeatable)")
    p.add_argument("--sweep", type=int, default=1, metavar="N", help="run N consecutive seeds")
    p.add_argument("--jobs", type=int, default=None, help="worker processes for --sweep")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="recompute the report of a telemetry CSV")
    p.add_argument("telemetry")
    p.add_argument("--kv", action="store_true", help="key=value output")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("list-scenarios", help="list the canned scenarios")
    p.set_defaults(func=_cmd_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, ConfigError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
