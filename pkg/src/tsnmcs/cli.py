"""Command-line entry point: run scenarios, drive the REPL, render reports."""

from __future__ import annotations

import argparse
import json
import sys
import threading
import time
from typing import List, Optional

from .config import (Defaults, ScenarioScript, dump_scenario, load_config,
                     load_scenario, parse_directive, shipped_path,
                     validate_script)
from .errors import ConfigError
from .metrics import metric_lines, trace_lines, write_lines
from .runner import (EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_INVARIANT, EXIT_OK,
                     RunResult, Simulation)

SHIPPED_SCENARIOS = ("s1_placement", "s2_linkfail", "s3_nodefail", "s4_attack")

USAGE = """commands:
  status                      show the supervisor's global view
  alerts                      list recent monitor alerts
  fail-link A B               fail the link between A and B
  restore-link A B            restore the link between A and B
  fail-node N                 crash node N
  restore-node N              bring node N back (empty)
  attack STREAM SEQ PORT      replay STREAM seq SEQ from PORT (e.g. TSN2:attacker)
  stop-stream S               stop stream S intentionally
  save PATH                   write the effective scenario (with injections)
  quit                        stop the simulation"""

_REPL_DIRECTIVES = {
    "fail-link": "fail_link",
    "restore-link": "restore_link",
    "fail-node": "fail_node",
    "restore-node": "restore_node",
    "attack": "attack_replay",
    "stop-stream": "stop_stream",
}


def repl_dispatch(sim: Simulation, command_line: str) -> str:
    """Interpret one interactive command against a running simulation."""
    tokens = command_line.strip().split()
    if not tokens:
        return ""
    cmd, args = tokens[0], tokens[1:]
    if cmd == "status":
        return json.dumps(sim.supervisor.status_snapshot(), indent=2,
                          sort_keys=True)
    if cmd == "alerts":
        recent = sim.monitor.recent_alerts()
        if not recent:
            return "no alerts"
        return "\n".join(
            f"[{a.time_us}us] {a.kind} stream={a.stream} seq={a.seq} "
            f"port={a.ingress_port}: {a.evidence}" for a in recent)
    if cmd == "save":
        if len(args) != 1:
            return USAGE
        # Directives queued just before a save have not necessarily been
        # picked up by the event loop yet; wait for the queue to drain so
        # the written script carries their realized timestamps.
        deadline = time.monotonic() + 2.0
        while (sim.engine.pending_injections() > 0
               and not sim.engine.finished and not sim.engine.stopped
               and time.monotonic() < deadline):
            time.sleep(0.01)
        dump_scenario(sim.effective_script(), args[0])
        return f"wrote effective scenario to {args[0]}"
    if cmd in ("quit", "exit"):
        sim.engine.stop()
        return "stopping"
    if cmd in _REPL_DIRECTIVES:
        try:
            directive = parse_directive(
                " ".join([_REPL_DIRECTIVES[cmd], *args]), "repl")
        except ConfigError as exc:
            return str(exc)
        script = ScenarioScript(seed=0, events=[(0, directive)])
        problems = validate_script(script, sim.topology,
                                   list(sim.services.values()),
                                   list(sim.streams.values()))
        if problems:
            return "; ".join(problems)
        now = sim.inject_directive(directive)
        return f"scheduled '{' '.join([directive.kind, *directive.args])}' " \
               f"at ~{now} us"
    return USAGE


def _resolve_scenario(name_or_path: str) -> str:
    if name_or_path in SHIPPED_SCENARIOS:
        return shipped_path(f"{name_or_path}.yaml")
    return name_or_path


def _parse_pace(text: str) -> Optional[float]:
    if text == "off":
        return None
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"--pace expects a number or 'off', got '{text}'") \
            from None
    if value <= 0:
        raise ConfigError("--pace factor must be positive")
    return value


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        topology, services, streams = load_config(args.topology, args.services)
        script = load_scenario(_resolve_scenario(args.scenario))
        if args.seed is not None:
            script = ScenarioScript(seed=args.seed, events=script.events)
        problems = validate_script(script, topology, services, streams)
        if problems:
            raise ConfigError("invalid scenario: " + "; ".join(problems))
        pace = _parse_pace(args.pace)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    sim = Simulation(topology, services, streams, script, Defaults(), pace)
    from .errors import Infeasible
    try:
        sim.build()
    except Infeasible as exc:
        print(f"infeasible placement: {exc.reason}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.repl:
        if pace is None:
            print("note: --repl without --pace runs to completion instantly",
                  file=sys.stderr)
        reader = threading.Thread(target=_repl_reader, args=(sim,), daemon=True)
        reader.start()

    result = sim.run()
    write_lines(args.metrics_out, metric_lines(result.metrics.records))
    write_lines(args.trace_out, trace_lines(result.trace))
    for violation in result.violations:
        print(f"invariant violation: {violation}", file=sys.stderr)
    summary = {
        "exit_code": result.exit_code,
        "metrics": args.metrics_out,
        "trace": args.trace_out,
        "events": len(result.trace),
    }
    print(json.dumps(summary, sort_keys=True))
    return result.exit_code


def _repl_reader(sim: Simulation) -> None:
    for line in sys.stdin:
        response = repl_dispatch(sim, line)
        if response:
            print(response, flush=True)
        if response == "stopping":
            break


def _cmd_report(args: argparse.Namespace) -> int:
    try:
        written = render_report_lazy(args.metrics, args.out_dir)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in written:
        print(path)
    return EXIT_OK


def render_report_lazy(metrics_path: str, out_dir: str) -> List[str]:
    from .report import render_report
    return render_report(metrics_path, out_dir)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsnmcs",
        description="Deterministic simulator for resilient service-oriented "
                    "networks with seamless stream redundancy.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario")
    run.add_argument("--topology", default=shipped_path("ring3_topology.yaml"),
                     help="topology config file")
    run.add_argument("--services", default=shipped_path("ring3_services.yaml"),
                     help="services and streams config file")
    run.add_argument("--scenario", default="s1_placement",
                     help="scenario file or shipped name "
                          f"({', '.join(SHIPPED_SCENARIOS)})")
    run.add_argument("--seed", type=int, default=None,
                     help="override the scenario seed")
    run.add_argument("--pace", default="off",
                     help="wall-clock pacing factor or 'off'")
    run.add_argument("--metrics-out", default="metrics.jsonl",
                     help="metrics output path")
    run.add_argument("--trace-out", default="trace.jsonl",
                     help="event trace output path")
    run.add_argument("--repl", action="store_true",
                     help="read interactive commands from stdin")
    run.set_defaults(func=_cmd_run)

    report = sub.add_parser("report", help="render figures from a metrics file")
    report.add_argument("--metrics", default="metrics.jsonl",
                        help="metrics file from a run")
    report.add_argument("--out-dir", default="report",
                        help="directory for figures and summary.csv")
    report.set_defaults(func=_cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
