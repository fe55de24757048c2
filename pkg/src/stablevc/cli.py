"""Command line interface: run scenarios, replay traces, print statistics.

Exit codes: 0 success / all enabled checks pass, 1 check failure or replay
divergence, 2 configuration or parse error.  The default output directory is
the current directory, overridable with --out or the STABLEVC_OUT
environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional

from .errors import ScenarioError, StableVCError
from .oracle import (
    InvariantMonitor,
    ShadowTracker,
    check_causal,
    check_requirement1,
    global_invariants,
    stats,
)
from .scenario import Scenario, load_scenario, parse_scenario
from .simnet import run as sim_run
from .trace import Trace, read_trace_file

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2


def execute_scenario(scenario: Scenario):
    """Build, run, and check one scenario; returns (world, trace, failures)."""
    world = scenario.build_world()
    scheduler = scenario.build_scheduler()
    observers: List[object] = []
    tracker: Optional[ShadowTracker] = None
    monitor: Optional[InvariantMonitor] = None
    wants_shadow = ("req1" in scenario.checks or "causal" in scenario.checks) \
        and scenario.transient_seed is None
    if wants_shadow:
        tracker = ShadowTracker(scenario.system_config())
        observers.append(tracker)
    if "local_inv" in scenario.checks:
        monitor = InvariantMonitor()
        observers.append(monitor)
    trace = sim_run(world, scheduler, scenario.steps,
                    fault_plan=scenario.fault_plan(), observers=observers)

    failures: List[str] = []
    summary = stats(trace)
    if "segments" in scenario.checks:
        floor = trace.steps // (summary.b_restart + summary.b_revive + 1)
        if summary.max_segment < floor:
            failures.append(f"segments: max legal segment {summary.max_segment} < {floor}")
    if "global_inv" in scenario.checks and not global_invariants(world):
        failures.append("global_inv: final state violates the global invariants")
    if monitor is not None and monitor.violations:
        failures.append(f"local_inv: {len(monitor.violations)} handler states "
                        f"violate the local invariants")
    if tracker is not None:
        if "req1" in scenario.checks:
            restart_steps: dict = {}
            for event in trace.by_kind("restart_local"):
                restart_steps.setdefault(event.proc, []).append(event.step)
            bad = check_requirement1(tracker, trace.steps, restart_steps,
                                     seed=scenario.seed)
            bad.extend(tracker.merge_violations)
            if bad:
                failures.append(f"req1: {len(bad)} counting violations")
        if "causal" in scenario.checks:
            revive_steps = sorted(e.step for e in trace.by_kind("revive"))
            bad = check_causal(tracker, summary.legal_segments, revive_steps,
                               seed=scenario.seed)
            if bad:
                failures.append(f"causal: {len(bad)} precedence violations")
    return world, trace, summary, failures


def _run_one(args) -> int:
    path, seed_override, steps_override, out_dir, checks_override = args
    try:
        scenario = load_scenario(path)
        if seed_override is not None:
            scenario.seed = seed_override
        if steps_override is not None:
            scenario.steps = steps_override
        if checks_override is not None:
            scenario = _apply_checks(scenario, checks_override)
        _world, trace, summary, failures = execute_scenario(scenario)
    except (ScenarioError, StableVCError, OSError) as exc:
        print(f"{path}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    base = os.path.splitext(os.path.basename(path))[0]
    os.makedirs(out_dir, exist_ok=True)
    trace_path = os.path.join(out_dir, base + ".trace")
    trace.write(trace_path, scenario.to_text())
    stats_path = os.path.join(out_dir, base + ".stats")
    with open(stats_path, "w", encoding="utf-8") as fh:
        fh.write(summary.summary() + "\n")
        for failure in failures:
            fh.write(f"check_failed {failure}\n")
    print(f"{path}: {summary.summary()}")
    for failure in failures:
        print(f"{path}: FAILED {failure}")
    if failures:
        return EXIT_CHECK_FAILED
    print(f"{path}: all enabled checks passed")
    return EXIT_OK


def _apply_checks(scenario: Scenario, checks: str) -> Scenario:
    from .scenario import DEFAULT_CHECKS
    if checks == "all":
        scenario.checks = DEFAULT_CHECKS
    elif checks == "none":
        scenario.checks = ()
    else:
        parts = tuple(p.strip() for p in checks.split(",") if p.strip())
        unknown = set(parts) - set(DEFAULT_CHECKS)
        if unknown:
            raise ScenarioError(f"unknown checks {sorted(unknown)}")
        scenario.checks = parts
    return scenario


def cmd_run(paths: List[str], seed: Optional[int], steps: Optional[int],
            out_dir: str, jobs: int, checks: Optional[str] = None) -> int:
    tasks = [(path, seed, steps, out_dir, checks) for path in paths]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            codes = list(pool.map(_run_one, tasks))
    else:
        codes = [_run_one(task) for task in tasks]
    return max(codes)


def cmd_replay(trace_path: str) -> int:
    try:
        scenario_text, _events = read_trace_file(trace_path)
        if not scenario_text:
            raise ScenarioError(f"{trace_path}: no embedded scenario header")
        scenario = parse_scenario(scenario_text, origin=trace_path)
        world = scenario.build_world()
        trace = sim_run(world, scenario.build_scheduler(), scenario.steps,
                        fault_plan=scenario.fault_plan())
    except (ScenarioError, StableVCError) as exc:
        print(f"replay: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    replay_path = trace_path + ".replay"
    trace.write(replay_path, scenario.to_text())
    with open(trace_path, "rb") as fh:
        original = fh.read()
    with open(replay_path, "rb") as fh:
        replayed = fh.read()
    os.unlink(replay_path)
    if original != replayed:
        print(f"replay: divergence from {trace_path}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(f"replay: byte-identical ({len(original)} bytes)")
    return EXIT_OK


def cmd_stats(trace_path: str) -> int:
    try:
        _scenario_text, event_lines = read_trace_file(trace_path)
        from .trace import parse_event_line
        trace = Trace()
        for line in event_lines:
            trace.append(parse_event_line(line))
        header_steps = None
        with open(trace_path, encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("#steps "):
                    header_steps = int(line.split()[1])
                    break
        trace.steps = header_steps if header_steps is not None else (
            max((e.step for e in trace.events), default=0) + 1)
    except (ScenarioError, ValueError) as exc:
        print(f"stats: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    print(stats(trace).summary())
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="stablevc",
        description="Deterministic simulator for self-stabilizing bounded vector clocks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run scenario files and check them")
    p_run.add_argument("scenarios", nargs="+", metavar="file")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--steps", type=int, default=None)
    p_run.add_argument("--out", default=os.environ.get("STABLEVC_OUT", "."))
    p_run.add_argument("--checks", default=None,
                       help="all, none, or a comma list (overrides the scenario)")
    p_run.add_argument("--jobs", type=int, default=1)

    p_replay = sub.add_parser("replay", help="re-simulate a trace and compare bytes")
    p_replay.add_argument("trace")

    p_stats = sub.add_parser("stats", help="print the statistics of a trace file")
    p_stats.add_argument("trace")

    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.scenarios, args.seed, args.steps, args.out,
                       args.jobs, args.checks)
    if args.command == "replay":
        return cmd_replay(args.trace)
    if args.command == "stats":
        return cmd_stats(args.trace)
    return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
