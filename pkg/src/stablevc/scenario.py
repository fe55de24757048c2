"""Scenario files: a flat key/value config with one [faults] section.

The format favors diffability: one ``key = value`` per line, ``#`` comments,
and a single nesting level for the fault plan.  See SCENARIO_FORMAT.md for
the full key reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .errors import ScenarioError
from .labeling import SystemConfig
from .simnet import FaultPlan, RandomScheduler, RoundRobinScheduler, Scheduler, World

DEFAULT_CHECKS = ("req1", "causal", "segments", "global_inv", "local_inv")


@dataclass
class Scenario:
    """Everything needed to reproduce one run."""

    n: int
    c: int
    maxint: int
    steps: int
    seed: int = 0
    scheduler: str = "round_robin"
    increment_rate: float = 0.0
    rate_overrides: Dict[int, float] = field(default_factory=dict)
    k_override: Optional[int] = None
    checks: Tuple[str, ...] = DEFAULT_CHECKS
    transient_seed: Optional[int] = None
    transient_scope: str = "all"
    crash_at: Dict[int, int] = field(default_factory=dict)
    restart_at: Dict[int, int] = field(default_factory=dict)
    duplications: List[Tuple[int, int, int]] = field(default_factory=list)
    reorders: List[Tuple[int, int, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ScenarioError("steps must be >= 1")
        for proc in list(self.crash_at) + list(self.restart_at):
            if not 1 <= proc <= self.n:
                raise ScenarioError(f"processor id {proc} outside [1, {self.n}]")
        for src, dst, _ in self.duplications + self.reorders:
            if not (1 <= src <= self.n and 1 <= dst <= self.n and src != dst):
                raise ScenarioError(f"bad channel {src}>{dst}")
        if self.scheduler not in ("round_robin", "random"):
            raise ScenarioError(f"unknown scheduler {self.scheduler!r}")

    # -- construction of runnable objects ----------------------------------------

    def system_config(self) -> SystemConfig:
        try:
            return SystemConfig(self.n, self.c, self.maxint, self.k_override)
        except Exception as exc:
            raise ScenarioError(str(exc)) from exc

    def build_world(self) -> World:
        return World.clean_start(self.system_config())

    def build_scheduler(self) -> Scheduler:
        if self.scheduler == "round_robin":
            sched: Scheduler = RoundRobinScheduler()
        else:
            sched = RandomScheduler(self.seed)
        rates = {0: self.increment_rate}
        rates.update(self.rate_overrides)
        sched.configure_workload(self.seed, rates)
        return sched

    def fault_plan(self) -> FaultPlan:
        return FaultPlan(
            transient_seed=self.transient_seed,
            transient_scope=self.transient_scope,
            crash_at=dict(self.crash_at),
            restart_at=dict(self.restart_at),
            duplications=list(self.duplications),
            reorders=list(self.reorders),
        )

    # -- text round-trip -------------------------------------------------------------

    def to_text(self) -> str:
        lines = [
            f"n = {self.n}",
            f"c = {self.c}",
            f"maxint = {self.maxint}",
            f"steps = {self.steps}",
            f"seed = {self.seed}",
            f"scheduler = {self.scheduler}",
            f"increment_rate = {self.increment_rate!r}",
        ]
        for proc in sorted(self.rate_overrides):
            lines.append(f"increment_rate.{proc} = {self.rate_overrides[proc]!r}")
        if self.k_override is not None:
            lines.append(f"k = {self.k_override}")
        lines.append(f"checks = {','.join(self.checks) if self.checks else 'none'}")
        faults = []
        if self.transient_seed is not None:
            faults.append(f"transient_seed = {self.transient_seed}")
            faults.append(f"transient_scope = {self.transient_scope}")
        if self.crash_at:
            faults.append("crash = " + ", ".join(
                f"{p}@{s}" for p, s in sorted(self.crash_at.items())))
        if self.restart_at:
            faults.append("restart = " + ", ".join(
                f"{p}@{s}" for p, s in sorted(self.restart_at.items())))
        if self.duplications:
            faults.append("duplicate = " + ", ".join(
                f"{a}>{b}@{s}" for a, b, s in self.duplications))
        if self.reorders:
            faults.append("reorder = " + ", ".join(
                f"{a}>{b}@{s}" for a, b, s in self.reorders))
        if faults:
            lines.append("[faults]")
            lines.extend(faults)
        return "\n".join(lines) + "\n"


def parse_scenario(text: str, origin: str = "<scenario>") -> Scenario:
    plain: Dict[str, str] = {}
    faults: Dict[str, str] = {}
    section = plain
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "[faults]":
            section = faults
            continue
        if line.startswith("["):
            raise ScenarioError(f"{origin}:{lineno}: unknown section {line}")
        key, sep, value = line.partition("=")
        if not sep:
            raise ScenarioError(f"{origin}:{lineno}: expected 'key = value'")
        section[key.strip()] = value.strip()

    def need(key: str) -> str:
        if key not in plain:
            raise ScenarioError(f"{origin}: missing required key {key!r}")
        return plain[key]

    try:
        rate_overrides = {}
        for key, value in plain.items():
            if key.startswith("increment_rate."):
                rate_overrides[int(key.split(".", 1)[1])] = float(value)
        checks_raw = plain.get("checks", "all")
        if checks_raw == "all":
            checks: Tuple[str, ...] = DEFAULT_CHECKS
        elif checks_raw == "none":
            checks = ()
        else:
            checks = tuple(part.strip() for part in checks_raw.split(",") if part.strip())
            unknown = set(checks) - set(DEFAULT_CHECKS)
            if unknown:
                raise ScenarioError(f"{origin}: unknown checks {sorted(unknown)}")
        return Scenario(
            n=int(need("n")),
            c=int(need("c")),
            maxint=int(need("maxint")),
            steps=int(need("steps")),
            seed=int(plain.get("seed", "0")),
            scheduler=plain.get("scheduler", "round_robin"),
            increment_rate=float(plain.get("increment_rate", "0.0")),
            rate_overrides=rate_overrides,
            k_override=int(plain["k"]) if "k" in plain else None,
            checks=checks,
            transient_seed=(int(faults["transient_seed"])
                            if "transient_seed" in faults else None),
            transient_scope=faults.get("transient_scope", "all"),
            crash_at=_parse_proc_steps(faults.get("crash", ""), origin),
            restart_at=_parse_proc_steps(faults.get("restart", ""), origin),
            duplications=_parse_channel_steps(faults.get("duplicate", ""), origin),
            reorders=_parse_channel_steps(faults.get("reorder", ""), origin),
        )
    except ScenarioError:
        raise
    except (ValueError, KeyError) as exc:
        raise ScenarioError(f"{origin}: {exc}") from exc


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from exc
    return parse_scenario(text, origin=path)


def _parse_proc_steps(value: str, origin: str) -> Dict[int, int]:
    out: Dict[int, int] = {}
    for chunk in value.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        proc, sep, step = chunk.partition("@")
        if not sep:
            raise ScenarioError(f"{origin}: expected proc@step, got {chunk!r}")
        out[int(proc)] = int(step)
    return out


def _parse_channel_steps(value: str, origin: str) -> List[Tuple[int, int, int]]:
    out: List[Tuple[int, int, int]] = []
    for chunk in value.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        link, sep, step = chunk.partition("@")
        src, sep2, dst = link.partition(">")
        if not sep or not sep2:
            raise ScenarioError(f"{origin}: expected src>dst@step, got {chunk!r}")
        out.append((int(src), int(dst), int(step)))
    return out
