"""Deterministic simulation: bounded channels, schedulers, crashes, fault injection.

The world is advanced one atomic step at a time; each step runs one
processor's handler and ends with a single send or receive.  Everything is
driven by seeded ``random.Random`` streams, so a (world, fault plan,
scheduler, steps) tuple always reproduces the same trace.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from .errors import ActionNotEnabled, AlreadyCrashed, NotCrashed, PreconditionViolated
from .labeling import ServerMessage, SystemConfig
from .labels import Label, LabelComponent
from .protocol import ClientMessage, PendingBroadcast, ProcessorState, StepNotes
from .trace import Trace, TraceEvent
from .vcpair import VectorClockPair

BEGIN_BROADCAST = "begin"
CONTINUE_BROADCAST = "continue"
RECEIVE = "receive"


@dataclass
class Action:
    """One enabled move of a processor."""

    kind: str
    increment: bool = False      # begin only
    sender: Optional[int] = None  # receive only


@dataclass
class ChannelEntry:
    message: ServerMessage
    injected: bool = False


class Channel:
    """Bounded FIFO link; a send into a full channel overwrites the oldest entry."""

    __slots__ = ("src", "dst", "capacity", "queue")

    def __init__(self, src: int, dst: int, capacity: int):
        self.src = src
        self.dst = dst
        self.capacity = capacity
        self.queue: List[ChannelEntry] = []

    def send(self, message: ServerMessage, injected: bool = False) -> bool:
        """Append a message; returns True when the oldest entry was overwritten."""
        overwrote = False
        if len(self.queue) >= self.capacity:
            self.queue.pop(0)
            overwrote = True
        self.queue.append(ChannelEntry(message, injected))
        return overwrote

    def receive(self) -> ChannelEntry:
        if not self.queue:
            raise ActionNotEnabled(f"channel {self.src}->{self.dst} is empty")
        return self.queue.pop(0)

    def __len__(self) -> int:
        return len(self.queue)


@dataclass
class FaultPlan:
    """Faults applied at configuration-declared steps."""

    transient_seed: Optional[int] = None
    transient_scope: str = "all"  # "all" | "channels"
    crash_at: Dict[int, int] = field(default_factory=dict)
    restart_at: Dict[int, int] = field(default_factory=dict)
    duplications: List[Tuple[int, int, int]] = field(default_factory=list)  # (src, dst, step)
    reorders: List[Tuple[int, int, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        for proc, step in self.restart_at.items():
            if proc in self.crash_at and step <= self.crash_at[proc]:
                raise PreconditionViolated(f"restart of {proc} must follow its crash")
        if self.transient_scope not in ("all", "channels"):
            raise PreconditionViolated(f"unknown transient scope {self.transient_scope!r}")


class World:
    """All processor states plus the channel matrix."""

    __slots__ = ("config", "procs", "channels", "incoming", "crashed", "clock", "_live")

    def __init__(self, config: SystemConfig):
        self.config = config
        self.procs: List[Optional[ProcessorState]] = [None] * (config.n + 1)
        self.channels: Dict[Tuple[int, int], Channel] = {}
        self.crashed: set = set()
        self.clock = 0
        for i in config.proc_ids:
            self.procs[i] = ProcessorState(i, config)
            for j in config.proc_ids:
                if i != j:
                    self.channels[(i, j)] = Channel(i, j, config.c)
        # incoming[i]: the channels feeding processor i, in sender order.
        self.incoming: List[List[Channel]] = [[] for _ in range(config.n + 1)]
        for i in config.proc_ids:
            self.incoming[i] = [self.channels[(j, i)] for j in config.proc_ids if j != i]
        self._live: List[int] = list(config.proc_ids)

    @classmethod
    def clean_start(cls, config: SystemConfig) -> "World":
        """A converged fault-free start: one shared epoch, all pairs at zero.

        The shared label is created by the highest-id processor (the state a
        gossip race over per-processor seeds converges to).
        """
        world = cls(config)
        creator = config.n
        shared = Label(creator, _seed_component(config.label_config))
        for i in config.proc_ids:
            proc = world.procs[i]
            lab = proc.labeling
            lab.stored[creator].append(shared)
            for j in config.proc_ids:
                lab.max[j] = shared
            lab.label_bookkeeping()
            for j in config.proc_ids:
                proc.pairs[j] = VectorClockPair.fresh(shared, config.n, config.maxint)
        return world

    def live_procs(self) -> List[int]:
        return self._live

    # -- fault operations ------------------------------------------------------

    def crash(self, proc: int) -> None:
        if proc in self.crashed:
            raise AlreadyCrashed(f"processor {proc} is already down")
        self.crashed.add(proc)
        self._live = [i for i in self.config.proc_ids if i not in self.crashed]

    def restart_undetectable(self, proc: int) -> None:
        """Resume with the pre-crash state; messages sent meanwhile are lost."""
        if proc not in self.crashed:
            raise NotCrashed(f"processor {proc} is up")
        self.crashed.discard(proc)
        self._live = [i for i in self.config.proc_ids if i not in self.crashed]
        for j in self.config.proc_ids:
            if j != proc:
                self.channels[(j, proc)].queue.clear()

    # -- enabled actions ----------------------------------------------------------

    def enabled_actions(self, proc: int) -> List[Action]:
        if proc in self.crashed:
            return []
        state = self.procs[proc]
        actions: List[Action] = []
        if state.pending_broadcast is None:
            actions.append(Action(BEGIN_BROADCAST))
        else:
            actions.append(Action(CONTINUE_BROADCAST))
        for j in self.config.proc_ids:
            if j != proc and len(self.channels[(j, proc)]) > 0:
                actions.append(Action(RECEIVE, sender=j))
        return actions


def _seed_component(cfg) -> LabelComponent:
    """The component next_b yields on empty input: (1, {2..k+1})."""
    return LabelComponent(1, frozenset(range(2, cfg.k + 2)))


# -- single step -----------------------------------------------------------------


def sim_step(world: World, proc: int, action: Action) -> List[TraceEvent]:
    """Apply one atomic step and return its trace events (comm event last)."""
    state = world.procs[proc]
    step = world.clock
    events: List[TraceEvent] = []

    if action.kind == BEGIN_BROADCAST:
        dest, message, notes = state.do_forever_begin(action.increment)
        _notes_events(events, step, proc, notes)
        overwrote = world.channels[(proc, dest)].send(message)
        events.append(TraceEvent(step, proc, "send",
                                 _send_detail(dest, message, overwrote, True)))
    elif action.kind == CONTINUE_BROADCAST:
        dest, message, notes = state.do_forever_continue()
        _notes_events(events, step, proc, notes)
        overwrote = world.channels[(proc, dest)].send(message)
        events.append(TraceEvent(step, proc, "send",
                                 _send_detail(dest, message, overwrote, False)))
    elif action.kind == RECEIVE:
        sender = action.sender
        entry = world.channels[(sender, proc)].receive()
        notes = state.on_message(entry.message, sender)
        _notes_events(events, step, proc, notes, injected=entry.injected)
        if notes.ignored is not None:
            events.append(TraceEvent(step, proc, "ignored",
                                     {"from": sender, "guard": notes.ignored,
                                      "injected": entry.injected}))
        else:
            events.append(TraceEvent(step, proc, "receive",
                                     {"from": sender, "merged": notes.merged,
                                      "injected": entry.injected}))
    else:
        raise ActionNotEnabled(f"unknown action {action.kind!r}")
    return events


def _sim_step_lean(world: World, proc: int, action: Action, trace: Trace) -> None:
    """sim_step without event-object construction; used for fault-level traces.

    State evolution is identical to sim_step; only the recording differs:
    counters are ticked and only fault-kind events materialize.
    """
    state = world.procs[proc]
    step = world.clock

    if action.kind == RECEIVE:
        sender = action.sender
        entry = world.channels[(sender, proc)].receive()
        notes = state.on_message(entry.message, sender)
        trace.tick("ignored" if notes.ignored is not None else "receive")
    else:
        if action.kind == BEGIN_BROADCAST:
            dest, message, notes = state.do_forever_begin(action.increment)
        else:
            dest, message, notes = state.do_forever_continue()
        world.channels[(proc, dest)].send(message)
        trace.tick("send")

    if notes.increments:
        trace.tick("increment", notes.increments)
    for label in notes.new_labels:
        trace.append(TraceEvent(step, proc, "new_label", {"label": label}))
    for _ in range(notes.revives):
        trace.append(TraceEvent(step, proc, "revive", None))
    for _ in range(notes.restarts):
        injected = action.kind == RECEIVE and entry.injected
        trace.append(TraceEvent(step, proc, "restart_local",
                                {"cause": notes.restart_cause, "injected": injected}))


def _send_detail(dest: int, message: ServerMessage, overwrote: bool,
                 first: bool) -> dict:
    payload: ClientMessage = message.client
    return {
        "to": dest,
        "max": message.sender_max,
        "pair": payload.arriving,
        "overwrote": overwrote,
        "first": first,
    }


def _notes_events(events: List[TraceEvent], step: int, proc: int,
                  notes: StepNotes, injected: bool = False) -> None:
    for _ in range(notes.increments):
        events.append(TraceEvent(step, proc, "increment", None))
    for label in notes.new_labels:
        events.append(TraceEvent(step, proc, "new_label", {"label": label}))
    for _ in range(notes.revives):
        events.append(TraceEvent(step, proc, "revive", None))
    for _ in range(notes.restarts):
        events.append(TraceEvent(step, proc, "restart_local",
                                 {"cause": notes.restart_cause, "injected": injected}))


# -- schedulers ---------------------------------------------------------------------


class Scheduler:
    """Picks (processor, action) each step; subclasses define the policy.

    Shared machinery enforces the fairness contract: per-processor
    alternation between send and receive when both are enabled, and
    round-robin rotation over message sources.
    """

    def __init__(self) -> None:
        self._prefer_receive: Dict[int, bool] = {}
        self._next_source: Dict[int, int] = {}
        self.workload_rng: Optional[random.Random] = None
        self.increment_rates: Dict[int, float] = {}

    def configure_workload(self, seed: int, rates: Dict[int, float]) -> None:
        self.workload_rng = random.Random(seed ^ 0x5EED)
        self.increment_rates = rates

    def next(self, world: World) -> Optional[Tuple[int, Action]]:
        raise NotImplementedError

    def pick_action(self, world: World, proc: int) -> Action:
        state = world.procs[proc]
        if self._prefer_receive.get(proc, False):
            sources = [ch.src for ch in world.incoming[proc] if ch.queue]
            if sources:
                self._prefer_receive[proc] = False
                return Action(RECEIVE, sender=self._rotate_source(proc, sources))
        self._prefer_receive[proc] = True
        if state.pending_broadcast is not None:
            return Action(CONTINUE_BROADCAST)
        return Action(BEGIN_BROADCAST, increment=self._decide_increment(proc))

    def _rotate_source(self, proc: int, sources: List[int]) -> int:
        start = self._next_source.get(proc, 0)
        choice = sources[start % len(sources)]
        self._next_source[proc] = (start + 1) % max(len(sources), 1)
        return choice

    def _decide_increment(self, proc: int) -> bool:
        if self.workload_rng is None:
            return False
        rate = self.increment_rates.get(proc, self.increment_rates.get(0, 0.0))
        if rate <= 0.0:
            return False
        if rate >= 1.0:
            return True
        return self.workload_rng.random() < rate


class RoundRobinScheduler(Scheduler):
    """Cycles over live processors in id order."""

    def __init__(self) -> None:
        super().__init__()
        self._cursor = 0

    def next(self, world: World) -> Optional[Tuple[int, Action]]:
        live = world.live_procs()
        if not live:
            return None
        proc = live[self._cursor % len(live)]
        self._cursor += 1
        return proc, self.pick_action(world, proc)


class RandomScheduler(Scheduler):
    """Seeded uniform choice with an anti-starvation guard.

    Any live processor left unscheduled for 4*N*C steps is picked next, which
    realizes the fairness contract without giving up adversarial freedom.
    """

    def __init__(self, seed: int):
        super().__init__()
        self.rng = random.Random(seed)
        self._last_run: Dict[int, int] = {}

    def next(self, world: World) -> Optional[Tuple[int, Action]]:
        live = world.live_procs()
        if not live:
            return None
        bound = 4 * world.config.n * world.config.c
        clock = world.clock
        last = self._last_run
        proc = None
        for cand in live:
            if clock - last.get(cand, 0) >= bound:
                proc = cand
                break
        if proc is None:
            draw = int(self.rng.random() * len(live))
            proc = live[draw if draw < len(live) else len(live) - 1]
        last[proc] = clock
        return proc, self.pick_action(world, proc)


class ScriptedScheduler(Scheduler):
    """Replays an explicit (proc, action) list for adversarial cases."""

    def __init__(self, script: Iterable[Tuple[int, Action]]):
        super().__init__()
        self.script = list(script)
        self._pos = 0

    def next(self, world: World) -> Optional[Tuple[int, Action]]:
        if self._pos >= len(self.script):
            return None
        proc, action = self.script[self._pos]
        self._pos += 1
        return proc, action


# -- transient fault injection ----------------------------------------------------------


def inject_transient(world: World, seed: int, scope: str = "all") -> World:
    """Replace all state ("all") or all channel contents ("channels") with
    type-valid random values; structure (N, C, MAXINT) stays intact."""
    if world.clock != 0:
        raise PreconditionViolated("transient faults occur only at step 0")
    rng = random.Random(seed)
    cfg = world.config
    if scope == "all":
        for i in cfg.proc_ids:
            _corrupt_processor(world.procs[i], rng)
    fill_full = scope == "channels"
    for channel in world.channels.values():
        channel.queue.clear()
        count = channel.capacity if fill_full else rng.randint(0, channel.capacity)
        for _ in range(count):
            channel.queue.append(ChannelEntry(_random_message(cfg, rng), injected=True))
    return world


def _random_component(cfg, rng: random.Random) -> LabelComponent:
    sting = rng.randint(1, cfg.domain_size)
    # A strided slice of the domain: arbitrary-valued, k distinct members,
    # cheap to draw (a full k-of-k^2 sample is needlessly slow here).
    domain = cfg.domain_size
    start = rng.randrange(domain)
    stride = rng.randrange(1, domain)
    while _gcd(stride, domain) != 1:
        stride += 1
    anti = frozenset((start + i * stride) % domain + 1 for i in range(cfg.k))
    return LabelComponent(sting, anti)


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


def _random_label(config: SystemConfig, rng: random.Random,
                  canceled_chance: float = 0.3) -> Label:
    cfg = config.label_config
    cl = _random_component(cfg, rng) if rng.random() < canceled_chance else None
    return Label(rng.randint(1, config.n), _random_component(cfg, rng), cl)


def _random_vector(config: SystemConfig, rng: random.Random) -> List[int]:
    return [rng.randrange(config.maxint) for _ in range(config.n)]


def _random_pair(config: SystemConfig, rng: random.Random) -> VectorClockPair:
    return VectorClockPair(
        _random_label(config, rng), _random_vector(config, rng),
        _random_vector(config, rng), _random_label(config, rng),
        _random_vector(config, rng), config.maxint,
    )


def _random_message(config: SystemConfig, rng: random.Random) -> ServerMessage:
    arriving = _random_pair(config, rng)
    sender_max = (Label(arriving.curr_label.creator, arriving.curr_label.ml)
                  if rng.random() < 0.5 else _random_label(config, rng, 0.0))
    last_sent = _random_label(config, rng) if rng.random() < 0.7 else None
    return ServerMessage(sender_max=sender_max, last_sent=last_sent,
                         client=ClientMessage(arriving, _random_pair(config, rng)))


def _corrupt_processor(state: ProcessorState, rng: random.Random) -> None:
    config = state.cfg
    lab = state.labeling
    lab.stored = [[] for _ in range(config.n + 1)]
    for j in config.proc_ids:
        for _ in range(rng.randint(0, 2)):
            label = _random_label(config, rng)
            # Misfiled entries are type-valid corruption; bookkeeping must cope.
            slot = label.creator if rng.random() < 0.8 else j
            lab.stored[slot].insert(0, label)
        lab.max[j] = _random_label(config, rng) if rng.random() < 0.8 else None
    lab._ready = False
    lab._dirty = True
    lab.created_count = 0
    lab.created_log = []
    for j in config.proc_ids:
        state.pairs[j] = _random_pair(config, rng)
    if rng.random() < 0.3:
        dests = [j for j in config.proc_ids if j != state.id]
        rng.shuffle(dests)
        keep = dests[: rng.randint(1, len(dests))]
        state.pending_broadcast = PendingBroadcast(
            _random_pair(config, rng), sorted(keep), _random_label(config, rng, 0.0))
    else:
        state.pending_broadcast = None
    state.restart_calls = 0
    state.revive_calls = 0
    state.increments = 0


# -- the run loop -------------------------------------------------------------------------


def run(world: World, scheduler: Scheduler, steps: int,
        fault_plan: Optional[FaultPlan] = None,
        observers: Iterable = (),
        trace_level: str = "full") -> Trace:
    """Advance the world ``steps`` atomic steps and record a trace.

    ``trace_level`` "full" records every event; "faults" keeps only the
    protocol-fault events (restart/revive/new_label/crash/restart) so very
    long runs stay cheap.  Observers see every event either way.
    """
    trace = Trace(config=world.config, level=trace_level)
    plan = fault_plan or FaultPlan()
    if plan.transient_seed is not None and world.clock == 0:
        inject_transient(world, plan.transient_seed, plan.transient_scope)
        trace.append(TraceEvent(0, 0, "transient",
                                {"seed": plan.transient_seed, "scope": plan.transient_scope}))
    dup_at: Dict[int, List[Tuple[int, int]]] = {}
    for src, dst, at in plan.duplications:
        dup_at.setdefault(at, []).append((src, dst))
    reorder_at: Dict[int, List[Tuple[int, int]]] = {}
    for src, dst, at in plan.reorders:
        reorder_at.setdefault(at, []).append((src, dst))

    fault_steps = (set(plan.crash_at.values()) | set(plan.restart_at.values())
                   | set(dup_at) | set(reorder_at))
    observers = list(observers)
    for observer in observers:
        on_start = getattr(observer, "on_start", None)
        if on_start is not None:
            on_start(world)
    lean = trace.level != "full" and not observers
    for _ in range(steps):
        now = world.clock
        if now in fault_steps:
            for proc, at in sorted(plan.crash_at.items()):
                if at == now and proc not in world.crashed:
                    world.crash(proc)
                    trace.append(TraceEvent(now, proc, "crash", None))
            for proc, at in sorted(plan.restart_at.items()):
                if at == now and proc in world.crashed:
                    world.restart_undetectable(proc)
                    trace.append(TraceEvent(now, proc, "restart", None))
            for src, dst in dup_at.get(now, ()):
                channel = world.channels[(src, dst)]
                if channel.queue:
                    channel.send(channel.queue[0].message)
                    trace.append(TraceEvent(now, 0, "duplicate", {"src": src, "dst": dst}))
            for src, dst in reorder_at.get(now, ()):
                channel = world.channels[(src, dst)]
                if len(channel.queue) >= 2:
                    channel.queue[0], channel.queue[1] = channel.queue[1], channel.queue[0]
                    trace.append(TraceEvent(now, 0, "reorder", {"src": src, "dst": dst}))

        pick = scheduler.next(world)
        if pick is not None:
            proc, action = pick
            if lean:
                _sim_step_lean(world, proc, action, trace)
            else:
                events = sim_step(world, proc, action)
                for event in events:
                    trace.append(event)
                for observer in observers:
                    observer.on_step(world, events)
        world.clock += 1
    trace.steps = world.clock
    for observer in observers:
        observer.on_finish(world, trace)
    return trace
