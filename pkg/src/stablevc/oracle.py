"""Ground-truth checking: shadow clocks, counting/causality audits, invariants.

The shadow tracker runs in lockstep with the simulation and maintains what a
fault-free unbounded implementation would compute: exact per-processor event
tallies and unbounded joined vectors.  The auditors then compare the bounded
pairs' answers against the shadow at sampled state pairs, find the legal
segments of a trace, and evaluate the per-state global invariants.
"""

from __future__ import annotations

import bisect
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .labeling import SystemConfig
from .protocol import ProcessorState
from .simnet import World
from .trace import Trace, TraceEvent
from .vcpair import (
    VectorClockPair,
    causal_precedence,
    equal_static,
    event_count_query,
    exists_overlap,
    legit_pairs,
    pair_invar,
    vc,
)

FULL_DENSITY_LIMIT = 100_000  # runs at most this long are checked exhaustively


@dataclass
class Violation:
    """One observed disagreement between the protocol and the shadow."""

    kind: str
    step: int
    proc: int
    detail: str


class ShadowTracker:
    """Lockstep observer holding the unbounded fault-free baseline.

    Maintains per-processor unbounded joined vectors (advanced exactly when
    the protocol increments or merges), mirrors channel contents with shadow
    snapshots, and records change-logs of (step, local pair, shadow vector)
    so any past state can be queried by bisection.
    """

    def __init__(self, config: SystemConfig):
        self.config = config
        n = config.n
        self.shadow: List[Optional[List[int]]] = [None] + [[0] * n for _ in range(n)]
        self.mirror: Dict[Tuple[int, int], List[Optional[List[int]]]] = {}
        # Per processor: parallel lists (steps, pair snapshots, shadow copies),
        # appended only when the local pair changes.
        self.snap_steps: List[List[int]] = [[] for _ in range(n + 1)]
        self.snap_pairs: List[List[VectorClockPair]] = [[] for _ in range(n + 1)]
        self.snap_shadows: List[List[List[int]]] = [[] for _ in range(n + 1)]
        self.increment_steps: List[List[int]] = [[] for _ in range(n + 1)]
        self.merge_violations: List[Violation] = []
        self._last_local: List[Optional[VectorClockPair]] = [None] * (n + 1)
        # Per-broadcast frozen shadow, mirroring the frozen pair snapshot.
        self._bcast_shadow: List[Optional[List[int]]] = [None] * (n + 1)

    # -- observer interface ----------------------------------------------------

    def on_start(self, world: World) -> None:
        """Snapshot the initial (possibly fault-injected) world."""
        self.mirror = {key: [None] * len(ch.queue) for key, ch in world.channels.items()}
        for i in self.config.proc_ids:
            self._record(0, i, world.procs[i])

    def on_step(self, world: World, events: List[TraceEvent]) -> None:
        for event in events:
            kind = event.kind
            proc = event.proc
            if kind == "increment":
                self.shadow[proc][proc - 1] += 1
                self.increment_steps[proc].append(event.step)
            elif kind == "send":
                detail = event.detail
                if detail["first"] or self._bcast_shadow[proc] is None:
                    self._bcast_shadow[proc] = list(self.shadow[proc])
                queue = self.mirror[(proc, detail["to"])]
                if detail["overwrote"]:
                    queue.pop(0)
                queue.append(list(self._bcast_shadow[proc]))
            elif kind in ("receive", "ignored"):
                sender = event.detail["from"]
                queue = self.mirror[(sender, proc)]
                msg_shadow = queue.pop(0) if queue else None
                if kind == "receive" and event.detail.get("merged"):
                    self._join(world, event, proc, msg_shadow)
            elif kind == "restart_local":
                # The baseline never forgets; the local pair does.  Event
                # counting across a restart is excluded by the auditors.
                pass
        for event in events:
            if event.proc:
                self._record(event.step + 1, event.proc, world.procs[event.proc])

    def on_finish(self, world: World, trace: Trace) -> None:
        pass

    # -- internals ----------------------------------------------------------------

    def _join(self, world: World, event: TraceEvent, proc: int,
              msg_shadow: Optional[List[int]]) -> None:
        mine = self.shadow[proc]
        if msg_shadow is None:
            return  # injected message: no baseline to join against
        for k in range(self.config.n):
            if msg_shadow[k] > mine[k]:
                mine[k] = msg_shadow[k]
        # The merged pair must equal the shadow join modulo MAXINT.
        local = world.procs[proc].local
        maxint = self.config.maxint
        for k in range(self.config.n):
            if local.curr_m[k] % maxint != mine[k] % maxint:
                self.merge_violations.append(Violation(
                    "merge_join", event.step, proc,
                    f"curr.m={local.curr_m} shadow={mine}"))
                break

    def _record(self, step: int, proc: int, state: ProcessorState) -> None:
        local = state.local
        last = self._last_local[proc]
        if last is not None and last == local:
            return
        snapshot = local.copy()
        self.snap_steps[proc].append(step)
        self.snap_pairs[proc].append(snapshot)
        self.snap_shadows[proc].append(list(self.shadow[proc]))
        self._last_local[proc] = snapshot

    # -- queries -----------------------------------------------------------------

    def pair_at(self, proc: int, step: int) -> Optional[VectorClockPair]:
        """The processor's local pair in state c_step (before the step runs)."""
        idx = bisect.bisect_right(self.snap_steps[proc], step) - 1
        return self.snap_pairs[proc][idx] if idx >= 0 else None

    def shadow_at(self, proc: int, step: int) -> Optional[List[int]]:
        idx = bisect.bisect_right(self.snap_steps[proc], step) - 1
        return self.snap_shadows[proc][idx] if idx >= 0 else None

    def increments_between(self, proc: int, lo: int, hi: int) -> int:
        """Increment events of ``proc`` between states c_lo and c_hi
        (i.e. during steps lo..hi-1)."""
        steps = self.increment_steps[proc]
        return bisect.bisect_left(steps, hi) - bisect.bisect_left(steps, lo)

    def static_changes_between(self, proc: int, lo: int, hi: int) -> int:
        """Era changes (revive or adoption or restart) of ``proc`` in (lo, hi]."""
        count = 0
        steps = self.snap_steps[proc]
        pairs = self.snap_pairs[proc]
        start = bisect.bisect_right(steps, lo) - 1
        if start < 0:
            start = 0
        prev = pairs[start]
        for idx in range(start + 1, bisect.bisect_right(steps, hi)):
            if not equal_static(prev, pairs[idx]):
                count += 1
            prev = pairs[idx]
        return count


class InvariantMonitor:
    """Checks local_invariants after every completed handler invocation.

    Guard-rejected messages are exempt: the labeling layer may have adopted a
    fresh maximal label from an otherwise-ignored message and the pair only
    catches up at the next loop iteration.
    """

    def __init__(self):
        self.checked = 0
        self.violations: List[Violation] = []

    def on_step(self, world: World, events: List[TraceEvent]) -> None:
        if not events:
            return
        comm = events[-1]
        if comm.kind not in ("send", "receive"):
            return
        state = world.procs[comm.proc]
        if not state.labeling.ready:
            # Only possible before the first loop iteration after fault
            # injection (a corrupted pending broadcast drains first); the
            # invariants are defined over an initialized labeling state.
            return
        self.checked += 1
        if not state.local_invariants():
            self.violations.append(Violation(
                "local_invariants", comm.step, comm.proc, f"after {comm.kind}"))

    def on_finish(self, world: World, trace: Trace) -> None:
        pass


# -- post-hoc checks ------------------------------------------------------------------


def _sample_pairs(total_steps: int, procs, rng: random.Random,
                  full: bool) -> List[Tuple[int, int, int]]:
    """(proc, step_lo, step_hi) sample triples at mixed ranges."""
    samples = []
    gaps = [1, 7, 61, 509, 4099]
    if full:
        anchors = range(0, total_steps, max(1, total_steps // 400))
    else:
        anchors = sorted(rng.randrange(total_steps) for _ in range(400))
    for proc in procs:
        for lo in anchors:
            for gap in gaps:
                hi = lo + gap
                if hi < total_steps:
                    samples.append((proc, lo, hi))
    return samples


def check_requirement1(tracker: ShadowTracker, total_steps: int,
                       restart_steps: Dict[int, List[int]],
                       seed: int = 0) -> List[Violation]:
    """Audit exact own-event counting between sampled states.

    For every sampled (state, later state, processor) with no intervening
    restart and at most one era change for that processor, the pair query
    must return exactly the number of increment events the trace shows.
    """
    rng = random.Random(seed)
    full = total_steps <= FULL_DENSITY_LIMIT
    violations: List[Violation] = []
    for proc, lo, hi in _sample_pairs(total_steps, tracker.config.proc_ids, rng, full):
        restarts = restart_steps.get(proc, [])
        # Restart at step s mutates state c_{s+1}: exclude s in [lo, hi-1].
        if _count_in(restarts, lo - 1, hi - 1):
            continue
        if tracker.static_changes_between(proc, lo, hi) > 1:
            continue
        zx = tracker.pair_at(proc, lo)
        zy = tracker.pair_at(proc, hi)
        if zx is None or zy is None:
            continue
        expected = tracker.increments_between(proc, lo, hi)
        got = event_count_query(zx, zy, proc)
        if got is None or got != expected:
            violations.append(Violation(
                "requirement1", hi, proc,
                f"steps {lo}->{hi}: query={got} trace={expected}"))
    return violations


def check_causal(tracker: ShadowTracker, segments: List[Tuple[int, int]],
                 revive_steps: List[int], seed: int = 0,
                 samples_per_segment: int = 60) -> List[Violation]:
    """Audit causal precedence against the shadow happened-before relation.

    Sample pairs are drawn inside legal segments, within windows spanning at
    most one wrap-around event in total, so a common reference item exists by
    construction.
    """
    rng = random.Random(seed)
    procs = list(tracker.config.proc_ids)
    violations: List[Violation] = []
    for start, end in segments:
        if end <= start:
            continue
        cuts = [s for s in revive_steps if start <= s <= end]
        windows = _split_windows(start, end, cuts)
        for _ in range(samples_per_segment):
            lo, hi = windows[rng.randrange(len(windows))]
            if hi - lo < 2:
                continue
            pi = procs[rng.randrange(len(procs))]
            pj = procs[rng.randrange(len(procs))]
            sx = lo + rng.randrange(hi - lo)
            sy = lo + rng.randrange(hi - lo)
            zi = tracker.pair_at(pi, sx)
            zj = tracker.pair_at(pj, sy)
            si = tracker.shadow_at(pi, sx)
            sj = tracker.shadow_at(pj, sy)
            if None in (zi, zj, si, sj):
                continue
            if exists_overlap(zi, zj) is None:
                # The precedence formula is defined through the common item;
                # without one it reports "not preceding" by construction
                # (e.g. a superseded wrap variant against the next era), so
                # there is no verdict to audit.
                continue
            expected = _shadow_hb(si, sj)
            got = causal_precedence(zi, zj)
            if got != expected:
                violations.append(Violation(
                    "causal", sy, pj,
                    f"({pi}@{sx}) vs ({pj}@{sy}): query={got} shadow={expected}"))
    return violations


def _split_windows(start: int, end: int, cuts: List[int]) -> List[Tuple[int, int]]:
    """Windows within [start, end] spanning at most one cut event each."""
    bounds = [start] + [c for c in cuts if start < c < end] + [end]
    windows = []
    for i in range(len(bounds) - 1):
        hi = bounds[i + 2] if i + 2 < len(bounds) else end
        windows.append((bounds[i], hi))
    return windows or [(start, end)]


def _shadow_hb(a: List[int], b: List[int]) -> bool:
    le = all(x <= y for x, y in zip(a, b))
    return le and any(x < y for x, y in zip(a, b))


def _count_in(sorted_steps: List[int], lo: int, hi: int) -> int:
    return bisect.bisect_right(sorted_steps, hi) - bisect.bisect_right(sorted_steps, lo)


# -- legal segments and statistics ---------------------------------------------------


@dataclass
class ExecutionStats:
    """Aggregate counters plus the legal-segment decomposition of a run."""

    steps: int
    b_restart: int
    b_revive: int
    b_newlabel: int
    f_r: int
    legal_segments: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def max_segment(self) -> int:
        return max((hi - lo + 1 for lo, hi in self.legal_segments), default=0)

    def summary(self) -> str:
        return (f"stats steps={self.steps} b_restart={self.b_restart} "
                f"b_revive={self.b_revive} b_newlabel={self.b_newlabel} "
                f"f_r={self.f_r} segments={len(self.legal_segments)} "
                f"max_segment={self.max_segment}")


def find_legal_segments(trace: Trace) -> List[Tuple[int, int]]:
    """Maximal step intervals with no restart and at most one wrap per processor.

    Returned as inclusive [start, end] step ranges.  Their maximum length is
    at least steps/(b_restart + b_revive + 1) by the pigeonhole principle.
    """
    faults = []  # (step, is_revive, proc) ordered; restarts sort first per step
    for event in trace.events:
        if event.kind == "restart_local":
            faults.append((event.step, 0, None))
        elif event.kind == "revive":
            faults.append((event.step, 1, event.proc))
    faults.sort()
    total = trace.steps
    if total <= 0:
        return []

    segments: List[Tuple[int, int]] = []
    left = 0
    window: List[Tuple[int, int]] = []  # (step, proc) of revives in the window
    revive_count: Dict[int, int] = {}
    idx = 0
    while idx <= len(faults):
        if idx == len(faults):
            segments.append((left, total - 1))
            break
        step, _, proc = faults[idx]
        if proc is None:
            # A restart: the segment must end right before this step.
            if step > left:
                segments.append((left, step - 1))
            left = step + 1
            window.clear()
            revive_count.clear()
        else:
            revive_count[proc] = revive_count.get(proc, 0) + 1
            window.append((step, proc))
            if revive_count[proc] > 1:
                # Close the maximal segment that ends just before this revive.
                segments.append((left, step - 1))
                # Slide past this processor's previous revive.
                for w_step, w_proc in window:
                    if w_proc == proc:
                        left = w_step + 1
                        break
                while window and window[0][0] < left:
                    w_step, w_proc = window.pop(0)
                    revive_count[w_proc] -= 1
        idx += 1
    return [(lo, hi) for lo, hi in segments if hi >= lo]


def stats(trace: Trace) -> ExecutionStats:
    """Aggregate a trace into counters, legal segments, and the deviation count.

    A state counts as deviating (f_r) when it lies outside every legal
    segment.
    """
    segments = find_legal_segments(trace)
    covered = sum(hi - lo + 1 for lo, hi in segments)
    return ExecutionStats(
        steps=trace.steps,
        b_restart=trace.count("restart_local"),
        b_revive=trace.count("revive"),
        b_newlabel=trace.count("new_label"),
        f_r=max(trace.steps - covered, 0),
        legal_segments=segments,
    )


def global_invariants(world: World) -> bool:
    """Definition of a state in which no step can call a pair restart.

    Every live processor satisfies its local invariants, and every in-flight
    message that would pass the arrival guard at its receiver can actually be
    merged there.
    """
    for i in world.live_procs():
        state = world.procs[i]
        if not state.labeling.ready or not state.local_invariants():
            return False
    for (src, dst), channel in world.channels.items():
        receiver = world.procs[dst]
        for entry in channel.queue:
            message = entry.message
            payload = message.client
            arriving = payload.arriving
            guard = (equal_static(receiver.local, payload.rcvd_local)
                     and receiver.labeling.legit_msg(message, arriving.curr_label)
                     and pair_invar(arriving))
            if guard and not legit_pairs(receiver.local, arriving):
                return False
    return True
