"""Per-processor protocol: increment, revive, restart, broadcast loop, merge on arrival.

Each handler mirrors one block of the replicated-clock state machine: the
broadcast loop validates the local pair and fans a frozen snapshot out to
every peer one send per step; the arrival handler feeds the labeling layer,
updates the token echo, and merges or restarts depending on the guards.
Handlers return a :class:`StepNotes` record so the simulator can emit trace
events without reaching into processor internals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

from .errors import BroadcastInProgress, NoBroadcast, NotReady
from .labeling import LabelingState, ServerMessage, SystemConfig
from .labels import Label, eq_m, precedes_lb
from .vcpair import (
    VectorClockPair,
    equal_static,
    exhausted,
    labels_ordered,
    legit_pairs,
    merge,
    pair_invar,
)


@dataclass
class ClientMessage:
    """The clock part of a wire message: sender's snapshot plus the token echo."""

    arriving: VectorClockPair
    rcvd_local: VectorClockPair


@dataclass
class PendingBroadcast:
    """A frozen local snapshot still owed to some destinations.

    The server label and the per-destination echoes are frozen with the
    snapshot: every message of one broadcast is self-consistent (its
    sender_max matches the snapshot's current label, and its cancellation
    echo cannot outrun the successor epoch) even when the labeling state
    advances between the sends.
    """

    snapshot: VectorClockPair
    remaining: List[int]
    sender_max: Optional[Label] = None
    echoes: Optional[dict] = None  # dest -> Label | None, as held at begin


class StepNotes:
    """What happened inside one handler, in occurrence order."""

    __slots__ = ("increments", "revives", "restarts", "restart_cause",
                 "new_labels", "ignored", "merged")

    def __init__(self):
        self.increments = 0
        self.revives = 0
        self.restarts = 0
        self.restart_cause: Optional[str] = None  # "line8" | "receive"
        self.new_labels: List[Label] = []
        self.ignored: Optional[str] = None  # failing guard conjunct on a drop
        self.merged = False


class ProcessorState:
    """All per-processor state: the pair vector, labeling layer, broadcast buffer."""

    __slots__ = ("id", "cfg", "labeling", "pairs", "pending_broadcast",
                 "restart_calls", "revive_calls", "increments")

    def __init__(self, proc_id: int, cfg: SystemConfig):
        self.id = proc_id
        self.cfg = cfg
        self.labeling = LabelingState(proc_id, cfg)
        self.pairs: List[Optional[VectorClockPair]] = [None] * (cfg.n + 1)
        self.pending_broadcast: Optional[PendingBroadcast] = None
        self.restart_calls = 0
        self.revive_calls = 0
        self.increments = 0

    # ``local`` is an alias for pairs[id].
    @property
    def local(self) -> VectorClockPair:
        return self.pairs[self.id]

    @local.setter
    def local(self, value: VectorClockPair) -> None:
        self.pairs[self.id] = value

    # -- invariants -------------------------------------------------------------

    def mirrored_local_labels(self) -> bool:
        """The local pair uses only labels the labeling layer vouches for."""
        local = self.local
        return (self.labeling.is_stored(local.prev_label)
                and eq_m(local.curr_label, self.labeling.get_label()))

    def local_invariants(self) -> bool:
        if not self.labeling.ready:
            raise NotReady("labeling has not run bookkeeping yet")
        return self.mirrored_local_labels() and labels_ordered(self.local, self.labeling)

    # -- pair lifecycle -----------------------------------------------------------

    def restart_local(self, notes: StepNotes, cause: str) -> None:
        """Reset the local pair to zeros under the current maximal label."""
        self.local = VectorClockPair.fresh(self.labeling.get_label(), self.cfg.n, self.cfg.maxint)
        self.restart_calls += 1
        notes.restarts += 1
        notes.restart_cause = cause

    def revive(self, pair: VectorClockPair, notes: StepNotes) -> VectorClockPair:
        """Wrap the pair around: cancel its epochs, demote curr, restart counting."""
        self.labeling.cancel(pair.curr_label, pair.curr_label)
        if pair.prev_label is not pair.curr_label:
            self.labeling.cancel(pair.prev_label, pair.prev_label)
        self.labeling.ensure_dominating(pair.curr_label)
        notes.new_labels.extend(self.labeling.drain_created())
        self.revive_calls += 1
        notes.revives += 1
        fresh_m = list(pair.curr_m)
        return VectorClockPair(
            self.labeling.get_label(), fresh_m, list(pair.curr_m),
            pair.curr_label, list(pair.mid), self.cfg.maxint,
        )

    def increment(self, notes: StepNotes) -> None:
        """Record one local event; revive on exhaustion."""
        self.local.bump(self.id - 1)
        self.increments += 1
        notes.increments += 1
        if exhausted(self.local):
            self.local = self.revive(self.local, notes)

    # -- broadcast loop ---------------------------------------------------------------

    def do_forever_begin(self, maybe_increment: bool) -> Tuple[int, ServerMessage, StepNotes]:
        """One iteration head: validate, snapshot, emit the first send."""
        if self.pending_broadcast is not None:
            raise BroadcastInProgress(f"processor {self.id} still draining a broadcast")
        notes = StepNotes()
        if maybe_increment:
            self.increment(notes)
        self.labeling.label_bookkeeping()
        notes.new_labels.extend(self.labeling.drain_created())
        if not (self.mirrored_local_labels() and labels_ordered(self.local, self.labeling)):
            self.restart_local(notes, "line8")
        if exhausted(self.local):
            self.local = self.revive(self.local, notes)
        remaining = [j for j in self.cfg.proc_ids if j != self.id]
        echoes = {j: self.labeling.max[j] for j in remaining}
        self.pending_broadcast = PendingBroadcast(
            self.local.copy(), remaining, self.labeling.get_label(), echoes)
        dest, message = self._emit_next()
        return dest, message, notes

    def do_forever_continue(self) -> Tuple[int, ServerMessage, StepNotes]:
        """Send the frozen snapshot to the next destination."""
        if self.pending_broadcast is None or not self.pending_broadcast.remaining:
            raise NoBroadcast(f"processor {self.id} has no pending broadcast")
        dest, message = self._emit_next()
        return dest, message, StepNotes()

    def _emit_next(self) -> Tuple[int, ServerMessage]:
        # Pairs inside messages are shared immutable snapshots: every mutation
        # path in the protocol operates on fresh copies, never in place.
        pending = self.pending_broadcast
        dest = pending.remaining.pop(0)
        token = self.pairs[dest]
        if token is None:
            token = VectorClockPair.fresh(self.labeling.get_label(), self.cfg.n, self.cfg.maxint)
        payload = ClientMessage(arriving=pending.snapshot, rcvd_local=token)
        echoes = pending.echoes or {}
        message = ServerMessage(
            sender_max=pending.sender_max,
            last_sent=echoes.get(dest, self.labeling.max[dest]),
            client=payload,
        )
        if not pending.remaining:
            self.pending_broadcast = None
        return dest, message

    # -- message arrival -----------------------------------------------------------------

    def on_message(self, msg: ServerMessage, sender: int) -> StepNotes:
        """Process one arriving message: labeling first, then token and merge."""
        notes = StepNotes()
        payload: ClientMessage = msg.client
        arriving = payload.arriving
        local = self.local

        extra = [arriving.curr_label]
        # One exception to label logging: when the arriving pair has wrapped
        # around past our current item, its prev label is that item's canceled
        # predecessor and is deliberately not fed back into the storage.
        wrapped_past_us = (
            eq_m(arriving.prev_label, local.curr_label)
            and arriving.prev_o == local.mid
            and precedes_lb(local.curr_label, arriving.curr_label)
        )
        if not wrapped_past_us:
            extra.append(arriving.prev_label)
        self.labeling.label_bookkeeping_msg(msg, sender, extra)
        notes.new_labels.extend(self.labeling.drain_created())

        self.pairs[sender] = arriving  # received pairs are immutable snapshots

        if not equal_static(self.local, payload.rcvd_local):
            notes.ignored = "equal_static"
            return notes
        if not self.labeling.legit_msg(msg, arriving.curr_label):
            notes.ignored = "legit_msg"
            return notes
        if not pair_invar(arriving):
            notes.ignored = "pair_invar"
            return notes

        if not legit_pairs(self.local, arriving):
            self.restart_local(notes, "receive")
            return notes

        self.local = merge(self.local, arriving)
        notes.merged = True
        if exhausted(self.local):
            self.local = self.revive(self.local, notes)
        return notes
