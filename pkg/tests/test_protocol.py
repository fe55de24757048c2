"""Protocol handler tests: restart, revive, increment, broadcast, arrival."""

import pytest

from stablevc.errors import BroadcastInProgress, NoBroadcast
from stablevc.labeling import SystemConfig
from stablevc.labels import eq_m, precedes_lb
from stablevc.protocol import ProcessorState, StepNotes
from stablevc.simnet import World
from stablevc.vcpair import equal_static, exhausted, vc

CFG = SystemConfig(n=3, c=1, maxint=16)


def clean_world():
    return World.clean_start(CFG)


def _spy_extras(monkeypatch, receiver):
    """Capture the extra labels the receiver feeds to its labeling layer."""
    from stablevc.labeling import LabelingState
    seen = []
    original = LabelingState.label_bookkeeping_msg

    def spy(self, message, sender_id, extra_labels):
        if self is receiver.labeling:
            seen.extend(extra_labels)
        return original(self, message, sender_id, extra_labels)

    monkeypatch.setattr(LabelingState, "label_bookkeeping_msg", spy)
    return seen


def drain_broadcast(state):
    sends = []
    while state.pending_broadcast is not None:
        sends.append(state.do_forever_continue())
    return sends


class TestRestartLocal:
    def test_resets_to_zero_under_max_label(self):
        world = clean_world()
        state = world.procs[1]
        state.local.bump(0)
        notes = StepNotes()
        state.restart_local(notes, "line8")
        assert vc(state.local) == [0, 0, 0]
        assert eq_m(state.local.curr_label, state.labeling.get_label())
        assert state.restart_calls == 1 and notes.restarts == 1

    def test_invariants_hold_after(self):
        world = clean_world()
        state = world.procs[2]
        state.restart_local(StepNotes(), "line8")
        assert state.local_invariants()

    def test_fixpoint_when_label_stable(self):
        world = clean_world()
        state = world.procs[1]
        state.restart_local(StepNotes(), "line8")
        first = state.local.copy()
        state.restart_local(StepNotes(), "line8")
        assert state.local == first


class TestRevive:
    def test_wrap_demotes_curr(self):
        world = clean_world()
        state = world.procs[1]
        for _ in range(15):
            state.local.bump(0)
        assert exhausted(state.local)
        old = state.local.copy()
        notes = StepNotes()
        state.local = state.revive(state.local, notes)
        new = state.local
        assert vc(new) == [0, 0, 0]
        assert new.alias_ok()
        assert not exhausted(new)
        assert eq_m(new.prev_label, old.curr_label)
        assert new.prev_o == old.mid and new.mid == old.curr_m
        assert state.labeling.is_canceled(old.curr_label)
        assert precedes_lb(old.curr_label, new.curr_label)
        assert notes.revives == 1

    def test_prev_pivot_matches_old_curr(self):
        world = clean_world()
        state = world.procs[2]
        for _ in range(15):
            state.local.bump(1)
        old = state.local.copy()
        state.local = state.revive(state.local, StepNotes())
        # the demoted item matches the old current item in label and offset
        assert eq_m(state.local.prev_label, old.curr_label)
        assert state.local.prev_o == old.mid

    def test_invariants_hold_after(self):
        world = clean_world()
        state = world.procs[3]
        for _ in range(15):
            state.local.bump(2)
        state.local = state.revive(state.local, StepNotes())
        assert state.local_invariants()

    def test_concurrent_revivers_mint_identical_successor(self):
        world = clean_world()
        a, b = world.procs[1], world.procs[2]
        for _ in range(15):
            a.local.bump(0)
            b.local.bump(1)
        a.local = a.revive(a.local, StepNotes())
        b.local = b.revive(b.local, StepNotes())
        assert eq_m(a.local.curr_label, b.local.curr_label)


class TestIncrement:
    def test_counts_own_index_only(self):
        world = clean_world()
        state = world.procs[2]
        state.increment(StepNotes())
        assert vc(state.local) == [0, 1, 0]
        assert state.increments == 1

    def test_revives_at_exhaustion_boundary(self):
        world = clean_world()
        state = world.procs[1]
        for _ in range(14):
            state.local.bump(0)
        notes = StepNotes()
        state.increment(notes)  # sum reaches MAXINT-1 = 15
        assert notes.revives == 1
        assert vc(state.local) == [0, 0, 0]
        assert state.local.prev_o == [0, 0, 0]
        assert state.local.mid == [15, 0, 0]


class TestBroadcast:
    def test_ascending_destinations(self):
        world = clean_world()
        state = world.procs[2]
        dest1, _msg1, _ = state.do_forever_begin(False)
        sends = drain_broadcast(state)
        dests = [dest1] + [d for d, _m, _n in sends]
        assert dests == [1, 3]

    def test_begin_while_pending_rejected(self):
        world = clean_world()
        state = world.procs[1]
        state.do_forever_begin(False)
        with pytest.raises(BroadcastInProgress):
            state.do_forever_begin(False)

    def test_continue_without_pending_rejected(self):
        world = clean_world()
        state = world.procs[1]
        with pytest.raises(NoBroadcast):
            state.do_forever_continue()

    def test_snapshot_immutable_across_interleaved_changes(self):
        world = clean_world()
        state = world.procs[1]
        _dest, first_msg, _ = state.do_forever_begin(False)
        # local changes between the sends of one broadcast
        state.local.bump(0)
        _dest2, second_msg, _ = state.do_forever_continue()
        assert first_msg.client.arriving == second_msg.client.arriving
        assert eq_m(first_msg.sender_max, second_msg.sender_max)

    def test_messages_are_self_consistent(self):
        world = clean_world()
        state = world.procs[1]
        _d, msg, _ = state.do_forever_begin(True)
        assert state.labeling.legit_msg(msg, msg.client.arriving.curr_label)

    def test_increment_applied_before_snapshot(self):
        world = clean_world()
        state = world.procs[3]
        _d, msg, notes = state.do_forever_begin(True)
        assert notes.increments == 1
        assert vc(msg.client.arriving) == [0, 0, 1]


class TestOnMessage:
    def _deliver(self, world, src, dst):
        state = world.procs[src]
        sends = []
        dest, msg, _ = state.do_forever_begin(False)
        sends.append((dest, msg))
        sends += [(d, m) for d, m, _n in drain_broadcast(state)]
        for dest, msg in sends:
            if dest == dst:
                return world.procs[dst].on_message(msg, src)
        raise AssertionError("no message addressed to dst")

    def test_merge_takes_elementwise_max(self):
        world = clean_world()
        world.procs[1].local.bump(0)
        world.procs[2].local.bump(1)
        notes = self._deliver(world, 1, 2)
        assert notes.merged
        assert vc(world.procs[2].local) == [1, 1, 0]

    def test_token_updated_even_when_ignored(self):
        world = clean_world()
        sender = world.procs[1]
        receiver = world.procs[2]
        dest, msg, _ = sender.do_forever_begin(False)
        drain_broadcast(sender)
        assert dest == 2
        # stale echo: receiver's local static no longer matches what p1 holds
        receiver.restart_local(StepNotes(), "line8")
        receiver.local.bump(1)
        receiver.local.bump(1)
        before = receiver.pairs[1]
        msg.client.rcvd_local.curr_m[0] = (msg.client.rcvd_local.curr_m[0] + 1) % 16
        wrong_echo = msg.client.rcvd_local
        wrong_echo.mid[0] = (wrong_echo.mid[0] + 3) % 16
        notes = receiver.on_message(msg, 1)
        assert notes.ignored == "equal_static"
        assert receiver.pairs[1] is not before  # token still updated

    def test_stale_sender_max_ignored(self):
        world = clean_world()
        sender = world.procs[1]
        receiver = world.procs[2]
        dest, msg, _ = sender.do_forever_begin(False)
        drain_broadcast(sender)
        stale = ProcessorState(1, CFG)  # fabricate a mismatched server label
        stale.labeling.label_bookkeeping()
        msg.sender_max = stale.labeling.get_label()
        notes = receiver.on_message(msg, 1)
        assert notes.ignored == "legit_msg"

    def test_exhausted_arrival_ignored(self):
        world = clean_world()
        sender = world.procs[1]
        receiver = world.procs[2]
        for _ in range(15):
            sender.local.bump(0)
        dest, msg, notes0 = sender.do_forever_begin(False)
        # begin revives before snapshotting, so force an exhausted payload
        msg.client.arriving.curr_m[0] = (msg.client.arriving.mid[0] + 15) % 16
        msg.client.arriving._vcsum = 15
        got = receiver.on_message(msg, 1)
        assert got.ignored == "pair_invar"

    def test_unmergeable_pair_restarts(self):
        world = clean_world()
        receiver = world.procs[2]
        sender = world.procs[1]
        dest, msg, _ = sender.do_forever_begin(False)
        drain_broadcast(sender)
        # give the arriving pair an unrelated static part with matching guard
        arr = msg.client.arriving
        arr.mid[0] = (arr.mid[0] + 3) % 16
        arr.prev_o[1] = (arr.prev_o[1] + 5) % 16
        arr._vcsum = sum((a - b) % 16 for a, b in zip(arr.curr_m, arr.mid))
        notes = receiver.on_message(msg, 1)
        assert notes.restarts == 1 and notes.restart_cause == "receive"
        assert receiver.local_invariants()

    def test_wrapped_prev_label_not_fed_to_labeling(self, monkeypatch):
        world = clean_world()
        sender = world.procs[1]
        receiver = world.procs[2]
        for _ in range(15):
            sender.local.bump(0)
        sender.local = sender.revive(sender.local, StepNotes())
        old_label = sender.local.prev_label
        dest, msg, _ = sender.do_forever_begin(False)
        drain_broadcast(sender)
        seen = _spy_extras(monkeypatch, receiver)
        got = receiver.on_message(msg, 1)
        assert got.merged
        assert any(eq_m(lab, msg.client.arriving.curr_label) for lab in seen)
        assert not any(eq_m(lab, old_label) for lab in seen)

    def test_ordinary_prev_label_fed_to_labeling(self, monkeypatch):
        # Without the wrap relation the arriving prev label is logged.
        world = clean_world()
        sender = world.procs[1]
        receiver = world.procs[2]
        dest, msg, _ = sender.do_forever_begin(False)
        drain_broadcast(sender)
        seen = _spy_extras(monkeypatch, receiver)
        receiver.on_message(msg, 1)
        assert any(eq_m(lab, msg.client.arriving.prev_label) for lab in seen)

    def test_merge_then_revive_when_exhausted(self):
        world = clean_world()
        sender = world.procs[1]
        receiver = world.procs[2]
        for _ in range(14):
            sender.local.bump(0)
        receiver.local.bump(1)
        dest, msg, _ = sender.do_forever_begin(False)
        drain_broadcast(sender)
        notes = receiver.on_message(msg, 1)
        assert notes.merged and notes.revives == 1
        assert not exhausted(receiver.local)
        assert receiver.local_invariants()


class TestLocalInvariants:
    def test_clean_start_holds(self):
        world = clean_world()
        for i in CFG.proc_ids:
            assert world.procs[i].local_invariants()

    def test_corrupted_prev_label_fails(self):
        world = clean_world()
        state = world.procs[1]
        other = ProcessorState(1, CFG)
        other.labeling.label_bookkeeping()
        state.local.prev_label = other.labeling.get_label()  # unknown locally
        assert not state.local_invariants()
