"""Vector clock pair tests: frozen worked examples, merge oracle, properties."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stablevc.errors import NoPivot
from stablevc.labels import Label, LabelComponent
from stablevc.vcpair import (
    PivotKind,
    VectorClockItem,
    VectorClockPair,
    causal_precedence,
    comparable_labels,
    eq_lo,
    equal_static,
    event_count_query,
    exhausted,
    exists_overlap,
    labels_ordered,
    legit_pairs,
    lt_lo,
    merge,
    new_events,
    pair_invar,
    vc,
)

MAXINT = 8


def lab(creator, sting, anti=(1, 2)):
    return Label(creator, LabelComponent(sting, frozenset(anti)))


# A small comparable chain of labels for pair construction: L0 < L1 < L2.
L0 = lab(1, 3, (1, 2))
L1 = lab(1, 4, (3, 9))   # 3 in anti, 4 not in L0's anti
L2 = lab(1, 5, (3, 4))   # stings 3,4 in anti


def pair(curr_label, m, o, prev_label=None, prev_o=None, maxint=MAXINT):
    prev_label = prev_label if prev_label is not None else curr_label
    prev_o = prev_o if prev_o is not None else list(o)
    return VectorClockPair(curr_label, list(m), list(o), prev_label,
                           list(prev_o), maxint)


class FakeView:
    """A label view with an explicit canceled set."""

    def __init__(self, canceled=()):
        self.canceled = set(canceled)

    def is_canceled(self, label):
        return id(label) in self.canceled or label.cl is not None


class TestVC:
    def test_basic(self):
        assert vc(pair(L1, [5, 2], [1, 1])) == [4, 1]

    def test_zero(self):
        assert vc(pair(L1, [3, 3], [3, 3])) == [0, 0]

    def test_wraparound(self):
        assert vc(pair(L1, [0, 2], [6, 1])) == [2, 1]


class TestExhausted:
    def test_at_threshold(self):
        assert exhausted(pair(L1, [5, 2], [0, 0])) is True

    def test_zero(self):
        assert exhausted(pair(L1, [4, 4], [4, 4])) is False

    def test_below_threshold(self):
        assert exhausted(pair(L1, [3, 3], [0, 0])) is False

    def test_incremental_sum_tracks_mutations(self):
        z = pair(L1, [0, 0], [0, 0])
        for _ in range(6):
            z.bump(0)
        assert not exhausted(z)
        z.bump(1)
        assert exhausted(z)


class TestLabelsOrdered:
    def test_equal_legit(self):
        assert labels_ordered(pair(L1, [1, 0], [0, 0]), FakeView()) is True

    def test_prev_smaller_and_canceled(self):
        z = pair(L2, [1, 0], [0, 0], prev_label=L1)
        assert labels_ordered(z, FakeView(canceled={id(L1)})) is True

    def test_prev_smaller_but_legit(self):
        z = pair(L2, [1, 0], [0, 0], prev_label=L1)
        assert labels_ordered(z, FakeView()) is False

    def test_equal_but_canceled(self):
        z = pair(L1, [1, 0], [0, 0])
        assert labels_ordered(z, FakeView(canceled={id(L1)})) is False


class TestItemRelations:
    def test_eq_lo_ignores_main(self):
        a = VectorClockItem(L1, [5, 5], [1, 2])
        b = VectorClockItem(L1, [0, 0], [1, 2])
        assert eq_lo(a, b)

    def test_lt_lo_lex_offsets(self):
        a = VectorClockItem(L1, [0, 0], [0, 1])
        b = VectorClockItem(L1, [0, 0], [0, 2])
        assert lt_lo(a, b) and not lt_lo(b, a)

    def test_lt_lo_label_order_first(self):
        a = VectorClockItem(L1, [0, 0], [9, 9])
        b = VectorClockItem(L2, [0, 0], [0, 0])
        assert lt_lo(a, b)

    def test_incomparable_labels_neither(self):
        x = lab(2, 2, (5, 6))
        y = lab(2, 3, (7, 8))
        a = VectorClockItem(x, [0, 0], [0, 0])
        b = VectorClockItem(y, [0, 0], [0, 0])
        assert not lt_lo(a, b) and not lt_lo(b, a) and not eq_lo(a, b)


class TestExistsOverlap:
    def test_identical_pairs_both_match(self):
        z = pair(L1, [3, 1], [0, 0])
        piv = exists_overlap(z, z.copy())
        assert piv is not None and piv.kind is PivotKind.BOTH_MATCH

    def test_concurrent_wrap_prev_prev(self):
        base_prev_o = [0, 0]
        za = VectorClockPair(L2, [5, 2], [5, 2], L1, list(base_prev_o), MAXINT)
        zb = VectorClockPair(L2, [4, 3], [4, 3], L1, list(base_prev_o), MAXINT)
        piv = exists_overlap(za, zb)
        assert piv is not None and piv.kind is PivotKind.PREV_PREV

    def test_one_side_wrapped(self):
        loc = pair(L1, [5, 2], [0, 0])                      # not wrapped
        arr = VectorClockPair(L2, [5, 2], [5, 2], L1, [0, 0], MAXINT)  # wrapped
        piv = exists_overlap(loc, arr)
        assert piv is not None and piv.kind is PivotKind.LOC_CURR_IS_ARR_PREV
        piv2 = exists_overlap(arr, loc)
        assert piv2 is not None and piv2.kind is PivotKind.LOC_PREV_IS_ARR_CURR

    def test_no_overlap(self):
        assert exists_overlap(pair(L1, [0, 0], [0, 0]),
                              pair(L2, [0, 0], [1, 1])) is None


class TestNewEvents:
    def test_pivot_at_curr(self):
        z = pair(L1, [5, 2], [1, 1])
        piv = exists_overlap(z, z.copy())
        assert new_events(z, piv) == [4, 1]

    def test_pivot_at_prev_frozen_example(self):
        # curr.m=[1,0], curr.o=prev.m=[6,2], prev.o=[4,1] -> [3+2, 6+1]=[5,7]
        z = VectorClockPair(L2, [1, 0], [6, 2], L1, [4, 1], MAXINT)
        arr = pair(L1, [9, 9], [4, 1])  # matches z.prev in label and offset
        piv = exists_overlap(z, arr)
        assert piv is not None
        assert new_events(z, piv) == [5, 7]

    def test_fresh_revive_counts_previous_era(self):
        z = VectorClockPair(L2, [6, 2], [6, 2], L1, [4, 1], MAXINT)
        piv = exists_overlap(z, pair(L1, [0, 0], [4, 1]))
        assert new_events(z, piv) == [2, 1]  # curr contributes zero

    def test_no_pivot_match_raises(self):
        z = pair(L1, [1, 1], [0, 0])
        from stablevc.vcpair import Pivot
        with pytest.raises(NoPivot):
            new_events(z, Pivot(PivotKind.BOTH_MATCH, L2, [3, 3]))


class TestMerge:
    def test_same_static_elementwise_max(self):
        loc = pair(L1, [3, 1], [0, 0])
        arr = pair(L1, [2, 4], [0, 0])
        out = merge(loc, arr)
        assert out.curr_m == [3, 4]
        assert equal_static(out, loc)

    def test_idempotent(self):
        z = pair(L1, [3, 1], [0, 0])
        out = merge(z, z.copy())
        assert out == z

    def test_alias_preserved(self):
        loc = pair(L1, [3, 1], [0, 0])
        out = merge(loc, pair(L1, [2, 4], [0, 0]))
        assert out.alias_ok()

    def test_wrapped_arrival_adopted_with_counts(self):
        # loc is mid-era; arr wrapped past loc's era: counts are preserved.
        loc = pair(L1, [5, 2], [0, 0])
        arr = VectorClockPair(L2, [0, 3], [6, 2], L1, [0, 0], MAXINT)
        out = merge(loc, arr)
        assert out.curr_label is L2
        piv = exists_overlap(out, loc)
        assert piv is not None
        joined = new_events(out, piv)
        assert joined[0] >= 5 and joined[1] >= 3

    def test_no_pivot_raises(self):
        with pytest.raises(NoPivot):
            merge(pair(L1, [0, 0], [0, 0]), pair(L2, [0, 0], [1, 1]))

    def test_join_property_against_shared_pivot(self):
        rng = random.Random(5)
        for _ in range(300):
            o = [rng.randrange(MAXINT) for _ in range(2)]
            loc = pair(L1, [rng.randrange(MAXINT) for _ in range(2)], o)
            arr = pair(L1, [rng.randrange(MAXINT) for _ in range(2)], o,
                       prev_o=loc.prev_o)
            out = merge(loc, arr)
            piv = exists_overlap(loc, arr)
            got = new_events(out, piv)
            a = new_events(loc, piv)
            b = new_events(arr, piv)
            assert got == [max(x, y) for x, y in zip(a, b)]

    def test_merge_matches_unbounded_join_two_proc_script(self):
        # Brute-force oracle: an unbounded two-processor history with one
        # wrap-around; the merged bounded pair must agree mod MAXINT.
        unbounded = [[0, 0], [0, 0]]
        za = pair(L0, [0, 0], [0, 0])
        zb = pair(L0, [0, 0], [0, 0])
        rng = random.Random(13)
        wrapped = False
        for _ in range(30):
            actor = rng.randrange(2)
            z = za if actor == 0 else zb
            z.bump(actor)
            unbounded[actor][actor] += 1
            if not wrapped and exhausted(z):
                old = z
                nz = VectorClockPair(L1, list(old.curr_m), list(old.curr_m),
                                     old.curr_label, list(old.mid), MAXINT)
                if actor == 0:
                    za = nz
                else:
                    zb = nz
                wrapped = True
        out = merge(za, zb)
        join = [max(a, b) for a, b in zip(*unbounded)]
        piv = exists_overlap(za, zb)
        assert piv is not None
        counted = new_events(out, piv)
        for k in range(2):
            assert counted[k] % MAXINT == join[k] % MAXINT


class TestPredicates:
    def test_pair_invar_fresh_restart(self):
        z = VectorClockPair.fresh(L1, 2, MAXINT)
        assert pair_invar(z)
        assert equal_static(z, z.copy())

    def test_pair_invar_exhausted_false(self):
        assert not pair_invar(pair(L1, [5, 2], [0, 0]))

    def test_pair_invar_label_order(self):
        assert not pair_invar(pair(L0, [1, 0], [0, 0], prev_label=L1))
        assert pair_invar(pair(L1, [1, 0], [0, 0], prev_label=L0))

    def test_equal_static_ignores_curr_m(self):
        a = pair(L1, [3, 1], [1, 1], prev_o=[0, 0])
        b = pair(L1, [5, 0], [1, 1], prev_o=[0, 0])
        assert equal_static(a, b)
        c = pair(L1, [3, 1], [2, 1], prev_o=[0, 0])
        assert not equal_static(a, c)

    def test_comparable_labels(self):
        good = (pair(L1, [0, 0], [0, 0], prev_label=L0),
                pair(L2, [0, 0], [0, 0], prev_label=L1))
        assert comparable_labels(good)
        x = pair(lab(2, 2, (5, 6)), [0, 0], [0, 0])
        y = pair(lab(2, 3, (7, 8)), [0, 0], [0, 0])
        assert not comparable_labels((x, y))

    def test_legit_pairs(self):
        a = pair(L1, [1, 0], [0, 0])
        assert legit_pairs(a, pair(L1, [0, 1], [0, 0]))
        assert not legit_pairs(a, pair(L2, [0, 0], [3, 3], prev_o=[2, 2]))


class TestEventCountQuery:
    def test_same_static(self):
        zx = pair(L1, [2, 0], [0, 0])
        zy = pair(L1, [5, 0], [0, 0])
        assert event_count_query(zx, zy, 1) == 3

    def test_identical_zero(self):
        z = pair(L1, [2, 0], [0, 0])
        assert event_count_query(z, z.copy(), 1) == 0

    def test_one_wrap(self):
        zx = pair(L0, [5, 2], [1, 1])
        zy = VectorClockPair(L1, [2, 0], [5, 2], L0, [1, 1], MAXINT)
        # zx counted 4 events of p1 since [1,1]; zy counts 4 + 5 since then.
        assert event_count_query(zx, zy, 1) == (4 + 5) - 4

    def test_concurrent_wrap_shared_prev(self):
        zx = VectorClockPair(L1, [6, 2], [5, 2], L0, [1, 1], MAXINT)
        zy = VectorClockPair(L1, [7, 3], [6, 2], L0, [1, 1], MAXINT)
        got = event_count_query(zx, zy, 1)
        expected = ((7 - 6) % MAXINT + (6 - 1) % MAXINT) \
            - ((6 - 5) % MAXINT + (5 - 1) % MAXINT)
        assert got == expected

    def test_unrelated_none(self):
        zx = pair(L0, [1, 0], [0, 0])
        zy = pair(L2, [1, 0], [3, 3], prev_o=[2, 2])
        assert event_count_query(zx, zy, 1) is None


class TestCausalPrecedence:
    def test_irreflexive(self):
        z = pair(L1, [2, 1], [0, 0])
        assert causal_precedence(z, z.copy()) is False

    def test_one_more_event(self):
        z = pair(L1, [2, 1], [0, 0])
        ahead = pair(L1, [3, 1], [0, 0])
        assert causal_precedence(z, ahead) is True
        assert causal_precedence(ahead, z) is False

    def test_concurrent_two_event_histories(self):
        a = pair(L1, [1, 0], [0, 0])
        b = pair(L1, [0, 1], [0, 0])
        assert not causal_precedence(a, b)
        assert not causal_precedence(b, a)

    def test_no_pivot_false(self):
        assert causal_precedence(pair(L0, [1, 0], [0, 0]),
                                 pair(L2, [1, 0], [3, 3], prev_o=[2, 2])) is False


class TestAlias:
    def test_shared_storage(self):
        z = pair(L1, [1, 1], [0, 0])
        assert z.curr.o is z.prev.m
        z.curr.o[0] = 5
        assert z.prev.m[0] == 5

    def test_from_items_requires_alias(self):
        curr = VectorClockItem(L1, [1, 1], [0, 0])
        prev = VectorClockItem(L1, [9, 9], [0, 0])
        with pytest.raises(ValueError):
            VectorClockPair.from_items(curr, prev, MAXINT)
        prev_ok = VectorClockItem(L1, [0, 0], [0, 0])
        z = VectorClockPair.from_items(curr, prev_ok, MAXINT)
        assert z.alias_ok()


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(0, MAXINT - 1), min_size=2, max_size=2),
       st.lists(st.integers(0, MAXINT - 1), min_size=2, max_size=2),
       st.lists(st.integers(0, MAXINT - 1), min_size=2, max_size=2))
def test_merge_commutes_on_counts(m_loc, m_arr, offset):
    loc = pair(L1, m_loc, offset)
    arr = pair(L1, m_arr, offset)
    ab = merge(loc, arr)
    ba = merge(arr, loc)
    piv = exists_overlap(loc, arr)
    assert new_events(ab, piv) == new_events(ba, piv)
    assert ab.curr_m == ba.curr_m


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(0, MAXINT - 1), min_size=3, max_size=3),
       st.lists(st.integers(0, MAXINT - 1), min_size=3, max_size=3))
def test_vc_mod_identity(m, o):
    z = VectorClockPair(L1, list(m), list(o), L1, list(o), MAXINT)
    values = vc(z)
    assert all(0 <= value < MAXINT for value in values)
    assert values == [(a - b) % MAXINT for a, b in zip(m, o)]


def test_canonical_pair_text_form():
    from stablevc.trace import format_pair
    z = VectorClockPair(lab(2, 4, (1, 3)), [5, 2], [1, 1], lab(1, 3, (1, 2)),
                        [0, 0], MAXINT)
    text = format_pair(z)
    assert text == "⟨2:4:{1,3}|5,2|1,1 ∥ 1:3:{1,2}|1,1|0,0⟩"
