"""Overflow-tolerant vector clock pairs: items, orders, pivots, merge, queries.

A pair holds a current and a previous item; the current item's offset and
the previous item's main vector are the same storage, so demoting ``curr``
to ``prev`` on wrap-around keeps one era of history countable.  All modular
arithmetic happens in [0, MAXINT); lifted sums use plain Python ints.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

from .errors import NoPivot
from .labels import Label, eq_m, precedes_lb, preceq_lb


@dataclass
class VectorClockItem:
    """A view of one side of a pair: label plus main/offset vector references."""

    label: Label
    m: List[int]
    o: List[int]


class VectorClockPair:
    """⟨curr, prev⟩ items with curr.o and prev.m aliased to one vector."""

    __slots__ = ("curr_label", "prev_label", "curr_m", "mid", "prev_o", "_vcsum", "maxint")

    def __init__(self, curr_label: Label, curr_m: List[int], mid: List[int],
                 prev_label: Label, prev_o: List[int], maxint: int):
        self.curr_label = curr_label
        self.prev_label = prev_label
        self.curr_m = curr_m
        self.mid = mid  # shared storage: curr.o and prev.m
        self.prev_o = prev_o
        self.maxint = maxint
        self._vcsum = sum((a - b) % maxint for a, b in zip(curr_m, mid))

    # -- construction ---------------------------------------------------------

    @classmethod
    def fresh(cls, label: Label, n: int, maxint: int) -> "VectorClockPair":
        """The restart value ⟨y, y⟩ with y = ⟨label, zeros, zeros⟩."""
        return cls(label, [0] * n, [0] * n, label, [0] * n, maxint)

    @classmethod
    def from_items(cls, curr: VectorClockItem, prev: VectorClockItem,
                   maxint: int) -> "VectorClockPair":
        if curr.o != prev.m:
            raise ValueError("curr.o must equal prev.m (shared storage)")
        mid = list(curr.o)
        return cls(curr.label, list(curr.m), mid, prev.label, list(prev.o), maxint)

    def copy(self) -> "VectorClockPair":
        dup = VectorClockPair.__new__(VectorClockPair)
        dup.curr_label = self.curr_label
        dup.prev_label = self.prev_label
        dup.curr_m = list(self.curr_m)
        dup.mid = list(self.mid)
        dup.prev_o = list(self.prev_o)
        dup.maxint = self.maxint
        dup._vcsum = self._vcsum
        return dup

    # -- views ------------------------------------------------------------------

    @property
    def curr(self) -> VectorClockItem:
        return VectorClockItem(self.curr_label, self.curr_m, self.mid)

    @property
    def prev(self) -> VectorClockItem:
        return VectorClockItem(self.prev_label, self.mid, self.prev_o)

    # -- mutation (keeps the cached vc sum exact) ----------------------------------

    def bump(self, index: int) -> None:
        """Increment curr.m[index] modulo MAXINT."""
        maxint = self.maxint
        old = (self.curr_m[index] - self.mid[index]) % maxint
        self.curr_m[index] = (self.curr_m[index] + 1) % maxint
        self._vcsum += ((old + 1) % maxint) - old

    def set_curr_m(self, index: int, value: int) -> None:
        maxint = self.maxint
        old = (self.curr_m[index] - self.mid[index]) % maxint
        self.curr_m[index] = value % maxint
        self._vcsum += ((value - self.mid[index]) % maxint) - old

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VectorClockPair):
            return NotImplemented
        return (
            eq_m(self.curr_label, other.curr_label)
            and eq_m(self.prev_label, other.prev_label)
            and self.curr_m == other.curr_m
            and self.mid == other.mid
            and self.prev_o == other.prev_o
        )

    def __repr__(self) -> str:
        return (f"⟨{self.curr_label!r}|{self.curr_m}|{self.mid} ∥ "
                f"{self.prev_label!r}|{self.mid}|{self.prev_o}⟩")

    def alias_ok(self) -> bool:
        """The structural invariant: curr.o and prev.m are the same storage."""
        return self.curr.o is self.prev.m


class PivotKind(Enum):
    BOTH_MATCH = "both_match"            # curr and prev both match (no wrap)
    PREV_PREV = "prev_prev"              # concurrent wrap-around
    LOC_CURR_IS_ARR_PREV = "loc_curr_is_arr_prev"  # the other pair wrapped
    LOC_PREV_IS_ARR_CURR = "loc_prev_is_arr_curr"  # this pair wrapped


@dataclass
class Pivot:
    """A common (label, offset) reference item between two pairs."""

    kind: PivotKind
    label: Label
    vector: List[int]  # the matched item's offset (equal on both sides)


# -- vector clock value and conditions ------------------------------------------


def vc(pair: VectorClockPair) -> List[int]:
    """The pair's vector clock value: (curr.m - curr.o) mod MAXINT."""
    maxint = pair.maxint
    return [(a - b) % maxint for a, b in zip(pair.curr_m, pair.mid)]


def exhausted(pair: VectorClockPair) -> bool:
    """True when the counted events reach MAXINT - 1 (wrap-around needed)."""
    return pair._vcsum >= pair.maxint - 1


def labels_ordered(pair: VectorClockPair, label_view) -> bool:
    """The pair's labels form a proper era succession.

    Either prev is a canceled strictly-smaller epoch, or the two labels are
    the same legitimate epoch.  ``label_view`` provides ``is_canceled``.
    """
    if eq_m(pair.prev_label, pair.curr_label):
        return not label_view.is_canceled(pair.curr_label)
    return (precedes_lb(pair.prev_label, pair.curr_label)
            and label_view.is_canceled(pair.prev_label))


# -- item relations ---------------------------------------------------------------


def eq_lo(a: VectorClockItem, b: VectorClockItem) -> bool:
    """Items match in label and offset (main vectors are ignored)."""
    return eq_m(a.label, b.label) and a.o == b.o


def lt_lo(a: VectorClockItem, b: VectorClockItem) -> bool:
    """Item order: label order first, then lexicographic offset order."""
    if eq_m(a.label, b.label):
        return a.o < b.o
    return precedes_lb(a.label, b.label)


def le_lo(a: VectorClockItem, b: VectorClockItem) -> bool:
    return eq_lo(a, b) or lt_lo(a, b)


# -- pivots and merging --------------------------------------------------------------


def exists_overlap(loc: VectorClockPair, arr: VectorClockPair) -> Optional[Pivot]:
    """The <_{l,o}-maximum common item of the two pairs, if any.

    The current item of a well-formed pair never precedes its previous item,
    so a match involving a ``curr`` side is preferred over the prev-prev match.
    """
    curr_curr = eq_m(loc.curr_label, arr.curr_label) and loc.mid == arr.mid
    prev_prev = eq_m(loc.prev_label, arr.prev_label) and loc.prev_o == arr.prev_o
    if curr_curr and prev_prev:
        return Pivot(PivotKind.BOTH_MATCH, loc.curr_label, list(loc.mid))
    if eq_m(loc.curr_label, arr.prev_label) and loc.mid == arr.prev_o:
        return Pivot(PivotKind.LOC_CURR_IS_ARR_PREV, loc.curr_label, list(loc.mid))
    if eq_m(loc.prev_label, arr.curr_label) and loc.prev_o == arr.mid:
        return Pivot(PivotKind.LOC_PREV_IS_ARR_CURR, loc.prev_label, list(loc.prev_o))
    if prev_prev:
        return Pivot(PivotKind.PREV_PREV, loc.prev_label, list(loc.prev_o))
    return None


def new_events(pair: VectorClockPair, pivot: Pivot) -> List[int]:
    """Events the pair counts since the pivot item, as exact naturals.

    When the pivot matches ``curr`` this is the plain vector clock value;
    when it matches ``prev`` the previous era's events are added on top, so
    entries may exceed MAXINT.
    """
    return _events_since(pair, pivot.label, pivot.vector)


def merge(loc: VectorClockPair, arr: VectorClockPair) -> VectorClockPair:
    """Join two pairs sharing a pivot: keep the greater static part, take
    the per-entry maximum of events counted since the pivot."""
    if eq_m(loc.curr_label, arr.curr_label) and loc.mid == arr.mid:
        pivot_label, pivot_vec = loc.curr_label, loc.mid
    elif eq_m(loc.curr_label, arr.prev_label) and loc.mid == arr.prev_o:
        pivot_label, pivot_vec = loc.curr_label, loc.mid
    elif eq_m(loc.prev_label, arr.curr_label) and loc.prev_o == arr.mid:
        pivot_label, pivot_vec = loc.prev_label, loc.prev_o
    elif eq_m(loc.prev_label, arr.prev_label) and loc.prev_o == arr.prev_o:
        pivot_label, pivot_vec = loc.prev_label, loc.prev_o
    else:
        raise NoPivot("pairs share no common item")

    if eq_m(arr.curr_label, loc.curr_label):
        if arr.mid == loc.mid:
            init_to_loc = le_lo(arr.prev, loc.prev)
        else:
            init_to_loc = arr.mid < loc.mid
    else:
        init_to_loc = precedes_lb(arr.curr_label, loc.curr_label)
    output = loc.copy() if init_to_loc else arr.copy()

    loc_events = _events_since(loc, pivot_label, pivot_vec)
    arr_events = _events_since(arr, pivot_label, pivot_vec)
    maxint = output.maxint
    curr_m = output.curr_m
    for k in range(len(curr_m)):
        gain = loc_events[k] if loc_events[k] >= arr_events[k] else arr_events[k]
        curr_m[k] = (pivot_vec[k] + gain) % maxint
    mid = output.mid
    output._vcsum = sum((curr_m[k] - mid[k]) % maxint for k in range(len(curr_m)))
    return output


def _events_since(pair: VectorClockPair, pivot_label: Label,
                  pivot_vec: List[int]) -> List[int]:
    maxint = pair.maxint
    if eq_m(pivot_label, pair.curr_label) and pivot_vec == pair.mid:
        return [(a - b) % maxint for a, b in zip(pair.curr_m, pair.mid)]
    if eq_m(pivot_label, pair.prev_label) and pivot_vec == pair.prev_o:
        return [
            (a - b) % maxint + (b - c) % maxint
            for a, b, c in zip(pair.curr_m, pair.mid, pair.prev_o)
        ]
    raise NoPivot("pivot matches neither curr nor prev of the pair")


# -- user-facing queries -----------------------------------------------------------


def equal_static(a: VectorClockPair, b: VectorClockPair) -> bool:
    """Pairs equal everywhere except possibly curr.m."""
    ca, cb = a.curr_label, b.curr_label
    if not (ca is cb or (ca.creator == cb.creator and ca.ml == cb.ml)):
        return False
    pa, pb = a.prev_label, b.prev_label
    if not (pa is pb or (pa.creator == pb.creator and pa.ml == pb.ml)):
        return False
    return a.mid == b.mid and a.prev_o == b.prev_o


def pair_invar(pair: VectorClockPair) -> bool:
    """Not exhausted and the previous label does not exceed the current one."""
    return not exhausted(pair) and preceq_lb(pair.prev_label, pair.curr_label)


def comparable_labels(pairs) -> bool:
    """Every two labels across the pairs are related under the label order."""
    labels: List[Label] = []
    for pair in pairs:
        labels.append(pair.curr_label)
        labels.append(pair.prev_label)
    for i in range(len(labels)):
        a = labels[i]
        for j in range(i + 1, len(labels)):
            b = labels[j]
            if a is b or a.creator != b.creator or a.ml is b.ml:
                continue  # distinct creators are always creator-ordered
            if a.ml == b.ml:
                continue
            sa, sb = a.ml.sting, b.ml.sting
            if not ((sa in b.ml.antistings and sb not in a.ml.antistings)
                    or (sb in a.ml.antistings and sa not in b.ml.antistings)):
                return False
    return True


def legit_pairs(a: VectorClockPair, b: VectorClockPair) -> bool:
    return comparable_labels((a, b)) and exists_overlap(a, b) is not None


def event_count_query(zx: VectorClockPair, zy: VectorClockPair,
                      proc: int) -> Optional[int]:
    """Counter increments of processor ``proc`` between the two snapshots.

    Same static part: a modular vector clock difference.  One wrap-around
    between the snapshots (x's current item is y's previous): count y's
    events since the pivot and remove those x had already counted at it.
    A concurrent wrap (the snapshots share only their previous item, e.g.
    after adopting a peer's wrap of the same era): difference of both sides'
    counts since the shared reference.  Otherwise the snapshots share no
    reference and the answer is unknowable.
    """
    i = proc - 1
    if equal_static(zx, zy):
        return (vc(zy)[i] - vc(zx)[i]) % zx.maxint
    if eq_lo(zx.curr, zy.prev):
        pivot = Pivot(PivotKind.LOC_CURR_IS_ARR_PREV, zy.prev.label, list(zy.prev.o))
        return new_events(zy, pivot)[i] - vc(zx)[i]
    if eq_lo(zx.prev, zy.prev):
        pivot = Pivot(PivotKind.PREV_PREV, zy.prev.label, list(zy.prev.o))
        return new_events(zy, pivot)[i] - new_events(zx, pivot)[i]
    return None


def causal_precedence(z: VectorClockPair, zp: VectorClockPair) -> bool:
    """True when z's counted events are dominated by zp's with one strict gap."""
    pivot = exists_overlap(z, zp)
    if pivot is None:
        return False
    left = new_events(z, pivot)
    right = new_events(zp, pivot)
    strict = False
    for a, b in zip(left, right):
        if a > b:
            return False
        if a < b:
            strict = True
    return strict
