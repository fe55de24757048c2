"""Bounded epoch labels: components, orders, cancellation, fresh-label construction.

A label component is a (sting, antistings) pair over the finite domain
D = {1, ..., k^2 + 1}.  Components are partially ordered by ``precedes_b``;
full labels add a creator id and are ordered creator-first by
``precedes_lb``.  A label optionally carries a canceling component ``cl``
that serves as evidence the label is obsolete.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, Optional, Sequence, Set

from .errors import DomainExhausted, PreconditionViolated


@dataclass(frozen=True)
class LabelConfig:
    """Sizing of the label domain.

    ``k`` is the antistings cardinality; the sting domain is
    D = {1, ..., k^2 + 1}, the smallest domain that always leaves a fresh
    sting for ``next_b`` over up to k inputs.
    """

    k: int
    domain_size: int = field(init=False)

    def __post_init__(self) -> None:
        if self.k < 2:
            raise PreconditionViolated(f"k must be >= 2, got {self.k}")
        object.__setattr__(self, "domain_size", self.k * self.k + 1)


class LabelComponent:
    """Immutable (sting, antistings) pair; hash precomputed for fast dedup."""

    __slots__ = ("sting", "antistings", "_hash", "_lo", "_hi", "__weakref__")

    def __init__(self, sting: int, antistings: FrozenSet[int]):
        self.sting = sting
        self.antistings = antistings if isinstance(antistings, frozenset) else frozenset(antistings)
        self._hash = hash((sting, self.antistings))
        self._lo = min(self.antistings) if self.antistings else 0
        self._hi = max(self.antistings) if self.antistings else 0

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, LabelComponent):
            return NotImplemented
        return (
            self._hash == other._hash
            and self.sting == other.sting
            and self.antistings == other.antistings
        )

    def __repr__(self) -> str:
        inner = ",".join(str(a) for a in sorted(self.antistings))
        return f"({self.sting},{{{inner}}})"

    def valid_under(self, cfg: LabelConfig) -> bool:
        """Structural validity: cardinality and domain bounds (O(1) via cached extrema)."""
        return (
            len(self.antistings) == cfg.k
            and 1 <= self.sting <= cfg.domain_size
            and self._lo >= 1
            and self._hi <= cfg.domain_size
        )


class Label:
    """An epoch: creator id, main component ``ml``, optional canceling ``cl``.

    ``cl`` is evidence of cancellation; a label with ``cl is None`` is
    legitimate.  Labels are immutable; cancellation of a *stored* label is
    recorded by the label storage, which swaps in a canceled copy.
    """

    __slots__ = ("creator", "ml", "cl", "_hash")

    def __init__(self, creator: int, ml: LabelComponent, cl: Optional[LabelComponent] = None):
        self.creator = creator
        self.ml = ml
        self.cl = cl
        self._hash = hash((creator, ml._hash))

    def __hash__(self) -> int:
        # Hash/equality follow =_m (creator + ml); cl is evidence only.
        return self._hash

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, Label):
            return NotImplemented
        return self.creator == other.creator and self.ml == other.ml

    def __repr__(self) -> str:
        mark = f"!{self.cl.sting}" if self.cl is not None else ""
        return f"Label({self.creator}:{self.ml.sting}{mark})"

    @property
    def canceled(self) -> bool:
        return self.cl is not None

    def with_cancel(self, cl: LabelComponent) -> "Label":
        return Label(self.creator, self.ml, cl)


# Independently minted but identical components (concurrent deterministic
# creations) are interned so equality is almost always an identity check.
_component_intern: "weakref.WeakValueDictionary" = weakref.WeakValueDictionary()


def intern_component(component: LabelComponent) -> LabelComponent:
    key = (component.sting, component.antistings)
    existing = _component_intern.get(key)
    if existing is not None:
        return existing
    _component_intern[key] = component
    return component


def eq_m(a: Label, b: Label) -> bool:
    """=_m label equality: creator and main component; cl is ignored."""
    return a is b or (a.creator == b.creator and a.ml == b.ml)


def precedes_b(a: LabelComponent, b: LabelComponent) -> bool:
    """Component order: a's sting is stung by b and not vice versa."""
    return a.sting in b.antistings and b.sting not in a.antistings


def precedes_lb(a: Label, b: Label) -> bool:
    """Label order: creator first, then component order among equal creators."""
    if a.creator != b.creator:
        return a.creator < b.creator
    return a.ml.sting in b.ml.antistings and b.ml.sting not in a.ml.antistings


def preceq_lb(a: Label, b: Label) -> bool:
    """Reflexive closure of precedes_lb under =_m."""
    return eq_m(a, b) or precedes_lb(a, b)


def incomparable(a: Label, b: Label) -> bool:
    """Neither order direction holds and the labels are not =_m equal."""
    if a.creator != b.creator:
        return False
    if a.ml == b.ml:
        return False
    return not precedes_lb(a, b) and not precedes_lb(b, a)


def cancels(a: Label, b: Label) -> bool:
    """True when a is evidence that b is obsolete.

    Either the two are incomparable, or they share a creator and b lies
    strictly below a in the component order.
    """
    if incomparable(a, b):
        return True
    return a.creator == b.creator and precedes_b(b.ml, a.ml)


def next_b(inputs: Iterable[LabelComponent], cfg: LabelConfig) -> LabelComponent:
    """Construct a component strictly above every input under precedes_b.

    The sting is the smallest domain value outside every input's antistings
    (and, when possible, distinct from every input sting); the antistings
    collect the input stings, padded with the smallest unused domain values.
    A pure function of the input set: duplicates and ordering do not matter.
    """
    comps = {(c.sting, c.antistings): c for c in inputs}.values()
    if len(comps) > cfg.k:
        raise PreconditionViolated(f"next_b takes at most k={cfg.k} components, got {len(comps)}")
    blocked: Set[int] = set()
    stings: Set[int] = set()
    for comp in comps:
        blocked |= comp.antistings
        stings.add(comp.sting)
    return next_b_from_sets(stings, blocked, cfg)


def next_b_from_sets(stings: Set[int], blocked: Set[int], cfg: LabelConfig) -> LabelComponent:
    """next_b over precomputed input stings and the union of input antistings.

    Split out so label storage can keep the union incrementally instead of
    rebuilding it at every creation.
    """
    sting = None
    for cand in range(1, cfg.domain_size + 1):
        if cand not in blocked and cand not in stings:
            sting = cand
            break
    if sting is None:
        # All free values collide with input stings; fall back to the domain
        # guarantee (|D| > k^2) which only excludes antistings.
        for cand in range(1, cfg.domain_size + 1):
            if cand not in blocked:
                sting = cand
                break
    if sting is None:
        raise DomainExhausted("no fresh sting available; k sizing invariant violated")

    anti = set(stings)
    anti.discard(sting)
    cand = 1
    while len(anti) < cfg.k:
        if cand != sting and cand not in anti:
            anti.add(cand)
        cand += 1
        if cand > cfg.domain_size + 1:
            raise DomainExhausted("cannot pad antistings to size k")
    return intern_component(LabelComponent(sting, frozenset(anti)))


def successor_component(comp: LabelComponent, cfg: LabelConfig) -> LabelComponent:
    """The canonical next epoch component after ``comp``.

    A pure function of the component, so every processor derives the same
    successor from the same epoch and concurrent wrap-arounds cannot race.
    Chain stings live strictly above the padding zone [1, k+1] and increase
    monotonically; the successor inherits every chain sting the parent
    carries plus the parent's own, keeping the whole epoch chain totally
    ordered under the component order (up to a k-era window).
    """
    low_zone = cfg.k + 1
    sting = None
    for cand in range(max(comp.sting, low_zone) + 1, cfg.domain_size + 1):
        if cand not in comp.antistings:
            sting = cand
            break
    if sting is None:
        # The sting budget wrapped (after ~k^2 epochs); restart the chain low.
        for cand in range(1, cfg.domain_size + 1):
            if cand not in comp.antistings and cand != comp.sting:
                sting = cand
                break
    if sting is None:
        raise DomainExhausted("no successor sting available")
    chain = {v for v in comp.antistings if v > low_zone}
    chain.add(comp.sting)
    chain.discard(sting)
    while len(chain) > cfg.k:
        chain.remove(min(chain))
    anti = chain
    cand = 1
    while len(anti) < cfg.k:
        if cand != sting and cand not in anti:
            anti.add(cand)
        cand += 1
        if cand > cfg.domain_size + 1:
            raise DomainExhausted("cannot pad antistings to size k")
    return intern_component(LabelComponent(sting, frozenset(anti)))


def next_label(own_history: Sequence[Label], creator: int, cfg: LabelConfig) -> Label:
    """Create a fresh legitimate label above every label in ``own_history``.

    The history must contain only labels of the given creator; both main and
    canceling components feed the construction, so the output dominates every
    history entry as well as every canceler recorded there.
    """
    comps = []
    for lab in own_history:
        if lab.creator != creator:
            raise PreconditionViolated("next_label history must match the creator")
        comps.append(lab.ml)
        if lab.cl is not None:
            comps.append(lab.cl)
    return Label(creator, next_b(comps, cfg))


def format_label(label: Label) -> str:
    """Canonical textual form: ``creator:sting:{a1,a2,...}[!cs]``."""
    anti = ",".join(str(a) for a in sorted(label.ml.antistings))
    text = f"{label.creator}:{label.ml.sting}:{{{anti}}}"
    if label.cl is not None:
        text += f"!{label.cl.sting}"
    return text
