"""Synchronisation points, operation races, race freedom and noninterference."""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from typing import Any

from .checkers import Verdict, rs_relation
from .history import Barrier, Event, History, Invocation, Locked, Response, Write, event_to_json
from .trace import CausalOrder, causal_order, find_cycle, independence_fn

MODES = ("analytic", "definitional")


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, not {mode!r}")


def is_sync_point(h: History, b: Event, rel=None, mode: str = "analytic",
                  co: CausalOrder | None = None) -> bool:
    """Whether no flush of ``b`` or an earlier event of its thread can be causally after
    something another thread does causally after ``b``."""
    _check_mode(mode)
    if b.is_hidden:
        raise ValueError("hidden events are never synchronisation points")
    if mode == "analytic":
        return _analytic_sync(h, b)
    co = co or causal_order(h, rel)
    return _definitional_sync(h, b, co)


def _analytic_sync(h: History, b: Event) -> bool:
    a = b.action
    if isinstance(a, (Barrier, Locked)):
        return True
    if isinstance(a, (Invocation, Response)):
        op = h.operation_of.get(b)
        if op is None or not op.memory_events:
            return False
        m = op.memory_events[0] if isinstance(a, Invocation) else op.memory_events[-1]
        return isinstance(m.action, (Barrier, Locked))
    return False


def _definitional_sync(h: History, b: Event, co: CausalOrder) -> bool:
    pos = h.position
    t = b.thread
    pb = pos[b]
    later = [c for c in h.events[pb + 1:] if c.thread != t and co.precedes(b, c)]
    if not later:
        return True
    for a in h.events[: pb + 1]:
        if a.thread != t:
            continue
        for f in h.flushes_of.get(a, ()):
            if any(co.precedes(c, f) for c in later):
                return False
    return True


@dataclass(frozen=True)
class ORace:
    r0: Event
    i: Event
    r1: Event
    flush: Event

    def to_json(self) -> dict[str, Any]:
        return {
            "r0": list(self.r0.index),
            "i": list(self.i.index),
            "r1": list(self.r1.index),
            "flush": list(self.flush.index),
            "events": [event_to_json(e) for e in (self.r0, self.i, self.r1, self.flush)],
        }

    def __str__(self) -> str:
        return f"o-race({self.r0}, {self.i}, {self.r1}; {self.flush})"


def find_o_races(h: History, rel=None, mode: str = "analytic") -> list[ORace]:
    co = causal_order(h, rel)
    pos = h.position
    memo: dict[Event, bool] = {}

    def sync(e: Event) -> bool:
        if e not in memo:
            memo[e] = is_sync_point(h, e, rel, mode, co)
        return memo[e]

    responses = [e for e in h if isinstance(e.action, Response)]
    races = []
    for op in h.operations:
        r0 = op.response
        if r0 is None:
            continue
        flushes = [f for w in op.events if isinstance(w.action, Write) for f in h.flushes_of.get(w, ())]
        if not flushes:
            continue
        flush = max(flushes, key=pos.__getitem__)
        t = op.thread
        for e in h.events[pos[r0]:]:
            if e.thread != t:
                continue
            if sync(e):
                break
            if not isinstance(e.action, Invocation):
                continue
            for r1 in responses:
                if r1.thread != t and r1.action.obj == op.obj and co.precedes(e, r1):
                    races.append(ORace(r0, e, r1, flush))
    return races


def is_orf(system: Iterable[History], rel=None, mode: str = "analytic") -> Verdict:
    """No member has an o-race.

    Races are invariant under causal equivalence and survive extension of a
    history, so maximal representatives of every class suffice.
    """
    n = 0
    for h in system:
        n += 1
        races = find_o_races(h, rel, mode)
        if races:
            return Verdict("orf", False, counterexample={"history": h, "race": races[0]})
    return Verdict("orf", True, detail=f"{n} histories")


def interference(h: History, rel=None, co: CausalOrder | None = None) -> tuple[Event, Event] | None:
    """A dependent pair from distinct threads and distinct objects that can be adjacent.

    Within a causal class, a dependent pair ``a`` before ``b`` is adjacent in
    some member exactly when nothing lies causally between them.
    """
    independent = independence_fn(rel)
    co = co or causal_order(h, rel)
    ev = h.events
    objs = [h.obj(e) for e in ev]
    for j, b in enumerate(ev):
        if objs[j] is None:
            continue
        pj = co.preds[j]
        for i in range(j):
            a = ev[i]
            if objs[i] is None or objs[i] == objs[j] or a.thread == b.thread:
                continue
            if independent(a, b):
                continue
            between = pj & ~((1 << (i + 1)) - 1)
            k = between
            blocked = False
            while k:
                low = k & -k
                if (co.preds[low.bit_length() - 1] >> i) & 1:
                    blocked = True
                    break
                k ^= low
            if not blocked:
                return a, b
    return None


def footprints(system: Iterable[History]) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    for h in system:
        for e in h:
            o, loc = h.obj(e), e.location
            if o is not None and loc is not None:
                out.setdefault(o, set()).add(loc)
    return out


def disjoint(fp: Mapping[str, Iterable[str]]) -> bool:
    seen: set[str] = set()
    for locs in fp.values():
        locs = set(locs)
        if locs & seen:
            return False
        seen |= locs
    return True


def is_noninterfering(system: Iterable[History], rel=None, mode: str = "definitional",
                      fp: Mapping[str, Iterable[str]] | None = None) -> Verdict:
    """Adjacent events of distinct threads and distinct objects are always independent.

    ``mode="footprint"`` accepts at once when the objects' location sets are
    disjoint (given by ``fp`` or collected from the histories) and otherwise
    falls back to the definitional check.
    """
    system = list(system)
    if mode == "footprint":
        if disjoint(fp if fp is not None else footprints(system)):
            return Verdict("noninterfering", True, detail="disjoint footprints")
    elif mode not in ("definitional", "analytic"):
        raise ValueError(f"unknown mode {mode!r}")
    for h in system:
        pair = interference(h, rel)
        if pair is not None:
            return Verdict("noninterfering", False, counterexample={"history": h, "pair": list(pair)})
    return Verdict("noninterfering", True, detail=f"{len(system)} histories")


def rs_acyclic(h: History, rel=None) -> Verdict:
    cycle = find_cycle(h, rs_relation(h, rel))
    if cycle is None:
        return Verdict("rs-acyclic", True)
    return Verdict("rs-acyclic", False, counterexample={"cycle": cycle})


def all_rs_acyclic(system: Iterable[History], rel=None) -> Verdict:
    n = 0
    for h in system:
        n += 1
        v = rs_acyclic(h, rel)
        if not v.holds:
            return Verdict("rs-acyclic", False, counterexample={"history": h, **v.counterexample})
    return Verdict("rs-acyclic", True, detail=f"{n} histories")

