"""Independence, causal equivalence and causal order.

Causal order is computed as the transitive closure of the dependence edges
``{(a, b) : a before b, not independent(a, b)}`` of one history.  Relations
over a history are stored as one bitmask per event (bit ``i`` of
``preds[j]`` set means event ``i`` is ordered before event ``j``).
"""

from __future__ import annotations

from collections import deque
from collections.abc import Callable, Iterable, Iterator
from typing import Protocol

from .history import (
    Barrier,
    Event,
    Flush,
    History,
    Locked,
    Read,
    Write,
    project_thread,
)
from .tso import RMW_FUNCTIONS


class NotAPartialOrder(ValueError):
    pass


class DoesNotContainCausalOrder(ValueError):
    pass


def _preserving(a: Locked) -> bool:
    """A locked RMW that leaves memory as it found it."""
    return RMW_FUNCTIONS[a.fn](a.read_value, a.operand) == a.read_value


def analytic_independent(a: Event, b: Event) -> bool:
    """Rule-table independence for events of a client composed with TSO."""
    if a == b:
        return False
    if a.thread is not None and a.thread == b.thread:
        return False
    if a.is_external or b.is_external:
        return True
    x, y = a.action, b.action
    if isinstance(x, Flush) and isinstance(y, Flush):
        return a.owner != b.owner and x.loc != y.loc
    if isinstance(y, Flush):
        a, b, x, y = b, a, y, x
    if isinstance(x, Flush):
        # a is the flush, b a thread event
        if b.index == a.index:
            return False
        if b.thread == a.owner:
            return not isinstance(y, (Barrier, Locked))
        if isinstance(y, (Read, Locked)):
            return y.loc != x.loc
        return True
    if isinstance(x, Locked) and isinstance(y, Locked):
        return x.loc != y.loc or (_preserving(x) and _preserving(y))
    if isinstance(x, Locked) and isinstance(y, Read):
        return x.loc != y.loc or _preserving(x)
    if isinstance(y, Locked) and isinstance(x, Read):
        return x.loc != y.loc or _preserving(y)
    return True


class IndependenceRelation(Protocol):
    def independent(self, a: Event, b: Event) -> bool: ...


class AnalyticIndependence:
    """TSO rule table: communication only happens through flushes and locked RMWs."""

    mode = "analytic"

    def independent(self, a: Event, b: Event) -> bool:
        return analytic_independent(a, b)

    def decide(self, a: Event, b: Event) -> bool | None:
        return analytic_independent(a, b)


ANALYTIC = AnalyticIndependence()


class OracleIndependence:
    """Independence read off an explicit prefix-closed set of histories.

    ``a`` and ``b`` are independent when swapping them wherever they are
    adjacent always yields another member.  Pairs never seen adjacent are
    undecided and treated as dependent.
    """

    mode = "oracle"

    def __init__(self, histories: Iterable[History]):
        maximal = [tuple(h.events) for h in histories]
        prefixes = set()
        for s in maximal:
            for k in range(len(s) + 1):
                prefixes.add(s[:k])
        self._members = prefixes
        verdict: dict[frozenset, bool] = {}
        for s in maximal:
            for k in range(len(s) - 1):
                a, b = s[k], s[k + 1]
                if a.thread is not None and a.thread == b.thread:
                    continue
                key = frozenset((a, b))
                if verdict.get(key) is False:
                    continue
                swapped = s[:k] + (b, a) + s[k + 2:]
                verdict[key] = swapped in prefixes
        self._verdict = verdict

    def __contains__(self, h: History) -> bool:
        return tuple(h.events) in self._members

    def decide(self, a: Event, b: Event) -> bool | None:
        if a == b or (a.thread is not None and a.thread == b.thread):
            return False
        return self._verdict.get(frozenset((a, b)))

    def independent(self, a: Event, b: Event) -> bool:
        return self.decide(a, b) is True


def independence_fn(rel) -> Callable[[Event, Event], bool]:
    """The predicate behind ``rel``: ``None`` means the analytic table."""
    if rel is None:
        return analytic_independent
    if callable(rel):
        return rel
    return rel.independent


class CausalOrder:
    """A strict partial order over the events of one history."""

    def __init__(self, events: tuple[Event, ...], preds: list[int]):
        self.events = events
        self.preds = preds
        self.position = {e: i for i, e in enumerate(events)}

    def __len__(self) -> int:
        return sum(bin(m).count("1") for m in self.preds)

    def precedes(self, a: Event, b: Event) -> bool:
        pos = self.position
        return bool((self.preds[pos[b]] >> pos[a]) & 1)

    def __contains__(self, pair: tuple[Event, Event]) -> bool:
        a, b = pair
        return a in self.position and b in self.position and self.precedes(a, b)

    def pairs(self) -> frozenset[tuple[Event, Event]]:
        ev = self.events
        return frozenset(
            (ev[i], ev[j]) for j, m in enumerate(self.preds) for i in range(len(ev)) if (m >> i) & 1
        )

    def edges(self) -> list[tuple[int, int]]:
        """Ordered position pairs, sorted."""
        n = len(self.events)
        return sorted((i, j) for j, m in enumerate(self.preds) for i in range(n) if (m >> i) & 1)

    def to_json(self) -> dict:
        return {"edges": [list(p) for p in self.edges()]}

    def __eq__(self, other) -> bool:
        if not isinstance(other, CausalOrder):
            return NotImplemented
        return set(self.events) == set(other.events) and self.pairs() == other.pairs()

    def __hash__(self):
        return hash(self.pairs())

    def restrict(self, keep: Callable[[Event], bool]) -> CausalOrder:
        idx = [i for i, e in enumerate(self.events) if keep(e)]
        remap = {old: new for new, old in enumerate(idx)}
        preds = []
        for old in idx:
            m = self.preds[old]
            preds.append(sum(1 << remap[i] for i in idx if (m >> i) & 1))
        return CausalOrder(tuple(self.events[i] for i in idx), preds)

    def is_linear_extension(self, h: History) -> bool:
        pos = h.position
        if len(h) != len(self.events) or any(e not in pos for e in self.events):
            return False
        n = len(self.events)
        for j, m in enumerate(self.preds):
            pj = pos[self.events[j]]
            for i in range(n):
                if (m >> i) & 1 and pos[self.events[i]] > pj:
                    return False
        return True


def causal_order(h: History, rel=None) -> CausalOrder:
    independent = independence_fn(rel)
    ev = h.events
    preds = [0] * len(ev)
    for j, b in enumerate(ev):
        m = 0
        for i in range(j - 1, -1, -1):
            if (m >> i) & 1:
                continue
            if not independent(ev[i], b):
                m |= preds[i] | (1 << i)
        preds[j] = m
    return CausalOrder(ev, preds)


def relation_from_pairs(h: History, pairs: Iterable[tuple[Event, Event]]) -> CausalOrder:
    """Transitive closure of an arbitrary relation over ``h``'s events.

    Raises :class:`NotAPartialOrder` if the closure is cyclic.
    """
    pos = h.position
    n = len(h)
    direct = [0] * n
    for a, b in pairs:
        direct[pos[b]] |= 1 << pos[a]
    preds = _closure(direct)
    for i, m in enumerate(preds):
        if (m >> i) & 1:
            raise NotAPartialOrder(f"cycle through {h.events[i]}")
    return CausalOrder(h.events, preds)


def _closure(direct: list[int]) -> list[int]:
    n = len(direct)
    preds = list(direct)
    changed = True
    while changed:
        changed = False
        for j in range(n):
            m = preds[j]
            acc = m
            k = m
            while k:
                low = k & -k
                i = low.bit_length() - 1
                acc |= preds[i]
                k ^= low
            if acc != m:
                preds[j] = acc
                changed = True
    return preds


def find_cycle(h: History, pairs: Iterable[tuple[Event, Event]]) -> list[Event] | None:
    """A cycle of the relation as an event list (first event repeated at the end), or ``None``."""
    pos = h.position
    succ: dict[int, list[int]] = {}
    for a, b in pairs:
        succ.setdefault(pos[a], []).append(pos[b])
    for v in succ:
        succ[v].sort()
    color = {}
    stack_path: list[int] = []

    def visit(v: int):
        color[v] = 1
        stack_path.append(v)
        for w in succ.get(v, ()):
            if color.get(w) == 1:
                return stack_path[stack_path.index(w):] + [w]
            if w not in color:
                found = visit(w)
                if found:
                    return found
        color[v] = 2
        stack_path.pop()
        return None

    for v in sorted(succ):
        if v not in color:
            found = visit(v)
            if found:
                return [h.events[i] for i in found]
    return None


def causal_class(h: History, rel=None, limit: int | None = None) -> Iterator[History]:
    """Breadth-first closure of ``h`` under adjacent independent transpositions."""
    independent = independence_fn(rel)
    start = tuple(h.events)
    seen = {start}
    queue = deque([start])
    while queue:
        s = queue.popleft()
        yield History(s)
        if limit is not None and len(seen) > limit:
            raise RuntimeError("causal class larger than limit")
        for k in range(len(s) - 1):
            if independent(s[k], s[k + 1]):
                t = s[:k] + (s[k + 1], s[k]) + s[k + 2:]
                if t not in seen:
                    seen.add(t)
                    queue.append(t)


def definitional_causal_order(h: History, rel=None) -> CausalOrder:
    """Causal order as the order shared by every causally equivalent history (brute force)."""
    n = len(h)
    members = list(causal_class(h, rel))
    full = (1 << n) - 1
    preds = []
    for j, b in enumerate(h.events):
        m = full & ~(1 << j)
        for g in members:
            pb = g.position[b]
            m &= sum(1 << i for i, a in enumerate(h.events) if g.position[a] < pb)
        preds.append(m)
    return CausalOrder(h.events, preds)


def causally_equivalent(h: History, g: History, rel=None) -> bool:
    if len(h) != len(g) or set(h.events) != set(g.events):
        return False
    for t in set(h.threads):
        if project_thread(h, t) != project_thread(g, t):
            return False
    return causal_order(h, rel).is_linear_extension(g)


def reorder(h: History, target, rel=None) -> History:
    """Reorder ``h`` so that every pair of ``target`` appears in order.

    ``target`` is a strict partial order over ``h``'s events (a
    :class:`CausalOrder` or a set of event pairs) that contains the causal
    order of ``h``.  Repeatedly takes the mis-ordered pair with the smallest
    gap: adjacent pairs are swapped; otherwise an intermediate event that
    nothing earlier in the window must precede is moved in front of the
    window, or one that nothing later must follow is moved behind it.  Each
    move keeps the history causally equivalent and creates no new
    mis-ordered pair.
    """
    less = _as_order(h, target)
    n = len(h)
    for j, m in enumerate(less):
        if (m >> j) & 1:
            raise NotAPartialOrder(f"{h.events[j]} precedes itself")
        k = m
        while k:
            low = k & -k
            i = low.bit_length() - 1
            if less[i] & ~m:
                raise NotAPartialOrder("target is not transitively closed")
            k ^= low
    co = causal_order(h, rel)
    for j, m in enumerate(co.preds):
        if m & ~less[j]:
            raise DoesNotContainCausalOrder(f"target misses a causal predecessor of {h.events[j]}")

    def lt(x: int, y: int) -> bool:
        return bool((less[y] >> x) & 1)

    seq = list(range(n))
    while True:
        found = None
        for gap in range(1, n):
            for i in range(n - gap):
                if lt(seq[i + gap], seq[i]):
                    found = (i, i + gap)
                    break
            if found:
                break
        if found is None:
            break
        i, j = found
        if j == i + 1:
            seq[i], seq[j] = seq[j], seq[i]
            continue
        for k in range(i + 1, j):
            c = seq[k]
            if not any(lt(seq[d], c) for d in range(i, k)):
                seq.insert(i, seq.pop(k))
                break
        else:
            for k in range(j - 1, i, -1):
                c = seq[k]
                if not any(lt(c, seq[d]) for d in range(k + 1, j + 1)):
                    seq.insert(j, seq.pop(k))
                    break
            else:  # pragma: no cover - excluded by irreflexivity
                raise NotAPartialOrder("no movable event in window")
    return History(tuple(h.events[i] for i in seq))


def _as_order(h: History, target) -> list[int]:
    if isinstance(target, CausalOrder):
        if target.events == h.events:
            return list(target.preds)
        target = target.pairs()
    pos = h.position
    less = [0] * len(h)
    for a, b in target:
        less[pos[b]] |= 1 << pos[a]
    return less


def linear_extensions(co: CausalOrder) -> Iterator[History]:
    """All topological orderings of ``co``, in lexicographic order of original positions."""
    n = len(co.events)
    preds = co.preds
    order: list[int] = []

    def rec(placed: int) -> Iterator[History]:
        if len(order) == n:
            yield History(tuple(co.events[i] for i in order))
            return
        for i in range(n):
            if not (placed >> i) & 1 and preds[i] & ~placed == 0:
                order.append(i)
                yield from rec(placed | (1 << i))
                order.pop()

    yield from rec(0)


def linear_extension_sample(co: CausalOrder, rng) -> History:
    """One linear extension of ``co``, choosing uniformly among minimal events at each step."""
    n = len(co.events)
    placed = 0
    order = []
    while len(order) < n:
        ready = [i for i in range(n) if not (placed >> i) & 1 and co.preds[i] & ~placed == 0]
        i = rng.choice(ready)
        order.append(i)
        placed |= 1 << i
    return History(tuple(co.events[i] for i in order))
