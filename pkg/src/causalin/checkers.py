"""Linearizability, sequential consistency and their weak-memory relatives.

Every check returns a :class:`Verdict`.  The core search is a Wing-Gong
style depth-first search over operations with memoisation on
``(linearized set, specification state)``; pending operations may be
linearized (completed with the specification's return) or dropped.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass
from typing import Any

from .history import (
    Event,
    History,
    Operation,
    Write,
    event_to_json,
    external,
    history_to_json,
    project_thread,
)
from .specs import SpecProduct, UnknownOperation, as_product
from .trace import (
    CausalOrder,
    NotAPartialOrder,
    causal_order,
    relation_from_pairs,
    reorder,
)

DEFAULT_CAP = 10**6


@dataclass(frozen=True)
class LinearizedOp:
    op: Operation
    returns: tuple[int, ...]

    def to_json(self) -> dict[str, Any]:
        return {
            "thread": self.op.thread,
            "object": self.op.obj,
            "operation": self.op.name,
            "arguments": list(self.op.args),
            "returns": list(self.returns),
            "completed": not self.op.pending,
        }

    def __str__(self) -> str:
        return f"t{self.op.thread}.{self.op.obj}.{self.op.name}{self.op.args} -> {self.returns}"


@dataclass
class Verdict:
    check: str
    holds: bool
    witness: Any = None
    counterexample: Any = None
    inconclusive: bool = False
    detail: str = ""

    def __bool__(self) -> bool:
        return self.holds

    def to_json(self) -> dict[str, Any]:
        out = {
            "check": self.check,
            "holds": self.holds,
            "witness": to_jsonable(self.witness),
            "counterexample": to_jsonable(self.counterexample),
        }
        if self.inconclusive:
            out["inconclusive"] = True
        if self.detail:
            out["detail"] = self.detail
        return out


def to_jsonable(x: Any) -> Any:
    if x is None or isinstance(x, (bool, int, float, str)):
        return x
    if isinstance(x, History):
        return history_to_json(x)
    if isinstance(x, Event):
        return event_to_json(x)
    if hasattr(x, "to_json"):
        return x.to_json()
    if isinstance(x, Mapping):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, frozenset, set)):
        return [to_jsonable(v) for v in x]
    return str(x)


# -- linearizability and SC ---------------------------------------------------


def _ops(h: History) -> tuple[Operation, ...]:
    if any(not e.is_external for e in h):
        h = external(h)
    return h.operations


class _Search:
    """DFS over operations; op ``i`` may go next once every op in ``must_precede[i]`` is done."""

    def __init__(self, ops, spec: SpecProduct, must_precede: list[int]):
        self.ops = ops
        self.spec = spec
        self.must = must_precede  # bitmask of ops that have to be linearized before op i
        self.required = sum(1 << i for i, op in enumerate(ops) if not op.pending)
        self.failed: set = set()
        for op in ops:
            a = op.invocation.action
            if a.obj not in spec:
                raise UnknownOperation(f"no specification for object {a.obj!r}")

    def run(self):
        order: list[LinearizedOp] = []
        if self._dfs(0, self.spec.initial, order):
            return order
        return None

    def _dfs(self, done: int, state, order) -> bool:
        if done & self.required == self.required:
            return True
        key = (done, state)
        if key in self.failed:
            return False
        for i, op in enumerate(self.ops):
            if (done >> i) & 1 or self.must[i] & ~done:
                continue
            a = op.invocation.action
            nxt, rets = self.spec.apply(state, a.obj, a.op, a.args)
            if not op.pending and rets != op.returns:
                continue
            order.append(LinearizedOp(op, rets))
            if self._dfs(done | (1 << i), nxt, order):
                return True
            order.pop()
        self.failed.add(key)
        return False


def is_linearizable(ext: History, specs) -> Verdict:
    """Some completion of ``ext`` has a legal sequential order respecting real time."""
    ops = _ops(ext)
    pos = ext.position
    must = []
    for op in ops:
        start = pos[op.invocation]
        must.append(sum(1 << j for j, p in enumerate(ops) if p.response is not None and pos[p.response] < start))
    order = _Search(ops, as_product(specs), must).run()
    if order is None:
        return Verdict("linearizable", False, counterexample=ext)
    return Verdict("linearizable", True, witness=order)


def is_sequentially_consistent(ext: History, specs) -> Verdict:
    """Some legal sequential order respecting program order only."""
    ops = _ops(ext)
    must = []
    seen: dict[int, int] = {}
    for i, op in enumerate(ops):
        must.append(seen.get(op.thread, 0))
        seen[op.thread] = seen.get(op.thread, 0) | (1 << i)
    order = _Search(ops, as_product(specs), must).run()
    if order is None:
        return Verdict("sequentially-consistent", False, counterexample=ext)
    return Verdict("sequentially-consistent", True, witness=order)


# -- response synchronisation ---------------------------------------------------


def rs_extra_pairs(h: History) -> list[tuple[Event, Event]]:
    """``(f, response of the operation whose write f propagates)`` for every flush."""
    out = []
    for f, w in h.flush_of.items():
        op = h.operation_of.get(w)
        if op is not None and op.response is not None:
            out.append((f, op.response))
    return out


def rs_relation(h: History, rel=None) -> frozenset[tuple[Event, Event]]:
    return causal_order(h, rel).pairs() | frozenset(rs_extra_pairs(h))


def unflushed_responses(h: History) -> list[Event]:
    """Responses whose operation wrote something that ``h`` never flushes."""
    out = []
    for op in h.operations:
        if op.response is None:
            continue
        if any(isinstance(e.action, Write) and e not in h.flushes_of for e in op.events):
            out.append(op.response)
    return out


def is_response_synchronized(h: History, rel=None) -> bool:
    """Every flush precedes the response of its operation.

    Pairs of causal order always agree with the history, so only the
    flush-to-response pairs need checking.
    """
    pos = h.position
    return all(pos[f] < pos[r] for f, r in rs_extra_pairs(h))


def _flushed_before_response(h: History) -> int:
    """Length of the longest prefix in which every completed operation's writes are flushed."""
    pos = h.position
    cut = len(h)
    for op in h.operations:
        if op.response is None:
            continue
        r = pos[op.response]
        for e in op.events:
            if not isinstance(e.action, Write):
                continue
            fs = h.flushes_of.get(e, ())
            if not fs or pos[fs[0]] > r:
                cut = min(cut, r)
    return cut


def is_rs_linearizable(system: Iterable[History], specs) -> Verdict:
    """Every response-synchronized member of the (prefix-closed) system is linearizable.

    ``system`` lists maximal histories of a full enumeration.  A prefix is
    response-synchronized when every completed operation's writes are flushed
    before its response; the longest such prefix of each member is checked
    (linearizability is closed under prefixes, so its prefixes follow).
    """
    product = as_product(specs)
    checked: dict[tuple, bool] = {}
    count = 0
    for h in system:
        p = h[: _flushed_before_response(h)]
        ext = external(p)
        key = ext.labels
        if key not in checked:
            checked[key] = is_linearizable(ext, product).holds
            count += 1
        if not checked[key]:
            return Verdict("rs-linearizable", False, counterexample={"history": p, "external": ext})
    return Verdict("rs-linearizable", True, detail=f"{count} distinct external histories")


def explore_rs_linearizable(machine, specs, bounds=None, *, cap: int = DEFAULT_CAP, jobs=None) -> Verdict:
    """RS-linearizability of a composed machine, using partial-order reduction.

    Explores the response-synchronized variant of ``machine`` (responses wait
    for their operation's flushes), whose runs are exactly the
    response-synchronized histories.  Linearizability is not invariant on
    causal classes, so every external linear extension of each
    representative's class is checked.
    """
    from dataclasses import replace

    from .explore import explore
    from .trace import linear_extensions

    m = replace(getattr(machine, "machine", machine), response_sync=True)
    ex = explore(m, bounds, jobs=jobs)
    product = as_product(specs)
    checked: dict[tuple, bool] = {}
    enumerated = 0
    for h in ex.all:
        co = causal_order(h, m.independent).restrict(lambda e: e.is_external)
        for ext in linear_extensions(co):
            enumerated += 1
            if enumerated > cap:
                return Verdict("rs-linearizable", False, inconclusive=True, detail=f"more than {cap} extensions")
            key = ext.labels
            if key not in checked:
                checked[key] = is_linearizable(ext, product).holds
                if not checked[key]:
                    g = witness_history(h, causal_order(h, m.independent), list(ext.events), m.independent)
                    return Verdict("rs-linearizable", False, counterexample={"history": g, "external": ext})
    return Verdict("rs-linearizable", True,
                   detail=f"{len(ex.all)} classes, {len(checked)} distinct external histories")


# -- causal linearizability -----------------------------------------------------


class _PosetSearch:
    """Is some linear extension of a partial order on external events linearizable?

    Explores placements of invocations and responses together with
    linearization points: a completed operation must be linearized after its
    invocation is placed and before its response is placed; a pending one
    may be linearized any time after its invocation, or never.
    """

    def __init__(self, co: CausalOrder, spec: SpecProduct, cap: int):
        self.co = co
        self.spec = spec
        self.cap = cap
        self.nodes = 0
        h = History(co.events)
        self.ops = h.operations
        idx = co.position
        self.op_of_event: dict[int, int] = {}
        self.inv_bit, self.resp_of = [], []
        for k, op in enumerate(self.ops):
            self.op_of_event[idx[op.invocation]] = k
            self.inv_bit.append(1 << idx[op.invocation])
            if op.response is not None:
                self.op_of_event[idx[op.response]] = k
            self.resp_of.append(None if op.response is None else idx[op.response])
        self.n = len(co.events)
        self.required = sum(1 << k for k, op in enumerate(self.ops) if not op.pending)
        self.failed: set = set()
        self.trail: list = []

    def run(self):
        if self._dfs(0, 0, self.spec.initial):
            return list(self.trail)
        return None

    def _dfs(self, placed: int, done: int, state) -> bool:
        self.nodes += 1
        if self.nodes > self.cap:
            raise _CapHit
        full = (1 << self.n) - 1
        if placed == full and done & self.required == self.required:
            return True
        key = (placed, done, state)
        if key in self.failed:
            return False
        # linearize an invoked operation
        for k, op in enumerate(self.ops):
            if (done >> k) & 1 or not placed & self.inv_bit[k]:
                continue
            a = op.invocation.action
            nxt, rets = self.spec.apply(state, a.obj, a.op, a.args)
            if op.response is not None and rets != op.returns:
                continue
            self.trail.append(("lin", k, rets))
            if self._dfs(placed, done | (1 << k), nxt):
                return True
            self.trail.pop()
        # place an available event
        for i in range(self.n):
            if (placed >> i) & 1 or self.co.preds[i] & ~placed:
                continue
            k = self.op_of_event[i]
            if self.resp_of[k] == i and not (done >> k) & 1:
                continue
            self.trail.append(("event", i))
            if self._dfs(placed | (1 << i), done, state):
                return True
            self.trail.pop()
        self.failed.add(key)
        return False


class _CapHit(Exception):
    pass


def _ext_order_search(h: History, co: CausalOrder, specs, cap: int):
    """``(ext order, linearization)`` for some linearizable external linear extension, or ``None``."""
    ext_co = co.restrict(lambda e: e.is_external)
    search = _PosetSearch(ext_co, as_product(specs), cap)
    trail = search.run()
    if trail is None:
        return None
    order = [ext_co.events[x[1]] for x in trail if x[0] == "event"]
    lin = [LinearizedOp(search.ops[x[1]], x[2]) for x in trail if x[0] == "lin"]
    return order, lin


def witness_history(h: History, co: CausalOrder, ext_order: list[Event], rel=None) -> History:
    """A causally equivalent history whose external events appear in ``ext_order``."""
    pairs = set(co.pairs())
    pairs.update(zip(ext_order, ext_order[1:]))
    target = relation_from_pairs(h, pairs)
    return reorder(h, target, rel)


def is_causally_linearizable(h: History, rel, specs, *, cap: int = DEFAULT_CAP) -> Verdict:
    """Some causally equivalent history has a linearizable external projection.

    Tries, in order: a sequential-consistency refutation (equivalent
    histories share thread projections), the reordering that puts every
    flush before its response, and finally a search over linear extensions
    of the causal order restricted to external events.
    """
    name = "causally-linearizable"
    product = as_product(specs)
    ext = external(h)
    sc = is_sequentially_consistent(ext, product)
    if not sc.holds:
        return Verdict(name, False, counterexample={"history": h, "reason": "external projection not SC"})
    co = causal_order(h, rel)
    try:
        rs_target = relation_from_pairs(h, list(co.pairs()) + rs_extra_pairs(h))
    except NotAPartialOrder:
        rs_target = None
    if rs_target is not None:
        g = reorder(h, rs_target, rel)
        lin = is_linearizable(external(g), product)
        if lin.holds:
            return Verdict(name, True, witness={"history": g, "linearization": lin.witness, "via": "rs-reorder"})
    try:
        found = _ext_order_search(h, co, product, cap)
    except _CapHit:
        return Verdict(name, False, inconclusive=True, detail=f"search exceeded {cap} nodes")
    if found is None:
        return Verdict(name, False, counterexample={"history": h, "reason": "no linearizable equivalent"})
    order, lin = found
    g = witness_history(h, co, order, rel)
    return Verdict(name, True, witness={"history": g, "linearization": lin, "via": "search"})


def all_causally_linearizable(system: Iterable[History], rel, specs, *, cap: int = DEFAULT_CAP) -> Verdict:
    """Causal linearizability of every member; the property is invariant on equivalence classes,
    so one representative per class suffices."""
    name = "causally-linearizable"
    n = 0
    inconclusive = False
    for h in system:
        n += 1
        v = is_causally_linearizable(h, rel, specs, cap=cap)
        if v.inconclusive:
            inconclusive = True
        elif not v.holds:
            return Verdict(name, False, counterexample=v.counterexample)
    if inconclusive:
        return Verdict(name, False, inconclusive=True)
    return Verdict(name, True, detail=f"{n} histories")


def class_has_nonlinearizable(h: History, rel, specs, *, cap: int = DEFAULT_CAP) -> History | None:
    """A member of ``h``'s causal class with a non-linearizable external projection, if any."""
    from .trace import linear_extensions

    co = causal_order(h, rel).restrict(lambda e: e.is_external)
    product = as_product(specs)
    seen = set()
    for k, ext in enumerate(linear_extensions(co)):
        if k >= cap:
            raise RuntimeError("class too large")
        if ext.labels in seen:
            continue
        seen.add(ext.labels)
        if not is_linearizable(ext, product).holds:
            full = causal_order(h, rel)
            return witness_history(h, full, list(ext.events), rel)
    return None


def system_linearizable(system: Iterable[History], rel, specs, *, cap: int = DEFAULT_CAP) -> Verdict:
    """Every member of every explored class has a linearizable external projection."""
    for h in system:
        bad = class_has_nonlinearizable(h, rel, specs, cap=cap)
        if bad is not None:
            return Verdict("linearizable", False, counterexample={"history": bad, "external": external(bad)})
    return Verdict("linearizable", True)


def system_sequentially_consistent(system: Iterable[History], specs) -> Verdict:
    product = as_product(specs)
    for h in system:
        v = is_sequentially_consistent(external(h), product)
        if not v.holds:
            return Verdict("sequentially-consistent", False, counterexample={"history": h})
    return Verdict("sequentially-consistent", True)


# -- composition and observational refinement -------------------------------------


class PrefixClosure:
    """Membership in the prefix closure of an explicit set of histories."""

    def __init__(self, histories: Iterable[History]):
        self._members = set()
        for h in histories:
            s = h.labels
            for k in range(len(s) + 1):
                self._members.add(s[:k])

    def __contains__(self, h: History) -> bool:
        return h.labels in self._members


class LinearizableSystem:
    """``T'``: the histories of external events that are linearizable to ``specs``."""

    def __init__(self, specs):
        self.spec = as_product(specs)

    def __contains__(self, h: History) -> bool:
        return all(e.is_external for e in h) and is_linearizable(h, self.spec).holds

    def thread_equivalent_member(self, h: History) -> History | None:
        """A member of ``C[T]`` with ``h``'s thread projections, if one exists.

        Such a history exists exactly when ``h``'s external projection is
        sequentially consistent: laying each thread's events out operation by
        operation in an SC order gives a history whose external projection is
        sequential and legal.  Hidden events are dropped.
        """
        sc = is_sequentially_consistent(external(h), self.spec)
        if not sc.holds:
            return None
        rest = {t: list(project_thread(h, t).events) for t in h.threads}
        events: list[Event] = []
        for lo in sc.witness:
            mine = rest[lo.op.thread]
            stop = lo.op.response if lo.op.response is not None else lo.op.invocation
            while True:
                e = mine.pop(0)
                events.append(e)
                if e == stop:
                    break
        for t in sorted(rest):
            events.extend(rest[t])
        return History(tuple(events))


class Composition:
    """``C[O]``: thread projections in the client and object projection in ``O``.

    ``client`` is a per-thread acceptor (a callable ``(thread, History) ->
    bool``) or a collection of single-thread histories (prefix closed).
    ``system`` supports ``in``; ``object_events`` selects ``acts(O)``.
    """

    def __init__(self, client, system, object_events: Callable[[History, Event], bool] | None = None):
        if callable(client):
            self._client = client
        else:
            closure = PrefixClosure(client)
            self._client = lambda t, ht: ht in closure
        self.system = system
        self.object_events = object_events or (lambda h, e: e.is_external or h.obj(e) is not None or e.is_hidden)

    def __contains__(self, h: History) -> bool:
        for t in h.threads:
            if not self._client(t, project_thread(h, t)):
                return False
        proj = History(tuple(e for e in h if self.object_events(h, e)))
        return proj in self.system


def compose(client, system, object_events=None) -> Composition:
    return Composition(client, system, object_events)


def check_observational_refinement(client, sys_s: Iterable[History], sys_t) -> Verdict:
    """Every ``h`` in ``C[S]`` has an ``h'`` in ``C[T]`` with thread-equivalent external projection.

    ``sys_s`` lists the members of ``C[S]`` to check (one per causal class
    suffices, since the property depends on thread projections only).
    ``sys_t`` is a :class:`LinearizableSystem` or an explicit collection of
    histories of ``C[T]``.
    """
    name = "observational-refinement"
    index = None
    if not isinstance(sys_t, LinearizableSystem):
        index = {}
        for g in sys_t:
            index.setdefault(_thread_signature(external(g)), g)
    n = 0
    for h in sys_s:
        n += 1
        if index is None:
            g = sys_t.thread_equivalent_member(h)
            ok = g is not None and (client is None or g in Composition(client, sys_t, lambda _h, e: e.is_external))
        else:
            g = index.get(_thread_signature(external(h)))
            ok = g is not None
        if not ok:
            return Verdict(name, False, counterexample={"history": h, "external": external(h)})
    return Verdict(name, True, detail=f"{n} histories")


def _thread_signature(ext: History) -> tuple:
    return tuple(sorted((t, project_thread(ext, t).labels) for t in ext.threads))

