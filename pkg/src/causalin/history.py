"""Actions, tagged events and histories.

A history is a finite sequence of events.  Every event carries an action, the
thread that performed it (``SYSTEM`` for hidden flush events) and an event
index ``(owner, seq)``: for thread events ``owner`` is the thread and ``seq``
the event's position in that thread's subhistory; a flush reuses the index of
the write it propagates, which is how the flush-to-write attribution is
recorded.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Union

SYSTEM = None
"""Thread value of hidden (memory-system) events."""


@dataclass(frozen=True, slots=True)
class Invocation:
    obj: str
    op: str
    args: tuple[int, ...] = ()


@dataclass(frozen=True, slots=True)
class Response:
    obj: str
    returns: tuple[int, ...] = ()


@dataclass(frozen=True, slots=True)
class Read:
    loc: str
    value: int


@dataclass(frozen=True, slots=True)
class Write:
    loc: str
    value: int


@dataclass(frozen=True, slots=True)
class Flush:
    loc: str
    value: int


@dataclass(frozen=True, slots=True)
class Barrier:
    pass


@dataclass(frozen=True, slots=True)
class Locked:
    """Atomic read-modify-write: reads ``read_value``, stores ``fn(read_value, operand)``."""

    fn: str
    loc: str
    operand: int
    read_value: int


Action = Union[Invocation, Response, Read, Write, Flush, Barrier, Locked]
EXTERNAL_KINDS = (Invocation, Response)
MEMORY_KINDS = (Read, Write, Flush, Barrier, Locked)


@dataclass(frozen=True, slots=True)
class Event:
    action: Action
    thread: int | None
    index: tuple[int, int]

    def __post_init__(self):
        hidden = isinstance(self.action, Flush)
        if hidden != (self.thread is SYSTEM):
            raise ValueError(f"thread must be SYSTEM exactly for flush events: {self!r}")
        if not hidden and self.index[0] != self.thread:
            raise ValueError(f"event index owner must be its thread: {self!r}")

    @property
    def is_external(self) -> bool:
        return isinstance(self.action, EXTERNAL_KINDS)

    @property
    def is_memory(self) -> bool:
        return not isinstance(self.action, EXTERNAL_KINDS)

    @property
    def is_hidden(self) -> bool:
        return self.thread is SYSTEM

    @property
    def owner(self) -> int:
        """The thread on whose behalf the event happened (flushes included)."""
        return self.index[0]

    @property
    def location(self) -> str | None:
        return getattr(self.action, "loc", None)

    def __str__(self) -> str:
        return describe(self)


def describe(e: Event) -> str:
    a = e.action
    t = "" if e.thread is SYSTEM else f"_t{e.thread}"
    if isinstance(a, Invocation):
        args = ", ".join(map(str, a.args))
        return f"{a.obj}.{a.op}{t}({args})"
    if isinstance(a, Response):
        rets = "".join(f", {v}" for v in a.returns)
        return f"resp{t}({a.obj}{rets})"
    if isinstance(a, Read):
        return f"read{t}({a.loc}, {a.value})"
    if isinstance(a, Write):
        return f"write{t}({a.loc}, {a.value})"
    if isinstance(a, Flush):
        return f"flush(t{e.owner}, {a.loc}, {a.value})"
    if isinstance(a, Barrier):
        return f"barrier{t}"
    return f"locked{t}({a.fn}, {a.loc}, {a.operand}, {a.read_value})"


@dataclass(frozen=True)
class Operation:
    """One operation instance: an invocation, its memory events, and its response (if any)."""

    thread: int
    invocation: Event
    response: Event | None
    events: tuple[Event, ...] = ()

    @property
    def obj(self) -> str:
        return self.invocation.action.obj

    @property
    def name(self) -> str:
        return self.invocation.action.op

    @property
    def args(self) -> tuple[int, ...]:
        return self.invocation.action.args

    @property
    def returns(self) -> tuple[int, ...] | None:
        return None if self.response is None else self.response.action.returns

    @property
    def pending(self) -> bool:
        return self.response is None

    @property
    def memory_events(self) -> tuple[Event, ...]:
        return tuple(e for e in self.events if e.is_memory)

    def __str__(self) -> str:
        rets = "pending" if self.pending else ", ".join(map(str, self.returns)) or "()"
        return f"t{self.thread}.{self.obj}.{self.name}({', '.join(map(str, self.args))}) -> {rets}"


@dataclass(frozen=True)
class History:
    events: tuple[Event, ...] = ()

    def __post_init__(self):
        if not isinstance(self.events, tuple):
            object.__setattr__(self, "events", tuple(self.events))

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return History(self.events[i])
        return self.events[i]

    def __str__(self) -> str:
        return ", ".join(map(describe, self.events))

    @cached_property
    def position(self) -> dict[Event, int]:
        pos = {}
        for i, e in enumerate(self.events):
            if e in pos:
                raise ValueError(f"duplicate event in history: {e}")
            pos[e] = i
        return pos

    @cached_property
    def threads(self) -> tuple[int, ...]:
        return tuple(sorted({e.thread for e in self.events if e.thread is not SYSTEM}))

    @cached_property
    def flush_of(self) -> dict[Event, Event]:
        """Map each flush to the write it propagates (writes missing from ``self`` are skipped)."""
        writes = {e.index: e for e in self.events if isinstance(e.action, Write)}
        out = {}
        for e in self.events:
            if isinstance(e.action, Flush) and e.index in writes:
                out[e] = writes[e.index]
        return out

    @cached_property
    def flushes_of(self) -> dict[Event, tuple[Event, ...]]:
        """Inverse of :attr:`flush_of`: each write mapped to its flush events."""
        out: dict[Event, list[Event]] = {}
        for f, w in self.flush_of.items():
            out.setdefault(w, []).append(f)
        return {w: tuple(fs) for w, fs in out.items()}

    @cached_property
    def operations(self) -> tuple[Operation, ...]:
        """Operation instances ordered by invocation position."""
        open_ops: dict[int, list] = {}
        done = []
        for e in self.events:
            if e.thread is SYSTEM:
                continue
            a = e.action
            if isinstance(a, Invocation):
                if e.thread in open_ops:
                    raise ValueError(f"ill-formed history: nested invocation {e}")
                open_ops[e.thread] = [e, []]
            elif isinstance(a, Response):
                if e.thread not in open_ops:
                    raise ValueError(f"ill-formed history: unmatched response {e}")
                inv, body = open_ops.pop(e.thread)
                done.append(Operation(e.thread, inv, e, tuple(body)))
            elif e.thread in open_ops:
                open_ops[e.thread][1].append(e)
        for t, (inv, body) in open_ops.items():
            done.append(Operation(t, inv, None, tuple(body)))
        pos = self.position
        return tuple(sorted(done, key=lambda op: pos[op.invocation]))

    @cached_property
    def operation_of(self) -> dict[Event, Operation]:
        """Map each event inside an operation (flushes via their write) to that operation."""
        out = {}
        for op in self.operations:
            out[op.invocation] = op
            for e in op.events:
                out[e] = op
            if op.response is not None:
                out[op.response] = op
        for f, w in self.flush_of.items():
            if w in out:
                out[f] = out[w]
        return out

    @cached_property
    def labels(self) -> tuple[tuple[int | None, Action], ...]:
        """The history with event indices erased: ``(thread, action)`` per event."""
        return tuple((e.thread, e.action) for e in self.events)

    def obj(self, e: Event) -> str | None:
        """Object an event belongs to; ``None`` for client-level memory events."""
        if e.is_external:
            return e.action.obj
        op = self.operation_of.get(e)
        return None if op is None else op.obj

    def program_order(self, a: Event, b: Event) -> bool:
        """``a`` precedes ``b`` in program order."""
        return (
            a.thread is not SYSTEM
            and a.thread == b.thread
            and self.position[a] < self.position[b]
        )

    def real_time(self, a: Event, b: Event) -> bool:
        pos = self.position
        return pos[a] < pos[b]


def project_thread(h: History, t: int) -> History:
    if t is SYSTEM:
        raise ValueError("cannot project onto the system thread")
    return History(tuple(e for e in h.events if e.thread == t))


def project_actions(h: History, keep: Callable[[Event], bool]) -> History:
    return History(tuple(e for e in h.events if keep(e)))


def external(h: History) -> History:
    return project_actions(h, lambda e: e.is_external)


def memory(h: History) -> History:
    return project_actions(h, lambda e: e.is_memory)


def project_object(h: History, obj: str) -> History:
    """Events of one object: its invocations/responses and its operations' memory events."""
    return project_actions(h, lambda e: h.obj(e) == obj)


def is_well_formed(h: History) -> bool:
    expect_inv: dict[int, bool] = {}
    for e in h.events:
        if not e.is_external:
            continue
        want_inv = expect_inv.get(e.thread, True)
        if isinstance(e.action, Invocation) != want_inv:
            return False
        expect_inv[e.thread] = not want_inv
    return True


def is_complete(h: History) -> bool:
    last: dict[int, Event] = {}
    for e in h.events:
        if e.is_external:
            last[e.thread] = e
    return all(isinstance(e.action, Response) for e in last.values())


def thread_equivalent(h: History, g: History) -> bool:
    threads = set(h.threads) | set(g.threads)
    return all(project_thread(h, t) == project_thread(g, t) for t in threads)


def matched_pairs(h: History) -> dict[Event, tuple[Event, Event | None]]:
    """Map each event of an operation to ``(invocation, response or None)``."""
    return {e: (op.invocation, op.response) for e, op in h.operation_of.items()}


def is_prefix(p: History, h: History) -> bool:
    return len(p) <= len(h) and h.events[: len(p)] == p.events


class HistoryBuilder:
    """Assemble literal histories without spelling out event indices.

    >>> b = HistoryBuilder()
    >>> _ = b.write(1, "x", 1); _ = b.flush(1)
    >>> str(b.history())
    'write_t1(x, 1), flush(t1, x, 1)'
    """

    def __init__(self):
        self.events: list[Event] = []
        self._seq: dict[int, int] = {}
        self._unflushed: dict[int, list[Event]] = {}

    def _add(self, t: int, action: Action) -> Event:
        seq = self._seq.get(t, 0)
        self._seq[t] = seq + 1
        e = Event(action, t, (t, seq))
        self.events.append(e)
        return e

    def inv(self, t: int, obj: str, op: str, *args: int) -> Event:
        return self._add(t, Invocation(obj, op, tuple(args)))

    def resp(self, t: int, obj: str, *returns: int) -> Event:
        return self._add(t, Response(obj, tuple(returns)))

    def read(self, t: int, loc: str, value: int) -> Event:
        return self._add(t, Read(loc, value))

    def write(self, t: int, loc: str, value: int) -> Event:
        e = self._add(t, Write(loc, value))
        self._unflushed.setdefault(t, []).append(e)
        return e

    def barrier(self, t: int) -> Event:
        return self._add(t, Barrier())

    def locked(self, t: int, fn: str, loc: str, operand: int, read_value: int) -> Event:
        return self._add(t, Locked(fn, loc, operand, read_value))

    def flush(self, t: int) -> Event:
        """Flush the oldest unflushed write of thread ``t``."""
        w = self._unflushed[t].pop(0)
        e = Event(Flush(w.action.loc, w.action.value), SYSTEM, w.index)
        self.events.append(e)
        return e

    def history(self) -> History:
        return History(tuple(self.events))


# -- JSON ------------------------------------------------------------------

_KIND_NAMES = {
    Invocation: "invoke",
    Response: "response",
    Read: "read",
    Write: "write",
    Flush: "flush",
    Barrier: "barrier",
    Locked: "locked",
}


def event_to_json(e: Event) -> dict[str, Any]:
    a = e.action
    rec: dict[str, Any] = {
        "kind": _KIND_NAMES[type(a)],
        "thread": "sys" if e.thread is SYSTEM else e.thread,
        "index": list(e.index),
    }
    if isinstance(a, Invocation):
        rec.update(object=a.obj, operation=a.op, arguments=list(a.args))
    elif isinstance(a, Response):
        rec.update(object=a.obj, returns=list(a.returns))
    elif isinstance(a, (Read, Write, Flush)):
        rec.update(location=a.loc, value=a.value)
    elif isinstance(a, Locked):
        rec.update(function=a.fn, location=a.loc, operand=a.operand, readValue=a.read_value)
    return rec


def event_from_json(rec: dict[str, Any]) -> Event:
    kind = rec["kind"]
    thread = SYSTEM if rec["thread"] == "sys" else int(rec["thread"])
    index = tuple(int(i) for i in rec["index"])
    if kind == "invoke":
        a = Invocation(rec["object"], rec["operation"], tuple(rec.get("arguments", ())))
    elif kind == "response":
        a = Response(rec["object"], tuple(rec.get("returns", ())))
    elif kind in ("read", "write", "flush"):
        cls = {"read": Read, "write": Write, "flush": Flush}[kind]
        a = cls(rec["location"], int(rec["value"]))
    elif kind == "barrier":
        a = Barrier()
    elif kind == "locked":
        a = Locked(rec["function"], rec["location"], int(rec["operand"]), int(rec["readValue"]))
    else:
        raise ValueError(f"unknown event kind {kind!r}")
    return Event(a, thread, index)


def history_to_json(h: History) -> list[dict[str, Any]]:
    return [event_to_json(e) for e in h.events]


def history_from_json(recs: Iterable[dict[str, Any]]) -> History:
    return History(tuple(event_from_json(r) for r in recs))
