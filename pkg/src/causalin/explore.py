"""Bounded exhaustive exploration of client programs running on TSO.

The machine state pairs a TSO state with one interpreter state per thread.
Every enabled event is a scheduling choice: the next instruction of each
thread (reads take the unique value TSO forces) and the flush of each
nonempty buffer.  Invocation and response events are produced when a thread
crosses an operation boundary.

Two search modes are offered.  ``reduction="none"`` enumerates every
interleaving.  ``reduction="por"`` (the default) explores one interleaving
per causal-equivalence class, using sleep sets together with singleton
persistent sets for events that commute with everything other threads and
buffers can do (invocations, responses, writes and enabled barriers).
"""

from __future__ import annotations

import multiprocessing
import os
import time
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

from .history import (
    Barrier,
    Event,
    History,
    Invocation,
    Locked,
    Read,
    Response,
    Write,
    project_thread,
)
from .program import (
    Assign,
    Branch,
    Enter,
    Exit,
    Fence,
    Halt,
    Jump,
    Load,
    Program,
    Rmw,
    Store,
    evaluate,
)
from .trace import analytic_independent
from .tso import TSO, MemoryModel, RMW_FUNCTIONS, TsoState

_SETTLE_LIMIT = 10_000


@dataclass(frozen=True)
class ExploreBounds:
    max_events_per_thread: int = 48
    max_total_events: int = 144
    value_domain: range = range(8)

    def __post_init__(self):
        if self.max_events_per_thread <= 0 or self.max_total_events <= 0 or not len(self.value_domain):
            raise ValueError("bounds must be positive and finite")


class ThreadState(NamedTuple):
    pc: int
    regs: Mapping[str, int]
    frame: Mapping[str, int]
    seq: int
    op_start: int = -1  # seq of the open operation's invocation


class ProgramError(Exception):
    pass


def _frame(ts: ThreadState, local: bool) -> Mapping[str, int]:
    return ts.frame if local else ts.regs


def _bind(ts: ThreadState, local: bool, dst: str, value: int) -> ThreadState:
    if local:
        frame = dict(ts.frame)
        frame[dst] = value
        return ts._replace(frame=frame)
    regs = dict(ts.regs)
    regs[dst] = value
    return ts._replace(regs=regs)


def settle(prog: Program, ts: ThreadState) -> ThreadState:
    """Run internal instructions until the next event-producing one (or ``Halt``)."""
    for _ in range(_SETTLE_LIMIT):
        instr = prog.code[ts.pc]
        if isinstance(instr, Assign):
            value = evaluate(instr.value, _frame(ts, instr.local))
            ts = _bind(ts, instr.local, instr.dst, value)._replace(pc=ts.pc + 1)
        elif isinstance(instr, Jump):
            ts = ts._replace(pc=instr.target)
        elif isinstance(instr, Branch):
            taken = evaluate(instr.cond, _frame(ts, instr.local))
            ts = ts._replace(pc=instr.target if taken else ts.pc + 1)
        else:
            return ts
    raise ProgramError(f"{prog.name}: no event after {_SETTLE_LIMIT} internal steps")


def start(prog: Program) -> ThreadState:
    return settle(prog, ThreadState(0, {}, {}, 0))


def advance(prog: Program, ts: ThreadState, result: int | None = None) -> ThreadState:
    """Retire the pending event instruction of ``ts``; ``result`` feeds loads and RMWs."""
    instr = prog.code[ts.pc]
    ts = ts._replace(seq=ts.seq + 1)
    if isinstance(instr, (Load, Rmw)):
        ts = _bind(ts, instr.local, instr.dst, result)._replace(pc=ts.pc + 1)
    elif isinstance(instr, Enter):
        args = [evaluate(a, ts.regs) for a in instr.args]
        ts = ts._replace(frame=dict(zip(instr.params, args)), pc=ts.pc + 1, op_start=ts.seq - 1)
    elif isinstance(instr, Exit):
        values = [evaluate(v, ts.frame) for v in instr.returns]
        regs = dict(ts.regs)
        regs.update(zip(instr.into, values))
        ts = ts._replace(regs=regs, frame={}, pc=instr.target)
    else:
        ts = ts._replace(pc=ts.pc + 1)
    return settle(prog, ts)


def intended_action(prog: Program, ts: ThreadState):
    """What the pending instruction does, with load/RMW read values left open.

    Returns ``None`` when the thread has halted, else a tuple whose first
    element names the kind.
    """
    instr = prog.code[ts.pc]
    if isinstance(instr, Halt):
        return None
    if isinstance(instr, Load):
        return ("read", instr.loc)
    if isinstance(instr, Store):
        return ("write", instr.loc, evaluate(instr.value, _frame(ts, instr.local)))
    if isinstance(instr, Fence):
        return ("barrier",)
    if isinstance(instr, Rmw):
        return ("locked", instr.fn, instr.loc, evaluate(instr.operand, _frame(ts, instr.local)))
    if isinstance(instr, Enter):
        return ("invoke", Invocation(instr.obj, instr.op, tuple(evaluate(a, ts.regs) for a in instr.args)))
    if isinstance(instr, Exit):
        return ("response", Response(instr.obj, tuple(evaluate(v, ts.frame) for v in instr.returns)))
    raise ProgramError(f"unexpected instruction {instr!r}")


def accepts(prog: Program, events: Sequence[Event]) -> bool:
    """Whether a single-thread event sequence is a prefix of some run of ``prog``.

    This is client membership: read values are taken from the events, so a
    thread history is accepted whenever the program would emit it given
    those values.
    """
    ts = start(prog)
    for e in events:
        want = intended_action(prog, ts)
        if want is None:
            return False
        a = e.action
        kind = want[0]
        result = None
        if kind == "read":
            if not isinstance(a, Read) or a.loc != want[1]:
                return False
            result = a.value
        elif kind == "write":
            if a != Write(want[1], want[2]):
                return False
        elif kind == "barrier":
            if not isinstance(a, Barrier):
                return False
        elif kind == "locked":
            if not isinstance(a, Locked) or (a.fn, a.loc, a.operand) != want[1:]:
                return False
            result = a.read_value
        elif a != want[1]:
            return False
        ts = advance(prog, ts, result)
    return True


@dataclass(frozen=True)
class Machine:
    """A client (one program per thread) composed with a memory model.

    With ``response_sync`` a response is only enabled once every write of
    its operation has been flushed; the runs of that machine are exactly the
    response-synchronized histories of the plain one.
    """

    programs: tuple[Program, ...]
    initial_memory: Mapping[str, int]
    model: MemoryModel = TSO
    response_sync: bool = False

    def independent(self, a: Event, b: Event) -> bool:
        if self.response_sync and _own_flush_vs_response(a, b):
            return False
        return analytic_independent(a, b)

    @property
    def thread_ids(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.programs) + 1))


class Config(NamedTuple):
    mem: TsoState
    threads: tuple[ThreadState, ...]


def initial_config(m: Machine) -> Config:
    return Config(m.model.initial(m.initial_memory), tuple(start(p) for p in m.programs))


def thread_event(m: Machine, c: Config, i: int, bounds: ExploreBounds | None = None):
    """``(event, result)`` for thread slot ``i``'s next instruction, or ``None`` if not enabled."""
    prog, ts = m.programs[i], c.threads[i]
    if bounds is not None and ts.seq >= bounds.max_events_per_thread:
        return None
    t = i + 1
    instr = prog.code[ts.pc]
    idx = (t, ts.seq)
    if isinstance(instr, Halt):
        return None
    if isinstance(instr, Load):
        value = m.model.load(c.mem, t, instr.loc)
        return Event(Read(instr.loc, value), t, idx), value
    if isinstance(instr, Store):
        value = evaluate(instr.value, _frame(ts, instr.local))
        if bounds is not None and value not in bounds.value_domain:
            raise ProgramError(f"t{t} stores {value} outside the value domain")
        return Event(Write(instr.loc, value), t, idx), None
    if isinstance(instr, Fence):
        if not m.model.drained(c.mem, t):
            return None
        return Event(Barrier(), t, idx), None
    if isinstance(instr, Rmw):
        if not m.model.drained(c.mem, t):
            return None
        current = c.mem.memory.get(instr.loc, 0)
        operand = evaluate(instr.operand, _frame(ts, instr.local))
        if bounds is not None and RMW_FUNCTIONS[instr.fn](current, operand) not in bounds.value_domain:
            raise ProgramError(f"t{t} RMW leaves a value outside the value domain")
        return Event(Locked(instr.fn, instr.loc, operand, current), t, idx), current
    if isinstance(instr, Exit) and m.response_sync:
        if any(entry.index[1] > ts.op_start for entry in c.mem.buffer(t)):
            return None
    _, action = intended_action(prog, ts)
    return Event(action, t, idx), None


def enabled(m: Machine, c: Config, bounds: ExploreBounds | None = None) -> list[Event]:
    """All enabled events in canonical order: threads ascending, then flushes by owner."""
    out = []
    for i in range(len(m.programs)):
        te = thread_event(m, c, i, bounds)
        if te is not None:
            out.append(te[0])
    out.extend(m.model.hidden_events(c.mem))
    return out


def successor(m: Machine, c: Config, e: Event) -> Config:
    mem = c.mem
    if e.is_memory:
        mem = m.model.step(mem, e)
    if e.is_hidden:
        return Config(mem, c.threads)
    i = e.thread - 1
    a = e.action
    result = a.value if isinstance(a, Read) else a.read_value if isinstance(a, Locked) else None
    threads = list(c.threads)
    threads[i] = advance(m.programs[i], threads[i], result)
    return Config(mem, tuple(threads))


def finished(m: Machine, c: Config) -> bool:
    return all(isinstance(p.code[ts.pc], Halt) for p, ts in zip(m.programs, c.threads)) and c.mem.quiescent


def _own_flush_vs_response(a: Event, b: Event) -> bool:
    if isinstance(a.action, Response):
        a, b = b, a
    return isinstance(b.action, Response) and a.is_hidden and a.owner == b.thread


def _commutes_with_everything(m: Machine, e: Event) -> bool:
    # Safe singleton persistent sets; see the module docstring.
    if m.response_sync and isinstance(e.action, Response):
        return False
    return isinstance(e.action, (Invocation, Response, Write, Barrier))


@dataclass
class Exploration:
    histories: list[History] = field(default_factory=list)
    truncated: list[History] = field(default_factory=list)
    states: int = 0
    blocked: int = 0
    wall_time: float = 0.0

    @property
    def all(self) -> list[History]:
        return self.histories + self.truncated

    def merge(self, other: Exploration) -> None:
        self.histories.extend(other.histories)
        self.truncated.extend(other.truncated)
        self.states += other.states
        self.blocked += other.blocked


class _Search:
    def __init__(self, m: Machine, bounds: ExploreBounds, reduction: str):
        if reduction not in ("none", "por"):
            raise ValueError(f"unknown reduction {reduction!r}")
        self.m = m
        self.bounds = bounds
        self.por = reduction == "por"
        self.out = Exploration()
        self.trail: list[Event] = []

    def choices(self, c: Config, sleep: frozenset) -> list[tuple[Event, frozenset]]:
        """Events to explore at ``c`` with the sleep set each child inherits."""
        if len(self.trail) >= self.bounds.max_total_events:
            return []
        evs = enabled(self.m, c, self.bounds)
        if not self.por:
            return [(e, frozenset()) for e in evs]
        for e in evs:
            if e not in sleep and _commutes_with_everything(self.m, e):
                return [(e, sleep)]  # e is independent of every sleeping event
        out = []
        done: list[Event] = []
        for e in evs:
            if e in sleep:
                continue
            indep = self.m.independent
            child = frozenset(s for s in sleep if indep(s, e)) | frozenset(s for s in done if indep(s, e))
            out.append((e, child))
            done.append(e)
        return out

    def leaf(self, c: Config) -> None:
        h = History(tuple(self.trail))
        if finished(self.m, c):
            self.out.histories.append(h)
        else:
            self.out.truncated.append(h)

    def run(self, c: Config, sleep: frozenset) -> None:
        self.out.states += 1
        branches = self.choices(c, sleep)
        if not branches:
            if self.por and len(self.trail) < self.bounds.max_total_events and enabled(self.m, c, self.bounds):
                self.out.blocked += 1
                return
            self.leaf(c)
            return
        for e, child in branches:
            self.trail.append(e)
            self.run(successor(self.m, c, e), child)
            self.trail.pop()


_FORKED: dict = {}


def _run_branch(k: int) -> Exploration:
    m, bounds, reduction, plan = _FORKED["job"]
    prefix, sleep = plan[k]
    s = _Search(m, bounds, reduction)
    c = initial_config(m)
    for e in prefix:
        c = successor(m, c, e)
    s.trail = list(prefix)
    s.run(c, sleep)
    return s.out


def explore(
    machine: Machine | object,
    bounds: ExploreBounds | None = None,
    *,
    reduction: str = "por",
    jobs: int | None = None,
) -> Exploration:
    """Explore every schedule of ``machine`` (a :class:`Machine` or anything with ``.machine``).

    Histories that end with all threads halted and all buffers drained go to
    ``histories``; those cut off by a bound go to ``truncated``.  Results are
    in canonical depth-first order regardless of ``jobs``.
    """
    m = machine if isinstance(machine, Machine) else machine.machine
    bounds = bounds or ExploreBounds()
    if jobs is None:
        jobs = int(os.environ.get("CAUSALIN_JOBS", "1"))
    t0 = time.perf_counter()
    search = _Search(m, bounds, reduction)
    c0 = initial_config(m)
    if jobs <= 1:
        search.run(c0, frozenset())
        out = search.out
    else:
        out = _explore_parallel(search, c0, jobs)
    out.wall_time = time.perf_counter() - t0
    return out


def _explore_parallel(search: _Search, c0: Config, jobs: int) -> Exploration:
    # Split on the scheduling choices of the first branching state.
    prefix: list[Event] = []
    c, sleep = c0, frozenset()
    while True:
        branches = search.choices(c, sleep)
        if len(branches) != 1:
            break
        e, sleep = branches[0]
        prefix.append(e)
        c = successor(search.m, c, e)
    if not branches:
        search.trail = prefix
        search.run(c, sleep)
        return search.out
    plan = [(tuple(prefix) + (e,), child) for e, child in branches]
    _FORKED["job"] = (search.m, search.bounds, "por" if search.por else "none", plan)
    try:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(min(jobs, len(plan))) as pool:
            parts = pool.map(_run_branch, range(len(plan)))
    finally:
        _FORKED.clear()
    out = Exploration(states=len(prefix) + 1)
    for p in parts:
        out.merge(p)
    return out


def client_accepts(m: Machine, h: History) -> bool:
    """Every thread projection of ``h`` is a prefix of a run of that thread's program."""
    for t in h.threads:
        if not 1 <= t <= len(m.programs):
            return False
        if not accepts(m.programs[t - 1], project_thread(h, t).events):
            return False
    return True


def replay_machine(m: Machine, h: History) -> Config:
    """Replay ``h`` event by event on the composed machine; raise ``ValueError`` on mismatch."""
    c = initial_config(m)
    for k, e in enumerate(h):
        if e not in enabled(m, c):
            raise ValueError(f"event {k} ({e}) is not enabled")
        c = successor(m, c, e)
    return c


def is_member(m: Machine, h: History) -> bool:
    try:
        replay_machine(m, h)
    except ValueError:
        return False
    return True
