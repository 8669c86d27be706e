"""TSO store-buffer semantics.

State is shared memory plus one FIFO write buffer per thread.  Each buffer
entry remembers the index of the write that created it so that the flush
which later drains it can be attributed to that write.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from typing import Callable, Protocol

from .history import (
    SYSTEM,
    Barrier,
    Event,
    Flush,
    History,
    Locked,
    Read,
    Write,
)

RMW_FUNCTIONS: dict[str, Callable[[int, int], int]] = {
    "TAS": lambda current, operand: operand,
    "ADD": lambda current, operand: current + operand,
}


class PreconditionViolated(Exception):
    def __init__(self, rule: str, detail: str):
        super().__init__(f"{rule}: {detail}")
        self.rule = rule
        self.detail = detail


@dataclass(frozen=True)
class BufferEntry:
    loc: str
    value: int
    index: tuple[int, int]


@dataclass(frozen=True)
class TsoState:
    """Shared memory and per-thread buffers.  Never mutated after construction."""

    memory: Mapping[str, int] = field(default_factory=dict)
    buffers: Mapping[int, tuple[BufferEntry, ...]] = field(default_factory=dict)

    def buffer(self, t: int) -> tuple[BufferEntry, ...]:
        return self.buffers.get(t, ())

    def load(self, t: int, loc: str) -> int:
        """Value thread ``t`` reads at ``loc``: its newest buffered write, else memory."""
        for entry in reversed(self.buffer(t)):
            if entry.loc == loc:
                return entry.value
        return self.memory.get(loc, 0)

    def with_buffer(self, t: int, buf: tuple[BufferEntry, ...]) -> TsoState:
        buffers = dict(self.buffers)
        if buf:
            buffers[t] = buf
        else:
            buffers.pop(t, None)
        return TsoState(self.memory, buffers)

    def with_memory(self, loc: str, value: int) -> TsoState:
        mem = dict(self.memory)
        mem[loc] = value
        return TsoState(mem, self.buffers)

    @property
    def quiescent(self) -> bool:
        return not any(self.buffers.values())


def initial_state(memory: Mapping[str, int] | None = None) -> TsoState:
    return TsoState(dict(memory or {}), {})


def step(s: TsoState, e: Event) -> TsoState:
    """Apply one memory event; raise :class:`PreconditionViolated` if its rule's premise fails."""
    a = e.action
    if isinstance(a, Read):
        seen = s.load(e.thread, a.loc)
        if seen != a.value:
            raise PreconditionViolated("Read", f"{e} but thread would read {seen}")
        return s
    if isinstance(a, Write):
        return s.with_buffer(e.thread, s.buffer(e.thread) + (BufferEntry(a.loc, a.value, e.index),))
    if isinstance(a, Flush):
        buf = s.buffer(e.owner)
        if not buf:
            raise PreconditionViolated("Flush", f"{e} with empty buffer")
        head = buf[0]
        if (head.loc, head.value, head.index) != (a.loc, a.value, e.index):
            raise PreconditionViolated("Flush", f"{e} but buffer head is {head}")
        return s.with_buffer(e.owner, buf[1:]).with_memory(head.loc, head.value)
    if isinstance(a, Barrier):
        if s.buffer(e.thread):
            raise PreconditionViolated("Barrier", f"{e} with nonempty buffer")
        return s
    if isinstance(a, Locked):
        if s.buffer(e.thread):
            raise PreconditionViolated("Locked-RMW", f"{e} with nonempty buffer")
        current = s.memory.get(a.loc, 0)
        if current != a.read_value:
            raise PreconditionViolated("Locked-RMW", f"{e} but memory holds {current}")
        try:
            fn = RMW_FUNCTIONS[a.fn]
        except KeyError:
            raise PreconditionViolated("Locked-RMW", f"unknown RMW function {a.fn!r}") from None
        return s.with_memory(a.loc, fn(a.read_value, a.operand))
    raise ValueError(f"not a memory event: {e}")


def flush_event(s: TsoState, t: int) -> Event | None:
    """The flush of thread ``t``'s buffer head, if any."""
    buf = s.buffer(t)
    if not buf:
        return None
    head = buf[0]
    return Event(Flush(head.loc, head.value), SYSTEM, head.index)


def replay(h: History | Iterable[Event], memory: Mapping[str, int] | None = None) -> TsoState:
    """Run the memory events of ``h`` from the initial state; external events are skipped."""
    s = initial_state(memory)
    for e in h:
        if e.is_memory:
            s = step(s, e)
    return s


def replays(h: History, memory: Mapping[str, int] | None = None) -> bool:
    try:
        replay(h, memory)
    except PreconditionViolated:
        return False
    return True


class MemoryModel(Protocol):
    """A flush-based memory: hidden events drain per-thread state into shared memory.

    Only TSO is provided; the explorer talks to the memory through this surface.
    """

    def initial(self, memory: Mapping[str, int]) -> TsoState: ...

    def step(self, s: TsoState, e: Event) -> TsoState: ...

    def load(self, s: TsoState, t: int, loc: str) -> int: ...

    def hidden_events(self, s: TsoState) -> list[Event]: ...

    def drained(self, s: TsoState, t: int) -> bool: ...


class Tso:
    def initial(self, memory):
        return initial_state(memory)

    def step(self, s, e):
        return step(s, e)

    def load(self, s, t, loc):
        return s.load(t, loc)

    def hidden_events(self, s):
        return [flush_event(s, t) for t in sorted(s.buffers) if s.buffers[t]]

    def drained(self, s, t):
        return not s.buffer(t)


TSO = Tso()
