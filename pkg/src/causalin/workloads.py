"""Object implementations, client programs and the literal example histories.

Booleans are encoded as 0/1.  Thread ids start at 1.  Locations are named
``"<object>.<field>"``.
"""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from functools import cached_property

from .explore import Machine
from .history import History, HistoryBuilder
from .program import Builder, ObjectImpl, OpDef, Program
from .specs import LockSpec, RegisterSpec, SequentialSpec
from .tso import replay

DEFAULT_RETRIES = 3


# -- objects ----------------------------------------------------------------


def _tas_try_acquire(b: Builder, impl: ObjectImpl) -> None:
    b.rmw("TAS", impl.loc("F"), 1, "held")
    b.ret(lambda f: 1 - f["held"])


def _release(b: Builder, impl: ObjectImpl) -> None:
    b.store(impl.loc("F"), 0)
    b.ret()


def spinlock(name: str = "L", base: str = "") -> ObjectImpl:
    """Test-and-set lock whose release is a plain, unfenced store."""
    return ObjectImpl(
        name,
        "spinlock",
        {"F": 0},
        {"try_acquire": OpDef((), _tas_try_acquire), "release": OpDef((), _release)},
        base,
    )


def _racy_try_acquire(b: Builder, impl: ObjectImpl) -> None:
    fail = b.new_label("busy")
    b.load(impl.loc("F"), "held")
    b.branch("held", fail)
    b.store(impl.loc("F"), 1)
    b.ret(1)
    b.place(fail)
    b.ret(0)


def broken_spinlock(name: str = "L", base: str = "") -> ObjectImpl:
    """Negative control: the flag is tested with a plain load and set with a plain store."""
    return ObjectImpl(
        name,
        "broken-spinlock",
        {"F": 0},
        {"try_acquire": OpDef((), _racy_try_acquire), "release": OpDef((), _release)},
        base,
    )


def _seq_write(b: Builder, impl: ObjectImpl) -> None:
    c = impl.loc("c")
    b.load(c, "c")
    b.store(c, lambda f: f["c"] + 1)
    b.store(impl.loc("s0"), "v0")
    b.store(impl.loc("s1"), "v1")
    b.store(c, lambda f: f["c"] + 2)
    b.ret()


def _seq_read(attempts: int) -> Callable[[Builder, ObjectImpl], None]:
    def body(b: Builder, impl: ObjectImpl) -> None:
        top, retry = b.new_label("try"), b.new_label("retry")
        b.assign("k", 0)
        b.place(top)
        b.load(impl.loc("c"), "c0")
        b.load(impl.loc("s0"), "v0")
        b.load(impl.loc("s1"), "v1")
        b.load(impl.loc("c"), "c1")
        b.branch(lambda f: f["c0"] % 2 or f["c0"] != f["c1"], retry)
        b.ret("v0", "v1")
        b.place(retry)
        b.assign("k", lambda f: f["k"] + 1)
        b.branch(lambda f: f["k"] < attempts, top)
        b.halt()  # out of attempts: the read stays pending

    return body


def seqlock(name: str = "S", attempts: int = DEFAULT_RETRIES) -> ObjectImpl:
    """Two-slot seqlock: odd counter while a write is in progress; readers retry."""
    return ObjectImpl(
        name,
        "seqlock",
        {"c": 0, "s0": 0, "s1": 0},
        {"write": OpDef(("v0", "v1"), _seq_write), "read": OpDef((), _seq_read(attempts))},
    )


def spec_for(impl: ObjectImpl) -> SequentialSpec:
    if impl.kind in ("spinlock", "broken-spinlock"):
        return LockSpec(impl.name)
    if impl.kind == "seqlock":
        return RegisterSpec(impl.name, (0, 0))
    raise ValueError(f"no specification for {impl.kind}")


# -- workloads ----------------------------------------------------------------


Script = Callable[[Builder], None]


@dataclass(frozen=True)
class Workload:
    """Objects plus one client script per thread."""

    name: str
    objects: tuple[ObjectImpl, ...]
    scripts: tuple[Script, ...]
    params: Mapping[str, object] = field(default_factory=dict)

    @cached_property
    def programs(self) -> tuple[Program, ...]:
        objs = {o.name: o for o in self.objects}
        out = []
        for t, script in enumerate(self.scripts, start=1):
            b = Builder(objs)
            script(b)
            out.append(b.build(f"{self.name}/t{t}"))
        return tuple(out)

    @cached_property
    def machine(self) -> Machine:
        memory: dict[str, int] = {}
        for o in self.objects:
            memory.update(o.locations)
        return Machine(self.programs, memory)

    @property
    def specs(self) -> dict[str, SequentialSpec]:
        return {o.name: spec_for(o) for o in self.objects}

    def footprints(self) -> dict[str, frozenset[str]]:
        return {o.name: frozenset(o.locations) for o in self.objects}


def acquire(b: Builder, lock: str = "L", attempts: int = DEFAULT_RETRIES) -> None:
    """Retry ``try_acquire`` up to ``attempts`` times; halt the thread if every attempt fails."""
    got = b.new_label("got")
    for _ in range(attempts):
        b.call(lock, "try_acquire", into=("ok",))
        b.branch("ok", got)
    b.halt()
    b.place(got)


def calls(*steps: tuple) -> Script:
    """A straight-line script: each step is ``(obj, op, *args)``."""

    def script(b: Builder) -> None:
        for obj, op, *args in steps:
            b.call(obj, op, *args)

    return script


def fig2_workload() -> Workload:
    return Workload(
        "spinlock-fig2",
        (spinlock("L"),),
        (calls(("L", "try_acquire"), ("L", "release")), calls(("L", "try_acquire"))),
    )


def two_acquirers(impl: ObjectImpl | None = None) -> Workload:
    impl = impl or spinlock("L")
    one = calls(("L", "try_acquire"))
    return Workload(f"{impl.kind}-two-acquirers", (impl,), (one, one))


def spinlock_workload(impl: ObjectImpl | None = None) -> Workload:
    """Two threads each running try_acquire; release.  Used per object for RS checks."""
    impl = impl or spinlock("L")
    step = calls(("L", "try_acquire"), ("L", "release"))
    return Workload(f"{impl.kind}-pair", (impl,), (step, step))


def seqlock_workload(writes: tuple[tuple[int, int], ...] = ((1, 1),), readers: int = 1) -> Workload:
    writer = calls(*(("S", "write", v0, v1) for v0, v1 in writes))
    reader = calls(("S", "read"))
    return Workload("seqlock", (seqlock("S"),), (writer,) + (reader,) * readers)


def fig3_workload() -> Workload:
    return Workload(
        "spinlock-seqlock-fig3",
        (spinlock("L"), seqlock("S")),
        (
            calls(("S", "write", 1, 1)),
            calls(("L", "try_acquire"), ("L", "release"), ("S", "read")),
            calls(("S", "read"), ("L", "try_acquire")),
        ),
    )


def fig3_with_barrier() -> Workload:
    """The spinlock-seqlock client with a fence between t2's release and read."""

    def t2(b: Builder) -> None:
        b.call("L", "try_acquire")
        b.call("L", "release")
        b.fence()
        b.call("S", "read")

    base = fig3_workload()
    return Workload("spinlock-seqlock-fig3-fenced", base.objects, (base.scripts[0], t2, base.scripts[2]))


def locked_register_workload(readers: int = 1, attempts: int = DEFAULT_RETRIES) -> Workload:
    """Lock-protected seqlock access: a writer fences before releasing, so the client is race free."""

    def writer(b: Builder) -> None:
        acquire(b, "L", attempts)
        b.call("S", "write", 1, 1)
        b.fence()
        b.call("L", "release")

    def reader(b: Builder) -> None:
        acquire(b, "L", attempts)
        b.call("S", "read")
        b.call("L", "release")

    return Workload(
        "locked-register", (spinlock("L"), seqlock("S")), (writer,) + (reader,) * readers
    )


NULL = 0
DEFAULT_INITIAL = (1, 2)


def dcl_script(initial: tuple[int, int] = DEFAULT_INITIAL, attempts: int = DEFAULT_RETRIES) -> Script:
    """Double-checked lazy initialisation of ``X`` guarded by ``L``; ``0`` in slot 0 means unset."""

    def script(b: Builder) -> None:
        done, unlock = b.new_label("done"), b.new_label("unlock")
        b.call("X", "read", into=("v0", "v1"))
        b.branch(lambda r: r["v0"] != NULL, done)
        acquire(b, "L", attempts)
        b.call("X", "read", into=("v0", "v1"))
        b.branch(lambda r: r["v0"] != NULL, unlock)
        b.assign("v0", initial[0])
        b.assign("v1", initial[1])
        b.call("X", "write", "v0", "v1")
        b.fence()
        b.place(unlock)
        b.call("L", "release")
        b.place(done)

    return script


def dcl_workload(threads: int = 2, initial: tuple[int, int] = DEFAULT_INITIAL,
                 attempts: int = DEFAULT_RETRIES) -> Workload:
    if initial[0] == NULL:
        raise ValueError("the initial value must differ from the null marker")
    return Workload(
        "dcl",
        (seqlock("X", attempts), spinlock("L")),
        (dcl_script(initial, attempts),) * threads,
        {"threads": threads, "initial": initial},
    )


def dcl_results(h: History) -> dict[int, tuple[int, ...] | None]:
    """Per thread, the pair ``ensure_init`` would return (``None`` if it never got one)."""
    out: dict[int, tuple[int, ...] | None] = {}
    for t in h.threads:
        result = None
        for op in h.operations:
            if op.thread != t or op.obj != "X" or op.pending:
                continue
            if op.name == "write":
                result = op.args
            elif op.returns[0] != NULL:
                result = op.returns
        out[t] = result
    return out


def dcl_gave_up(h: History, t: int) -> bool:
    """Thread ``t`` stopped because its bounded retries ran out (a pending read or a failed last acquire)."""
    ops = [op for op in h.operations if op.thread == t]
    if not ops:
        return False
    last = ops[-1]
    if last.pending:
        return last.obj == "X" and last.name == "read"
    return last.name == "try_acquire" and last.returns == (0,)


def dcl_initializations(h: History) -> int:
    return sum(1 for op in h.operations if op.obj == "X" and op.name == "write")


BUILTINS: dict[str, Callable[..., Workload]] = {
    "spinlock-fig2": fig2_workload,
    "spinlock-seqlock-fig3": fig3_workload,
    "dcl": dcl_workload,
}


def builtin(name: str, **params) -> Workload:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown builtin workload {name!r}; choose from {sorted(BUILTINS)}") from None
    return factory(**params)


# -- literal histories ------------------------------------------------------


def _history_1() -> History:
    b = HistoryBuilder()
    b.inv(1, "L", "try_acquire")
    b.locked(1, "TAS", "L.F", 1, 0)
    b.resp(1, "L", 1)
    b.inv(1, "L", "release")
    b.write(1, "L.F", 0)
    b.resp(1, "L")
    b.inv(2, "L", "try_acquire")
    b.locked(2, "TAS", "L.F", 1, 1)
    b.resp(2, "L", 0)
    b.flush(1)
    return b.history()


def _history_2() -> History:
    b = HistoryBuilder()
    b.inv(1, "L", "try_acquire")
    b.locked(1, "TAS", "L.F", 1, 0)
    b.resp(1, "L", 1)
    b.inv(2, "L", "try_acquire")
    b.locked(2, "TAS", "L.F", 1, 1)
    b.resp(2, "L", 0)
    b.inv(1, "L", "release")
    b.write(1, "L.F", 0)
    b.flush(1)
    b.resp(1, "L")
    return b.history()


def _fig_2() -> History:
    b = HistoryBuilder()
    b.inv(1, "L", "try_acquire")
    b.resp(1, "L", 1)
    b.inv(1, "L", "release")
    b.resp(1, "L")
    b.inv(2, "L", "try_acquire")
    b.resp(2, "L", 0)
    return b.history()


def _seq_read_events(b: HistoryBuilder, t: int, c: int, v: tuple[int, int]) -> None:
    b.inv(t, "S", "read")
    b.read(t, "S.c", c)
    b.read(t, "S.s0", v[0])
    b.read(t, "S.s1", v[1])
    b.read(t, "S.c", c)
    b.resp(t, "S", *v)


def _fig_3() -> History:
    b = HistoryBuilder()
    b.inv(2, "L", "try_acquire")
    b.locked(2, "TAS", "L.F", 1, 0)
    b.resp(2, "L", 1)
    b.inv(2, "L", "release")
    b.write(2, "L.F", 0)
    b.resp(2, "L")
    _seq_read_events(b, 2, 0, (0, 0))
    b.inv(1, "S", "write", 1, 1)
    b.read(1, "S.c", 0)
    for loc, v in (("S.c", 1), ("S.s0", 1), ("S.s1", 1), ("S.c", 2)):
        b.write(1, loc, v)
        b.flush(1)
    b.resp(1, "S")
    _seq_read_events(b, 3, 2, (1, 1))
    b.inv(3, "L", "try_acquire")
    b.locked(3, "TAS", "L.F", 1, 1)
    b.resp(3, "L", 0)
    b.flush(2)
    return b.history()


FIG3_MEMORY = {"L.F": 0, "S.c": 0, "S.s0": 0, "S.s1": 0}


def reference_histories() -> dict[str, History]:
    """Literal reference histories: two spinlock executions, the external history of the
    first, and the racy spinlock-seqlock execution.

    Each history with memory events is replayed on TSO; a transcription
    error raises immediately.
    """
    out = {
        "history-1": _history_1(),
        "history-2": _history_2(),
        "fig-2": _fig_2(),
        "fig-3": _fig_3(),
    }
    for h in out.values():
        replay(h, FIG3_MEMORY)
    return out
