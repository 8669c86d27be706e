from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from causalin.history import HistoryBuilder, History
from causalin.tso import PreconditionViolated, TSO, initial_state, replay, replays, step
from causalin.workloads import FIG3_MEMORY, fig3_workload, spinlock_workload

from conftest import random_run


def test_reference_histories_replay(lit):
    for name in ("history-1", "history-2", "fig-3"):
        assert replays(lit[name], FIG3_MEMORY), name
    assert replay(lit["history-1"]).memory["L.F"] == 0


def test_store_forwarding_and_invisibility():
    b = HistoryBuilder()
    b.write(1, "x", 1)
    b.read(1, "x", 1)
    b.read(2, "x", 0)
    b.flush(1)
    b.read(2, "x", 1)
    assert replays(b.history())


def test_read_of_unflushed_value_by_other_thread_fails():
    b = HistoryBuilder()
    b.write(1, "x", 1)
    b.read(2, "x", 1)
    with pytest.raises(PreconditionViolated) as err:
        replay(b.history())
    assert err.value.rule == "Read"


def test_store_buffering_litmus():
    """Both threads read 0: allowed on TSO, impossible under SC."""
    b = HistoryBuilder()
    b.write(1, "x", 1)
    b.write(2, "y", 1)
    b.read(1, "y", 0)
    b.read(2, "x", 0)
    b.flush(1)
    b.flush(2)
    assert replays(b.history())


def test_barrier_and_locked_need_empty_buffer():
    b = HistoryBuilder()
    b.write(1, "x", 1)
    b.barrier(1)
    with pytest.raises(PreconditionViolated, match="Barrier"):
        replay(b.history())
    b = HistoryBuilder()
    b.write(1, "x", 1)
    b.locked(1, "TAS", "y", 1, 0)
    with pytest.raises(PreconditionViolated, match="Locked"):
        replay(b.history())


def test_locked_functions():
    s = initial_state({"x": 3})
    b = HistoryBuilder()
    s = step(s, b.locked(1, "ADD", "x", 2, 3))
    assert s.memory["x"] == 5
    s = step(s, b.locked(1, "TAS", "x", 1, 5))
    assert s.memory["x"] == 1
    with pytest.raises(PreconditionViolated):
        step(s, b.locked(1, "TAS", "x", 1, 0))
    with pytest.raises(PreconditionViolated):
        step(s, b.locked(1, "CAS", "x", 1, 1))


def test_flush_order_is_fifo():
    b = HistoryBuilder()
    w1 = b.write(1, "x", 1)
    w2 = b.write(1, "y", 2)
    f_second = b.flush(1)
    h = History((w1, w2, History((f_second,)).events[0]))
    assert replays(h)
    s = replay(History((w1, w2)))
    swapped = type(f_second)(type(f_second.action)("y", 2), None, w2.index)
    with pytest.raises(PreconditionViolated, match="Flush"):
        step(s, swapped)


def test_memory_model_surface():
    b = HistoryBuilder()
    s = TSO.step(TSO.initial({}), b.write(2, "x", 4))
    assert not TSO.drained(s, 2) and TSO.drained(s, 1)
    assert TSO.load(s, 2, "x") == 4 and TSO.load(s, 1, "x") == 0
    (f,) = TSO.hidden_events(s)
    assert TSO.step(s, f).quiescent


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 60))
def test_machine_runs_replay_and_prefixes_replay(seed, n):
    w = fig3_workload()
    h = random_run(w.machine, random.Random(seed), n)
    assert replays(h, FIG3_MEMORY)
    for k in range(0, len(h)):
        assert replays(h[:k], FIG3_MEMORY)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 40))
def test_foreign_reads_never_see_unflushed_writes(seed, n):
    """Flush invisibility: a read by another thread sees memory, not buffers."""
    w = spinlock_workload()
    h = random_run(w.machine, random.Random(seed), n)
    s = initial_state()
    for e in h:
        if e.is_memory:
            if type(e.action).__name__ == "Read":
                assert s.load(e.thread, e.action.loc) == e.action.value
                for t, buf in s.buffers.items():
                    if t != e.thread and not any(x.loc == e.action.loc for x in s.buffer(e.thread)):
                        assert e.action.value == s.memory.get(e.action.loc, 0)
            s = step(s, e)
