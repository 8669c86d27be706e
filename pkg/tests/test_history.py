from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from causalin.history import (
    SYSTEM,
    Event,
    Flush,
    History,
    HistoryBuilder,
    Invocation,
    Response,
    external,
    history_from_json,
    history_to_json,
    is_complete,
    is_prefix,
    is_well_formed,
    matched_pairs,
    project_object,
    project_thread,
    thread_equivalent,
)
from causalin.workloads import fig3_workload, locked_register_workload

from conftest import random_run


def test_flush_must_be_system_event():
    with pytest.raises(ValueError):
        Event(Flush("x", 1), 1, (1, 0))
    with pytest.raises(ValueError):
        Event(Invocation("L", "release"), SYSTEM, (1, 0))


def test_index_owner_matches_thread():
    with pytest.raises(ValueError):
        Event(Invocation("L", "release"), 2, (1, 0))


def test_duplicate_events_rejected():
    e = Event(Invocation("L", "release"), 1, (1, 0))
    with pytest.raises(ValueError):
        History((e, e)).position


def test_builder_attributes_flush_to_write(lit):
    h1 = lit["history-1"]
    (f,) = [e for e in h1 if e.is_hidden]
    w = h1.flush_of[f]
    assert w.thread == 1 and w.index == f.index
    assert h1.operation_of[w].name == "release"
    assert f.owner == 1


def test_operations_of_history_1(lit):
    ops = lit["history-1"].operations
    assert [(op.thread, op.name, op.returns) for op in ops] == [
        (1, "try_acquire", (1,)),
        (1, "release", ()),
        (2, "try_acquire", (0,)),
    ]
    assert all(not op.pending for op in ops)


def test_pending_operation():
    b = HistoryBuilder()
    b.inv(1, "L", "try_acquire")
    h = b.history()
    (op,) = h.operations
    assert op.pending and op.returns is None
    assert is_well_formed(h) and not is_complete(h)


def test_well_formedness():
    b = HistoryBuilder()
    b.resp(1, "L", 1)
    assert not is_well_formed(b.history())
    b = HistoryBuilder()
    b.inv(1, "L", "try_acquire")
    b.inv(1, "L", "try_acquire")
    assert not is_well_formed(b.history())


def test_projections(lit):
    h = lit["fig-3"]
    assert set(h.threads) == {1, 2, 3}
    t3 = project_thread(h, 3)
    assert all(e.thread == 3 for e in t3)
    assert [e.action for e in external(t3)] == [
        Invocation("S", "read"), Response("S", (1, 1)),
        Invocation("L", "try_acquire"), Response("L", (0,)),
    ]
    lock = project_object(h, "L")
    assert all(h.obj(e) == "L" for e in lock)
    assert any(e.is_hidden for e in lock)
    with pytest.raises(ValueError):
        project_thread(h, SYSTEM)


def test_matched_pairs_cover_operation_events(lit):
    h = lit["history-2"]
    pairs = matched_pairs(h)
    for e, (inv, resp) in pairs.items():
        assert h.position[inv] <= h.position[e]
        if resp is not None and not e.is_hidden:
            assert h.position[e] <= h.position[resp]


def test_thread_equivalence_ignores_flush_placement(lit):
    assert thread_equivalent(lit["history-1"], lit["history-2"])
    assert not thread_equivalent(lit["history-1"], lit["fig-3"])


def test_labels_erase_indices(lit):
    assert external(lit["history-1"]).labels == lit["fig-2"].labels


def test_prefix(lit):
    h = lit["fig-3"]
    assert is_prefix(h[:5], h)
    assert not is_prefix(lit["history-1"], h)


def test_real_and_program_order(lit):
    h = lit["history-1"]
    a, b = h[0], h[3]
    assert h.program_order(a, b) and h.real_time(a, b)
    assert not h.program_order(h[0], h[6])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(["fig3", "locked"]), st.integers(0, 40))
def test_json_round_trip(seed, which, n):
    w = fig3_workload() if which == "fig3" else locked_register_workload()
    h = random_run(w.machine, random.Random(seed), n)
    assert history_from_json(history_to_json(h)) == h
    assert is_well_formed(h)
