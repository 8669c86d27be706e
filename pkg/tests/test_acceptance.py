"""The nine acceptance criteria, each timed against its budget."""

from __future__ import annotations

import random

from causalin.checkers import (
    LinearizableSystem,
    all_causally_linearizable,
    check_observational_refinement,
    explore_rs_linearizable,
    is_causally_linearizable,
    is_linearizable,
    is_response_synchronized,
    is_sequentially_consistent,
    rs_relation,
)
from causalin.explore import ExploreBounds, explore
from causalin.history import external, is_complete
from causalin.races import all_rs_acyclic, find_o_races, is_noninterfering, is_orf, is_sync_point, rs_acyclic
from causalin.trace import (
    ANALYTIC,
    OracleIndependence,
    causal_class,
    causal_order,
    causally_equivalent,
    definitional_causal_order,
    reorder,
)
from causalin.workloads import (
    broken_spinlock,
    builtin,
    dcl_gave_up,
    dcl_initializations,
    dcl_results,
    dcl_workload,
    fig2_workload,
    fig3_with_barrier,
    fig3_workload,
    locked_register_workload,
    reference_histories,
    seqlock_workload,
    spinlock_workload,
    two_acquirers,
)

from conftest import random_run, random_target


def test_criterion_1_fig2(criterion):
    with criterion(1, "spinlock-fig2 reproduction", 5) as c:
        lit = reference_histories()
        w = builtin("spinlock-fig2")
        ex = explore(w, reduction="none")
        matching = [h for h in ex.all if external(h).labels == lit["fig-2"].labels]
        assert matching
        h = next(h for h in matching if h.labels == lit["history-1"].labels)
        assert h == lit["history-1"]
        assert is_linearizable(external(h), w.specs).holds is False
        v = is_causally_linearizable(h, ANALYTIC, w.specs)
        assert v.holds is True
        assert causally_equivalent(v.witness["history"], lit["history-2"])
        assert all(is_causally_linearizable(g, ANALYTIC, w.specs).holds for g in matching)
        c.note(f"{len(ex.all)} histories, {len(matching)} matching the fig-2 external history")


def test_criterion_2_histories_1_and_2(criterion):
    from causalin.tso import replays
    from causalin.workloads import FIG3_MEMORY

    with criterion(2, "history-1 and history-2", 1):
        lit = reference_histories()
        h1, h2 = lit["history-1"], lit["history-2"]
        assert replays(h1, FIG3_MEMORY) and replays(h2, FIG3_MEMORY)
        assert causally_equivalent(h1, h2) is True
        assert causal_order(h1) == causal_order(h2)
        assert is_response_synchronized(h1) is False
        assert is_response_synchronized(h2) is True


def test_criterion_3_fig3(criterion):
    with criterion(3, "spinlock-seqlock-fig3 reproduction", 60) as c:
        lit = reference_histories()["fig-3"]
        w = builtin("spinlock-seqlock-fig3")
        ex = explore(w)
        events = frozenset(lit.events)
        reps = [h for h in ex.all if len(h) == len(lit) and frozenset(h.events) == events and causally_equivalent(h, lit)]
        assert len(reps) == 1
        for h in (lit, reps[0]):
            assert is_sequentially_consistent(external(h), w.specs).holds is False
            assert is_causally_linearizable(h, ANALYTIC, w.specs).holds is False
            races = find_o_races(h)
            assert [str(r) for r in races] == [
                "o-race(resp_t2(L), S.read_t2(), resp_t3(L, 0); flush(t2, L.F, 0))"
            ]
            v = rs_acyclic(h)
            assert v.holds is False
            cyc = v.counterexample["cycle"]
            assert cyc[0] == cyc[-1] and len(cyc) > 2
            rs = rs_relation(h)
            assert all((a, b) in rs or causal_order(h).precedes(a, b) for a, b in zip(cyc, cyc[1:]))
        c.note(f"{len(ex.all)} representatives")


def test_criterion_4_dcl(criterion):
    with criterion(4, "DCL is ORF with 2 and 3 threads", 300) as c:
        for threads in (2, 3):
            w = dcl_workload(threads)
            ex = explore(w)
            assert not ex.truncated
            assert is_orf(ex.all).holds is True
            complete = [h for h in ex.histories if is_complete(h)]
            finished = 0
            for h in complete:
                assert dcl_initializations(h) <= 1
                for t, value in dcl_results(h).items():
                    assert value == w.params["initial"] or (value is None and dcl_gave_up(h, t))
                finished += all(v is not None for v in dcl_results(h).values())
            assert finished
            c.note(f"{threads} threads: {len(ex.histories)} histories, {len(complete)} complete,"
                   f" {finished} with every thread initialised")


REORDER_WORKLOADS = (fig2_workload, fig3_workload, locked_register_workload, seqlock_workload,
                    spinlock_workload, lambda: dcl_workload(2))


def test_criterion_5_reorder_property(criterion):
    with criterion(5, "reorder property suite, 10^4 cases", None) as c:
        rng = random.Random(20261014)
        machines = [f().machine for f in REORDER_WORKLOADS]
        failures = 0
        cases = 10_000
        for _ in range(cases):
            h = random_run(rng.choice(machines), rng, rng.randint(0, 10))
            target = random_target(h, ANALYTIC, rng)
            g = reorder(h, target, ANALYTIC)
            if not (causally_equivalent(h, g) and target.is_linear_extension(g)):
                failures += 1
        assert failures == 0
        c.note(f"{cases} cases, {failures} failures")


def test_criterion_6_rs_acyclic(criterion):
    with criterion(6, "RS acyclicity on ORF noninterfering workloads", None) as c:
        configs = [dcl_workload(2), locked_register_workload(1), locked_register_workload(2), fig3_with_barrier()]
        total = 0
        for w in configs:
            reps = explore(w).all
            assert is_orf(reps).holds
            assert is_noninterfering(reps).holds
            assert all_rs_acyclic(reps).holds
            total += len(reps)
        c.note(f"{len(configs)} configurations, {total} histories")


def test_criterion_7_locked_register_end_to_end(criterion):
    with criterion(7, "locked register is causally linearizable and refines", 600) as c:
        for obj in (spinlock_workload(), seqlock_workload(), seqlock_workload(writes=((1, 1), (2, 2)))):
            assert explore_rs_linearizable(obj, obj.specs).holds, obj.name
        for readers in (1, 2):
            w = locked_register_workload(readers)
            reps = explore(w).all
            assert is_orf(reps).holds
            assert is_noninterfering(reps).holds
            assert all_causally_linearizable(reps, ANALYTIC, w.specs).holds
            assert check_observational_refinement(None, reps, LinearizableSystem(w.specs)).holds
            c.note(f"{readers} reader(s): {len(reps)} histories")


def test_criterion_8_oracle_agreement(criterion):
    with criterion(8, "analytic vs brute-force independence and sync points", None) as c:
        bounds = ExploreBounds(max_total_events=8)
        decided = unknown = histories = conservative_sync = 0
        for w in (fig2_workload(), fig3_workload(), dcl_workload(2)):
            ex = explore(w, bounds, reduction="none")
            oracle = OracleIndependence(ex.all)
            brute: dict = {}
            for h in ex.all:
                histories += 1
                for i, a in enumerate(h.events):
                    for b in h.events[i + 1:]:
                        v = oracle.decide(a, b)
                        if v is None:
                            unknown += 1
                        else:
                            decided += 1
                            assert v == ANALYTIC.independent(a, b), (w.name, a, b)
                co = causal_order(h, ANALYTIC)
                if h.events not in brute:
                    # one brute-force pass per class covers every member
                    members = [g.events for g in causal_class(h, ANALYTIC)]
                    shared = definitional_causal_order(h, ANALYTIC).pairs()
                    brute.update(dict.fromkeys(members, shared))
                assert co.pairs() == brute[h.events]
                assert co.pairs() <= causal_order(h, oracle).pairs()
                for e in h.events:
                    if e.is_hidden:
                        continue
                    fast = is_sync_point(h, e, ANALYTIC, "analytic")
                    slow = is_sync_point(h, e, ANALYTIC, "definitional", co)
                    assert slow or not fast, (w.name, e)
                    conservative_sync += slow and not fast
        c.note(f"{histories} histories, {decided} decided pairs agree, {unknown} unknown,"
               f" {conservative_sync} conservative sync-point misses")


def test_criterion_9_broken_spinlock(criterion):
    with criterion(9, "broken spinlock fails RS-linearizability", 5) as c:
        v = explore_rs_linearizable(two_acquirers(broken_spinlock()), {"L": two_acquirers().specs["L"]})
        assert v.holds is False and not v.inconclusive
        ext = v.counterexample["external"]
        holders = [op.thread for op in ext.operations if op.name == "try_acquire" and op.returns == (1,)]
        assert len(holders) == 2
        c.note(f"counterexample: {ext}")
