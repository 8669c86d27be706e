"""When the delayed release does matter.

Thread 2 releases the lock and then reads a seqlock-protected register.
Thread 1 writes the register; thread 3 reads the new value, then fails to
take the lock because thread 2's release has not been flushed.  Thread 2's
read saw the old value, so thread 2 must have released before thread 3 ran,
which contradicts thread 3 finding the lock held.  No reordering rescues
this: the external history is not even sequentially consistent.

The culprit is an operation race: thread 2 started a new operation while
its release was unflushed, and another thread depends on that operation.
A fence after the release removes the race.
"""

from __future__ import annotations

from causalin import ANALYTIC, explore, external, find_o_races, rs_acyclic
from causalin.checkers import is_causally_linearizable, is_sequentially_consistent
from causalin.cli import render
from causalin.races import is_orf
from causalin.workloads import fig3_with_barrier, fig3_workload, reference_histories

h = reference_histories()["fig-3"]
w = fig3_workload()
print(render(h, races=True))

print("\nsequentially consistent?", is_sequentially_consistent(external(h), w.specs).holds)
print("causally linearizable?", is_causally_linearizable(h, ANALYTIC, w.specs).holds)
for race in find_o_races(h):
    print("race:", race)
cycle = rs_acyclic(h).counterexample["cycle"]
print(f"the causal order plus flush-before-response edges has a cycle of {len(cycle) - 1} events")

print("\nExploring the client on TSO ...")
ex = explore(w)
print(f"  {len(ex.all)} class representatives; race free? {is_orf(ex.all).holds}")
fenced = fig3_with_barrier()
ex = explore(fenced)
print(f"With a fence after the release: {len(ex.all)} representatives; race free? {is_orf(ex.all).holds}")
