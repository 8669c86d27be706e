"""A negative control: a lock that tests with a load and sets with a store.

Both threads can read the flag as free before either store lands, so both
acquire.  The checker finds such a run even when every operation's writes
are flushed before it returns.
"""

from __future__ import annotations

from causalin.checkers import explore_rs_linearizable
from causalin.cli import render
from causalin.workloads import broken_spinlock, two_acquirers

for impl in (None, broken_spinlock()):
    w = two_acquirers(impl)
    v = explore_rs_linearizable(w, w.specs)
    print(f"{w.name}: RS-linearizable? {v.holds}  ({v.detail})" if v.holds else f"{w.name}: RS-linearizable? {v.holds}")
    if not v.holds:
        print(render(v.counterexample["history"]))
