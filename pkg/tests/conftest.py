from __future__ import annotations

import random

import pytest

from causalin.explore import enabled, initial_config, successor
from causalin.history import History
from causalin.workloads import reference_histories


@pytest.fixture(scope="session")
def lit():
    return reference_histories()


@pytest.fixture(scope="session")
def fig3_exploration():
    from causalin.explore import explore
    from causalin.workloads import fig3_workload

    return explore(fig3_workload())


def random_run(machine, rng: random.Random, max_len: int) -> History:
    """One random schedule of ``machine``, cut at ``max_len`` events."""
    c = initial_config(machine)
    trail = []
    while len(trail) < max_len:
        evs = enabled(machine, c)
        if not evs:
            break
        e = rng.choice(evs)
        trail.append(e)
        c = successor(machine, c, e)
    return History(tuple(trail))


def random_target(h: History, rel, rng: random.Random):
    """A strict partial order containing the causal order of ``h``.

    Built from a random linear extension ``g`` of the causal order: a random
    subset of the pairs ``g`` orders is added and the result closed.
    """
    from causalin.trace import causal_order, linear_extension_sample, relation_from_pairs

    co = causal_order(h, rel)
    g = linear_extension_sample(co, rng)
    pairs = set(co.pairs())
    ev = g.events
    density = rng.random()
    for i in range(len(ev)):
        for j in range(i + 1, len(ev)):
            if rng.random() < density * 0.3:
                pairs.add((ev[i], ev[j]))
    return relation_from_pairs(h, pairs)


# -- acceptance reporting ------------------------------------------------------

_CRITERIA: dict[int, str] = {}


class _Criterion:
    def __init__(self, number: int, title: str, limit: float | None):
        self.number, self.title, self.limit = number, title, limit
        self.notes: list[str] = []

    def note(self, text: str) -> None:
        self.notes.append(text)

    def __enter__(self):
        import time

        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        import time

        elapsed = time.perf_counter() - self._t0
        over = self.limit is not None and elapsed >= self.limit
        ok = exc_type is None and not over
        budget = f" (limit {self.limit:g}s)" if self.limit is not None else ""
        extra = "; ".join(self.notes)
        if exc_type is not None:
            extra = f"{exc_type.__name__}: {exc}".splitlines()[0][:160]
        elif over:
            extra = "time limit exceeded"
        line = f"{'PASS' if ok else 'FAIL'} criterion {self.number}: {self.title} [{elapsed:.2f}s{budget}]"
        _CRITERIA[self.number] = line + (f" {extra}" if extra else "")
        print(_CRITERIA[self.number])
        if over and exc_type is None:
            raise AssertionError(f"criterion {self.number} took {elapsed:.2f}s, limit {self.limit:g}s")
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for k in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[k])
