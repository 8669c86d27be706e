"""Causal linearizability on TSO: histories, a store-buffer explorer, and checkers."""

from .checkers import (
    LinearizableSystem,
    Verdict,
    all_causally_linearizable,
    check_observational_refinement,
    compose,
    is_causally_linearizable,
    is_linearizable,
    is_response_synchronized,
    is_rs_linearizable,
    is_sequentially_consistent,
    rs_relation,
)
from .explore import ExploreBounds, Machine, explore, is_member
from .history import (
    SYSTEM,
    Barrier,
    Event,
    Flush,
    History,
    HistoryBuilder,
    Invocation,
    Locked,
    Read,
    Response,
    Write,
    external,
    is_complete,
    is_well_formed,
    matched_pairs,
    project_actions,
    project_thread,
    thread_equivalent,
)
from .races import ORace, find_o_races, is_noninterfering, is_orf, is_sync_point, rs_acyclic
from .specs import LockSpec, RegisterSpec, SequentialSpec, SpecProduct
from .trace import (
    ANALYTIC,
    AnalyticIndependence,
    CausalOrder,
    OracleIndependence,
    analytic_independent,
    causal_order,
    causally_equivalent,
    linear_extension_sample,
    linear_extensions,
    reorder,
)
from .tso import TSO, PreconditionViolated, TsoState, step
from .workloads import Workload, builtin, reference_histories

__version__ = "0.1.0"
