"""Command-line front end.

``causalin run SCENARIO`` explores a workload and runs checks over the
result; ``causalin show REPORT REF`` renders a history as per-thread columns.
SCENARIO is a JSON file or the name of a built-in workload.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from .checkers import (
    LinearizableSystem,
    Verdict,
    all_causally_linearizable,
    check_observational_refinement,
    explore_rs_linearizable,
    system_linearizable,
    system_sequentially_consistent,
)
from .explore import ExploreBounds, ProgramError, explore
from .history import History, history_from_json, history_to_json
from .program import Builder, ObjectImpl
from .races import all_rs_acyclic, find_o_races, is_noninterfering, is_orf
from .trace import ANALYTIC, causal_order
from .workloads import (
    BUILTINS,
    Workload,
    acquire,
    broken_spinlock,
    builtin,
    reference_histories,
    seqlock,
    spinlock,
)

FORMAT = 1
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_INCONCLUSIVE = 0, 1, 2, 3

CHECKS = (
    "linearizable",
    "sequentially-consistent",
    "causally-linearizable",
    "rs-linearizable",
    "orf",
    "noninterfering",
    "rs-acyclic",
    "observational-refinement",
)

OBJECT_TYPES = {"spinlock": spinlock, "broken-spinlock": broken_spinlock, "seqlock": seqlock}


class ScenarioError(ValueError):
    pass


# -- scenarios ---------------------------------------------------------------


def load_scenario(source: str) -> dict[str, Any]:
    """Parse a scenario file, or wrap a built-in name as a scenario."""
    path = Path(source)
    if not path.exists():
        if source in BUILTINS:
            return {"format": FORMAT, "builtin": source}
        raise ScenarioError(f"{source}: no such file or built-in workload ({', '.join(sorted(BUILTINS))})")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ScenarioError(f"{source}: top level must be an object")
    return data


def _need(cond: bool, where: str, msg: str) -> None:
    if not cond:
        raise ScenarioError(f"{where}: {msg}")


def build_workload(sc: dict[str, Any]) -> Workload:
    _need(sc.get("format", FORMAT) == FORMAT, "format", f"unsupported format {sc.get('format')!r}")
    if "builtin" in sc:
        name = sc["builtin"]
        _need(name in BUILTINS, "builtin", f"unknown built-in {name!r}")
        params = sc.get("params", {})
        _need(isinstance(params, dict), "params", "must be an object")
        if "initial" in params:
            params = {**params, "initial": tuple(params["initial"])}
        try:
            return builtin(name, **params)
        except TypeError as exc:
            raise ScenarioError(f"params: {exc}") from None
    objs = sc.get("objects")
    _need(isinstance(objs, list) and objs, "objects", "must be a non-empty list")
    impls: dict[str, ObjectImpl] = {}
    for k, o in enumerate(objs):
        where = f"objects[{k}]"
        _need(isinstance(o, dict), where, "must be an object")
        kind, name = o.get("type"), o.get("name")
        _need(kind in OBJECT_TYPES, f"{where}.type", f"must be one of {sorted(OBJECT_TYPES)}")
        _need(isinstance(name, str) and name and "." not in name, f"{where}.name", "must be a non-empty name without dots")
        _need(name not in impls, f"{where}.name", f"duplicate object {name!r}")
        params = dict(o.get("params", {}))
        if "alias" in params:
            _need(kind != "seqlock", f"{where}.params.alias", "only locks may alias")
            params["base"] = params.pop("alias")
        try:
            impls[name] = OBJECT_TYPES[kind](name, **params)
        except TypeError as exc:
            raise ScenarioError(f"{where}.params: {exc}") from None
    threads = sc.get("threads")
    _need(isinstance(threads, list) and threads, "threads", "must be a non-empty list")
    scripts = []
    for t, steps in enumerate(threads):
        _need(isinstance(steps, list), f"threads[{t}]", "must be a list of steps")
        _validate_steps(steps, f"threads[{t}]", impls)
        scripts.append(_script(steps))
    return Workload(sc.get("name", "scenario"), tuple(impls.values()), tuple(scripts))


def _validate_steps(steps: list, where: str, impls: dict[str, ObjectImpl]) -> None:
    for k, st in enumerate(steps):
        w = f"{where}[{k}]"
        _need(isinstance(st, dict), w, "must be an object")
        if "call" in st:
            target = st["call"]
            _need(isinstance(target, str) and target.count(".") == 1, f"{w}.call", "must be 'Object.operation'")
            obj, op = target.split(".")
            _need(obj in impls, f"{w}.call", f"unknown object {obj!r}")
            _need(op in impls[obj].operations, f"{w}.call", f"{obj} has no operation {op!r}")
            args = st.get("args", [])
            _need(len(args) == len(impls[obj].operations[op].params), f"{w}.args",
                  f"{target} takes {len(impls[obj].operations[op].params)} arguments")
        elif "acquire" in st:
            _need(st["acquire"] in impls, f"{w}.acquire", f"unknown object {st['acquire']!r}")
        elif "if" in st:
            _need(isinstance(st["if"], str), f"{w}.if", "must name a register")
            _validate_steps(st.get("then", []), f"{w}.then", impls)
            _validate_steps(st.get("else", []), f"{w}.else", impls)
        elif not st.get("fence"):
            raise ScenarioError(f"{w}: expected one of call, acquire, fence, if")


def _script(steps: list):
    def emit(b: Builder, seq: list) -> None:
        for st in seq:
            if "call" in st:
                obj, op = st["call"].split(".")
                b.call(obj, op, *st.get("args", []), into=tuple(st.get("into", ())))
            elif "acquire" in st:
                acquire(b, st["acquire"], st.get("attempts", 3))
            elif "if" in st:
                other, end = b.new_label("else"), b.new_label("fi")
                b.branch(lambda r, reg=st["if"]: not r.get(reg, 0), other)
                emit(b, st.get("then", []))
                b.jump(end)
                b.place(other)
                emit(b, st.get("else", []))
                b.place(end)
            else:
                b.fence()

    return lambda b: emit(b, steps)


def parse_bounds(text: str | None, base: dict[str, Any] | None = None) -> ExploreBounds:
    values = {"events": ExploreBounds.max_total_events, "perthread": ExploreBounds.max_events_per_thread}
    domain = 8
    for key, v in (base or {}).items():
        if key in values:
            values[key] = v
        elif key == "values":
            domain = v
        else:
            raise ScenarioError(f"bounds.{key}: unknown bound")
    if text:
        for part in text.split(","):
            key, _, v = part.partition("=")
            if key not in values and key != "values":
                raise ScenarioError(f"--bounds: unknown bound {key!r}")
            try:
                n = int(v)
            except ValueError:
                raise ScenarioError(f"--bounds: {key} needs an integer") from None
            if key == "values":
                domain = n
            else:
                values[key] = n
    try:
        return ExploreBounds(values["perthread"], values["events"], range(domain))
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"bounds: {exc}") from None


# -- running -------------------------------------------------------------------


def run_checks(w: Workload, histories: list[History], checks: Sequence[str], mode: str,
               bounds: ExploreBounds, jobs: int | None) -> list[Verdict]:
    rel = ANALYTIC
    out = []
    for name in checks:
        if name == "linearizable":
            v = system_linearizable(histories, rel, w.specs)
        elif name == "sequentially-consistent":
            v = system_sequentially_consistent(histories, w.specs)
        elif name == "causally-linearizable":
            v = all_causally_linearizable(histories, rel, w.specs)
        elif name == "rs-linearizable":
            v = explore_rs_linearizable(w, w.specs, bounds, jobs=jobs)
        elif name == "orf":
            v = is_orf(histories, rel, mode)
        elif name == "noninterfering":
            v = is_noninterfering(histories, rel, "footprint" if mode == "analytic" else "definitional",
                                  w.footprints())
        elif name == "rs-acyclic":
            v = all_rs_acyclic(histories, rel)
        elif name == "observational-refinement":
            v = check_observational_refinement(None, histories, LinearizableSystem(w.specs))
        else:  # pragma: no cover - validated earlier
            raise ScenarioError(f"unknown check {name!r}")
        out.append(v)
    return out


def _collect_histories(verdicts: list[Verdict]) -> dict[str, Any]:
    named: dict[str, Any] = {}
    for v in verdicts:
        for role in ("witness", "counterexample"):
            x = getattr(v, role)
            h = x.get("history") if isinstance(x, dict) else x if isinstance(x, History) else None
            if isinstance(h, History):
                named[f"{v.check}/{role}"] = history_to_json(h)
    return named


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    w = build_workload(sc)
    bounds = parse_bounds(args.bounds, sc.get("bounds"))
    checks = args.checks.split(",") if args.checks else sc.get("checks", ["causally-linearizable", "orf"])
    for c in checks:
        _need(c in CHECKS, "checks", f"unknown check {c!r}; choose from {', '.join(CHECKS)}")
    jobs = args.jobs if args.jobs is not None else int(os.environ.get("CAUSALIN_JOBS", "1"))
    ex = explore(w, bounds, reduction=args.reduction, jobs=jobs)
    histories = ex.all
    verdicts = run_checks(w, histories, checks, args.mode, bounds, jobs)
    histories_json = {name: history_to_json(h) for name, h in reference_histories().items()}
    histories_json.update(_collect_histories(verdicts))
    report = {
        "format": FORMAT,
        "scenario": sc,
        "bounds": {
            "events": bounds.max_total_events,
            "perthread": bounds.max_events_per_thread,
            "values": len(bounds.value_domain),
        },
        "mode": args.mode,
        "reduction": args.reduction,
        "exploration": {
            "histories": len(ex.histories),
            "truncations": len(ex.truncated),
            "sleep_blocked": ex.blocked,
            "states": ex.states,
            "wall_time": round(ex.wall_time, 3),
        },
        "truncated": [{"truncated": True, "prefix": history_to_json(h)} for h in ex.truncated],
        "verdicts": [v.to_json() for v in verdicts],
        "histories": histories_json,
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(f"{w.name}: {len(ex.histories)} histories, {len(ex.truncated)} truncated, {ex.wall_time:.2f}s")
    for v in verdicts:
        state = "inconclusive" if v.inconclusive else "holds" if v.holds else "FAILS"
        print(f"  {v.check:26} {state}")
    if any(not v.holds and not v.inconclusive for v in verdicts):
        return EXIT_FAIL
    if any(v.inconclusive for v in verdicts):
        return EXIT_INCONCLUSIVE
    return EXIT_OK


# -- rendering -------------------------------------------------------------------


def render(h: History, *, order: str | None = None, races: bool = False) -> str:
    """Per-thread columns plus a ``sys`` column for flushes, one event per row."""
    if not h.events:
        return ""
    threads = list(h.threads)
    cols = [f"t{t}" for t in threads] + ["sys"]
    marks: dict[int, list[str]] = {}
    found = find_o_races(h) if races else []
    pos = h.position
    for r in found[:1]:
        for tag, e in (("r0", r.r0), ("i", r.i), ("r1", r.r1), ("f", r.flush)):
            marks.setdefault(pos[e], []).append(tag)
    cells = []
    for k, e in enumerate(h):
        text = str(e) + (f"  <{','.join(marks[k])}>" if k in marks else "")
        col = len(threads) if e.is_hidden else threads.index(e.thread)
        cells.append((col, text))
    width = [max([len(cols[c])] + [len(t) for cc, t in cells if cc == c]) for c in range(len(cols))]
    lines = [" #  | " + " | ".join(n.ljust(width[c]) for c, n in enumerate(cols))]
    lines.append("----+-" + "-+-".join("-" * wd for wd in width))
    for k, (col, text) in enumerate(cells):
        row = ["" if c != col else text for c in range(len(cols))]
        lines.append(f"{k:3} | " + " | ".join(v.ljust(width[c]) for c, v in enumerate(row)))
    if order == "causal":
        lines.append("")
        lines.append("causal order (covering edges):")
        co = causal_order(h)
        for a, b in _covering(co):
            lines.append(f"  {a:3} -> {b:3}   {h.events[a]}  ->  {h.events[b]}")
    if races:
        lines.append("")
        if found:
            for r in found:
                lines.append(f"o-race: r0={pos[r.r0]} i={pos[r.i]} r1={pos[r.r1]} flush={pos[r.flush]}")
        else:
            lines.append("no o-race")
    return "\n".join(line.rstrip() for line in lines)


def _covering(co) -> list[tuple[int, int]]:
    out = []
    preds = co.preds
    for j, m in enumerate(preds):
        covered = 0
        k = m
        while k:
            low = k & -k
            covered |= preds[low.bit_length() - 1]
            k ^= low
        direct = m & ~covered
        out.extend((i, j) for i in range(len(preds)) if (direct >> i) & 1)
    return sorted(out)


def cmd_show(args) -> int:
    path = Path(args.report)
    if not path.exists():
        raise ScenarioError(f"{args.report}: no such report")
    try:
        report = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{args.report}:{exc.lineno}: {exc.msg}") from None
    named = report.get("histories", {})
    if args.ref not in named:
        raise ScenarioError(f"no history {args.ref!r} in report; available: {', '.join(sorted(named))}")
    h = history_from_json(named[args.ref])
    print(render(h, order=args.order, races=args.races))
    return EXIT_OK


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="causalin", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="explore a scenario and run checks")
    r.add_argument("scenario", help="scenario JSON file or built-in name")
    r.add_argument("--bounds", help="events=N,perthread=M[,values=K]")
    r.add_argument("--checks", help="comma-separated: " + ",".join(CHECKS))
    r.add_argument("--mode", choices=("analytic", "definitional"), default="analytic")
    r.add_argument("--reduction", choices=("por", "none"), default="por")
    r.add_argument("--out", help="write the JSON report here")
    r.add_argument("--jobs", type=int, help="parallel workers (default: $CAUSALIN_JOBS or 1)")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("show", help="render a history from a report")
    s.add_argument("report")
    s.add_argument("ref", help="history name inside the report, e.g. history-1")
    s.add_argument("--order", choices=("causal",))
    s.add_argument("--races", action="store_true")
    s.set_defaults(func=cmd_show)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ScenarioError, ProgramError) as exc:
        print(f"causalin: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
