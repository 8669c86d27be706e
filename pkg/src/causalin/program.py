"""Instruction streams for object operations and client threads.

A thread program is a flat tuple of instructions.  Object operations are
templates inlined at each call site; their instructions run in a fresh local
frame (``local=True``) so operation registers never clash with client
registers.  ``Enter``/``Exit`` mark operation boundaries and make the machine
emit the invocation/response events.

Expressions are ints (constants), strings (register names) or callables
taking the current frame.
"""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field, replace
from typing import Union

Expr = Union[int, str, Callable[[Mapping[str, int]], int]]


def evaluate(expr: Expr, frame: Mapping[str, int]) -> int:
    if isinstance(expr, bool):
        return int(expr)
    if isinstance(expr, int):
        return expr
    if isinstance(expr, str):
        return frame[expr]
    return int(expr(frame))


@dataclass(frozen=True)
class Load:
    loc: str
    dst: str
    local: bool = False


@dataclass(frozen=True)
class Store:
    loc: str
    value: Expr
    local: bool = False


@dataclass(frozen=True)
class Fence:
    local: bool = False


@dataclass(frozen=True)
class Rmw:
    fn: str
    loc: str
    operand: Expr
    dst: str
    local: bool = False


@dataclass(frozen=True)
class Assign:
    dst: str
    value: Expr
    local: bool = False


@dataclass(frozen=True)
class Branch:
    """Jump to ``target`` when ``cond`` evaluates nonzero."""

    cond: Expr
    target: int | str
    local: bool = False


@dataclass(frozen=True)
class Jump:
    target: int | str
    local: bool = False


@dataclass(frozen=True)
class Enter:
    obj: str
    op: str
    args: tuple[Expr, ...]
    params: tuple[str, ...]
    local: bool = False


@dataclass(frozen=True)
class Exit:
    obj: str
    returns: tuple[Expr, ...]
    into: tuple[str, ...]
    target: int | str
    local: bool = True


@dataclass(frozen=True)
class Halt:
    local: bool = False


Instruction = Union[Load, Store, Fence, Rmw, Assign, Branch, Jump, Enter, Exit, Halt]
EVENT_INSTRUCTIONS = (Load, Store, Fence, Rmw, Enter, Exit)


@dataclass(frozen=True)
class OpDef:
    params: tuple[str, ...]
    body: Callable[["Builder", "ObjectImpl"], None]


@dataclass(frozen=True)
class ObjectImpl:
    """An object implementation: owned locations and operation templates.

    Locations are named ``"<base>.<field>"``; ``base`` defaults to the object
    name and is shared when one object aliases another.
    """

    name: str
    kind: str
    fields: Mapping[str, int]
    operations: Mapping[str, OpDef]
    base: str = ""

    def __post_init__(self):
        if not self.base:
            object.__setattr__(self, "base", self.name)

    def loc(self, fieldname: str) -> str:
        if fieldname not in self.fields:
            raise KeyError(f"{self.name} has no field {fieldname!r}")
        return f"{self.base}.{fieldname}"

    @property
    def locations(self) -> dict[str, int]:
        return {self.loc(f): v for f, v in self.fields.items()}

    def template(self, op: str) -> tuple[Instruction, ...]:
        """The instruction stream of one operation, compiled in isolation."""
        b = Builder({self.name: self})
        b.call(self.name, op, *(0 for _ in self.operations[op].params))
        return b.build().code

    def never_writes(self, op: str) -> bool:
        return not any(isinstance(i, (Store, Rmw)) for i in self.template(op))


@dataclass(frozen=True)
class Program:
    code: tuple[Instruction, ...]
    name: str = ""

    def __len__(self) -> int:
        return len(self.code)


@dataclass
class Builder:
    """Emit instructions with symbolic labels; :meth:`build` resolves them."""

    objects: Mapping[str, ObjectImpl] = field(default_factory=dict)
    code: list = field(default_factory=list)
    _labels: dict = field(default_factory=dict)
    _counter: int = 0
    _local: bool = False
    _ret: tuple | None = None

    def _emit(self, instr):
        self.code.append(replace(instr, local=self._local))

    def new_label(self, hint: str = "L") -> str:
        self._counter += 1
        return f"{hint}{self._counter}"

    def place(self, label: str) -> None:
        if label in self._labels:
            raise ValueError(f"label {label} placed twice")
        self._labels[label] = len(self.code)

    def load(self, loc: str, dst: str) -> None:
        self._emit(Load(loc, dst))

    def store(self, loc: str, value: Expr) -> None:
        self._emit(Store(loc, value))

    def fence(self) -> None:
        self._emit(Fence())

    def rmw(self, fn: str, loc: str, operand: Expr, dst: str) -> None:
        self._emit(Rmw(fn, loc, operand, dst))

    def assign(self, dst: str, value: Expr) -> None:
        self._emit(Assign(dst, value))

    def jump(self, label: str) -> None:
        self._emit(Jump(label))

    def branch(self, cond: Expr, label: str) -> None:
        self._emit(Branch(cond, label))

    def halt(self) -> None:
        self._emit(Halt())

    def call(self, obj: str, op: str, *args: Expr, into: tuple[str, ...] = ()) -> None:
        """Inline ``obj.op(args)``; return values land in client registers ``into``."""
        if self._local:
            raise ValueError("operations cannot call other operations")
        impl = self.objects[obj]
        opdef = impl.operations[op]
        if len(args) != len(opdef.params):
            raise ValueError(f"{obj}.{op} takes {len(opdef.params)} arguments")
        end = self.new_label("ret")
        self._emit(Enter(obj, op, tuple(args), opdef.params))
        self._local, self._ret = True, (obj, tuple(into), end)
        try:
            opdef.body(self, impl)
        finally:
            self._local, self._ret = False, None
        self.place(end)

    def ret(self, *values: Expr) -> None:
        if self._ret is None:
            raise ValueError("ret outside an operation body")
        obj, into, end = self._ret
        self.code.append(Exit(obj, tuple(values), into, end))

    def build(self, name: str = "") -> Program:
        code = list(self.code) + [Halt()]
        for i, instr in enumerate(code):
            target = getattr(instr, "target", None)
            if isinstance(target, str):
                code[i] = replace(instr, target=self._labels[target])
        return Program(tuple(code), name)
