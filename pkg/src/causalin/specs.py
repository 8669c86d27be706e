"""Sequential specifications: deterministic state machines over operations."""

from __future__ import annotations

from collections.abc import Hashable, Mapping
from dataclasses import dataclass
from typing import Protocol


class UnknownOperation(LookupError):
    pass


class SequentialSpec(Protocol):
    obj: str

    @property
    def initial(self) -> Hashable: ...

    def apply(self, state: Hashable, op: str, args: tuple[int, ...]) -> tuple[Hashable, tuple[int, ...]]:
        """Successor state and return values; raises :class:`UnknownOperation`."""
        ...


FREE, HELD = 0, 1


@dataclass(frozen=True)
class LockSpec:
    """``try_acquire`` succeeds (returns 1) iff the lock is free; ``release`` always frees it."""

    obj: str = "L"

    @property
    def initial(self) -> int:
        return FREE

    def apply(self, state, op, args):
        if op == "try_acquire":
            return HELD, (1 if state == FREE else 0,)
        if op == "release":
            return FREE, ()
        raise UnknownOperation(f"{self.obj}.{op}")


@dataclass(frozen=True)
class RegisterSpec:
    """An atomic multi-slot register."""

    obj: str = "S"
    init: tuple[int, ...] = (0, 0)

    @property
    def initial(self) -> tuple[int, ...]:
        return self.init

    def apply(self, state, op, args):
        if op == "write":
            if len(args) != len(self.init):
                raise UnknownOperation(f"{self.obj}.write with {len(args)} values")
            return tuple(args), ()
        if op == "read":
            return state, tuple(state)
        raise UnknownOperation(f"{self.obj}.{op}")


class SpecProduct:
    """Independent objects side by side; state is one component per object."""

    def __init__(self, specs: Mapping[str, SequentialSpec] | list[SequentialSpec]):
        if not isinstance(specs, Mapping):
            specs = {s.obj: s for s in specs}
        self.specs = dict(specs)
        self.objects = tuple(sorted(self.specs))
        self._slot = {o: i for i, o in enumerate(self.objects)}

    @property
    def initial(self) -> tuple:
        return tuple(self.specs[o].initial for o in self.objects)

    def apply(self, state: tuple, obj: str, op: str, args: tuple[int, ...]):
        if obj not in self._slot:
            raise UnknownOperation(f"no specification for object {obj!r}")
        k = self._slot[obj]
        sub, rets = self.specs[obj].apply(state[k], op, args)
        return state[:k] + (sub,) + state[k + 1:], rets

    def __contains__(self, obj: str) -> bool:
        return obj in self.specs


def as_product(specs) -> SpecProduct:
    if isinstance(specs, SpecProduct):
        return specs
    if hasattr(specs, "apply") and hasattr(specs, "obj"):
        return SpecProduct([specs])
    return SpecProduct(specs)
