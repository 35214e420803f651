"""Global system states and traces.

A state has three stores: a data store (per-object attribute values), a
control store (per-object, per-thread stacks of activation frames), and
an event store (per-object pending messages, carried but never consumed
here).  Behavior comes from a pluggable successor function; a trace is a
sequence of states adjacent under it.

States are values: update helpers return new states and never mutate.
Stacks are tuples with the top frame at index 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping

Value = int | bool | str


class SystemModelError(Exception):
    pass


@dataclass(frozen=True)
class Universe:
    """Finite, explicitly enumerated entity sets for one scenario.

    `vals` lists distinguished values a scenario wants named; the value
    space itself is int | bool | str and is not enumerated.
    """
    oids: frozenset[str] = frozenset()
    classes: frozenset[str] = frozenset()
    vars: frozenset[str] = frozenset()
    vals: frozenset = frozenset()
    meths: frozenset[str] = frozenset()
    threads: frozenset[str] = frozenset()
    pcs: frozenset[str] = frozenset()
    class_of: dict[str, str] = field(default_factory=dict)
    defined_in: dict[str, str] = field(default_factory=dict)
    pc_of: dict[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self):
        for oid in self.oids:
            if oid not in self.class_of:
                raise SystemModelError(f"no class for object {oid!r}")
        for m in self.meths:
            if m not in self.defined_in:
                raise SystemModelError(f"no defining class for method {m!r}")
            if not self.pc_of.get(m):
                raise SystemModelError(f"empty program counter set for method {m!r}")

    def require(self, *, oid: str | None = None, thread: str | None = None) -> None:
        if oid is not None and oid not in self.oids:
            raise SystemModelError(f"unknown object {oid!r}")
        if thread is not None and thread not in self.threads:
            raise SystemModelError(f"unknown thread {thread!r}")


@dataclass(frozen=True)
class Frame:
    callee: str
    mname: str
    vars: tuple[tuple[str, Value], ...]
    pc: str
    caller: str

    @staticmethod
    def make(callee: str, mname: str, vars: Mapping[str, Value], pc: str, caller: str) -> "Frame":
        return Frame(callee, mname, tuple(sorted(vars.items())), pc, caller)

    @property
    def locals(self) -> dict[str, Value]:
        return dict(self.vars)

    def with_locals(self, vars: Mapping[str, Value]) -> "Frame":
        return replace(self, vars=tuple(sorted(vars.items())))

    def with_pc(self, pc: str) -> "Frame":
        return replace(self, pc=pc)


Stack = tuple[Frame, ...]


@dataclass(frozen=True)
class SystemState:
    data_store: dict[str, dict[str, Value]] = field(default_factory=dict)
    control_store: dict[str, dict[str, Stack]] = field(default_factory=dict)
    event_store: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def attrs(self, oid: str) -> dict[str, Value]:
        return dict(self.data_store.get(oid, {}))

    def stack(self, oid: str, thread: str) -> Stack:
        return self.control_store.get(oid, {}).get(thread, ())

    def set_attr(self, oid: str, var: str, value: Value) -> "SystemState":
        ds = {o: dict(vs) for o, vs in self.data_store.items()}
        ds.setdefault(oid, {})[var] = value
        return replace(self, data_store=ds)

    def with_stack(self, oid: str, thread: str, stack: Stack) -> "SystemState":
        cs = {o: dict(ts) for o, ts in self.control_store.items()}
        cs.setdefault(oid, {})[thread] = stack
        return replace(self, control_store=cs)

    def push(self, oid: str, thread: str, frame: Frame) -> "SystemState":
        return self.with_stack(oid, thread, (frame,) + self.stack(oid, thread))

    def pop(self, oid: str, thread: str) -> "SystemState":
        stack = self.stack(oid, thread)
        if not stack:
            raise SystemModelError(f"pop on empty stack for ({oid!r}, {thread!r})")
        return self.with_stack(oid, thread, stack[1:])


def top_frame(state: SystemState, oid: str, thread: str,
              universe: Universe | None = None) -> Frame | None:
    """Top of the (oid, thread) stack, or None when the stack is empty."""
    if universe is not None:
        universe.require(oid=oid, thread=thread)
    stack = state.stack(oid, thread)
    return stack[0] if stack else None


def advance_pc(stack: Stack, pc_order: Iterable[str]) -> Stack:
    """Replace the top frame's pc by its successor in pc_order."""
    if not stack:
        raise SystemModelError("cannot advance pc on an empty stack")
    order = list(pc_order)
    top = stack[0]
    try:
        idx = order.index(top.pc)
    except ValueError:
        raise SystemModelError(f"pc {top.pc!r} not in the given order") from None
    if idx + 1 >= len(order):
        raise SystemModelError(f"pc {top.pc!r} is terminal in the given order")
    return (top.with_pc(order[idx + 1]),) + stack[1:]


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trace:
    """A finite run; truncated marks a prefix of a longer behavior."""
    states: tuple[SystemState, ...]
    truncated: bool = False

    def __post_init__(self):
        if not self.states:
            raise SystemModelError("a trace has at least one state")

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, i: int) -> SystemState:
        return self.states[i]


Successors = Callable[[SystemState], Iterable[SystemState]]


def generate_traces(successors: Successors, start: SystemState,
                    depth: int, fanout: int) -> list[Trace]:
    """All runs from `start` of at most `depth` steps.

    At each state at most `fanout` successors are explored, taken in
    canonical (serialization) order.  Runs that die out before `depth`
    are maximal; runs cut at `depth` with successors remaining are
    marked truncated.
    """
    if depth < 0:
        raise SystemModelError("depth must be >= 0")
    if fanout < 1:
        raise SystemModelError("fanout must be >= 1")
    out: list[Trace] = []

    def explore(prefix: tuple[SystemState, ...]) -> None:
        nxt = sorted(successors(prefix[-1]), key=canonical_key)[:fanout]
        if not nxt:
            out.append(Trace(prefix, truncated=False))
            return
        if len(prefix) > depth:
            out.append(Trace(prefix, truncated=True))
            return
        for s in nxt:
            explore(prefix + (s,))

    explore((start,))
    return out


# ---------------------------------------------------------------------------
# JSON snapshots
# ---------------------------------------------------------------------------

def frame_to_json(f: Frame) -> dict:
    return {"callee": f.callee, "m": f.mname, "vars": f.locals, "pc": f.pc, "caller": f.caller}


def frame_from_json(d: dict) -> Frame:
    return Frame.make(d["callee"], d["m"], d.get("vars", {}), d["pc"], d["caller"])


def state_to_json(s: SystemState) -> dict:
    return {
        "ds": {o: dict(vs) for o, vs in s.data_store.items()},
        "cs": {o: {th: [frame_to_json(f) for f in st] for th, st in ts.items()}
               for o, ts in s.control_store.items()},
        "es": {o: list(msgs) for o, msgs in s.event_store.items()},
    }


def state_from_json(d: dict) -> SystemState:
    return SystemState(
        data_store={o: dict(vs) for o, vs in d.get("ds", {}).items()},
        control_store={o: {th: tuple(frame_from_json(f) for f in st)
                           for th, st in ts.items()}
                       for o, ts in d.get("cs", {}).items()},
        event_store={o: tuple(msgs) for o, msgs in d.get("es", {}).items()},
    )


def canonical_key(s: SystemState) -> str:
    """Stable serialization used for ordering and deduplication."""
    return json.dumps(state_to_json(s), sort_keys=True, separators=(",", ":"))
