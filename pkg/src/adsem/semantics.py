"""Variation points and the variant-independent step/conformance predicates.

A binding supplies the open functions of the semantics: how an instance
maps to its diagram, when a node counts as executing, which tokens a pin
type admits, what sits in a transition buffer, what a step consumed and
produced, and how guards evaluate.  Everything else here is fixed: what
an initial/final configuration is, which per-node steps are allowed, and
when a whole trace conforms to a diagram instance.

All predicates are pure; they only read the binding.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

from .diagram import ActivityDiagram, Node, NodeKind, PinKind, PinType, Transition, incoming, outgoing
from .sysmodel import SystemState, Trace


# ---------------------------------------------------------------------------
# Tokens
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    """A unit of flow: the control token (type_name None) or a typed
    data token with an opaque payload."""
    type_name: str | None = None
    payload: object = None

    @property
    def is_control(self) -> bool:
        return self.type_name is None

    def to_json(self) -> object:
        if self.is_control:
            return "control"
        payload = self.payload
        if isinstance(payload, tuple):
            payload = dict(payload)
        return {"type": self.type_name, "payload": payload}

    @staticmethod
    def from_json(d: object) -> "Token":
        if d == "control":
            return CONTROL_TOKEN
        assert isinstance(d, dict)
        payload = d.get("payload")
        if isinstance(payload, dict):
            payload = tuple(sorted(payload.items()))
        return Token(d["type"], payload)


CONTROL_TOKEN = Token()


def call_token(type_name: str, args: dict[str, object]) -> Token:
    """A data token whose payload is an argument record (pin -> value)."""
    return Token(type_name, tuple(sorted(args.items())))


class TokenSet:
    """The (possibly infinite) set of tokens a pin type admits."""

    def __init__(self, kind: PinKind, data_name: str | None = None):
        self.kind = kind
        self.data_name = data_name

    def __contains__(self, token: object) -> bool:
        if not isinstance(token, Token):
            return False
        if self.kind is PinKind.TOP:
            return True
        if self.kind is PinKind.CONTROL:
            return token.is_control
        return token.type_name == self.data_name

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, TokenSet)
                and other.kind == self.kind and other.data_name == self.data_name)

    def __hash__(self) -> int:
        return hash((self.kind, self.data_name))

    def __repr__(self) -> str:
        return f"TokenSet({self.kind.value}{'' if self.data_name is None else ', ' + self.data_name})"


ALL_TOKENS = TokenSet(PinKind.TOP)
CONTROL_ONLY = TokenSet(PinKind.CONTROL)


def admissible_tokens(ptype: PinType) -> TokenSet:
    """Default pin-type interpretation: control pins admit only the
    control token, `any` admits everything, data types are nominal."""
    return TokenSet(ptype.kind, ptype.data_name)


# ---------------------------------------------------------------------------
# Bindings
# ---------------------------------------------------------------------------

Buffer = tuple[Token, ...]


@dataclass(frozen=True)
class VariationBinding:
    """The bundle of open functions a variant supplies."""
    diagram_of: Callable[[object], ActivityDiagram]
    executing: Callable[[Node, object, SystemState], bool]
    elems: Callable[[PinType], TokenSet]
    buf_state: Callable[[Transition, object, SystemState], Buffer]
    cons: Callable[[Transition, object, SystemState, SystemState], Buffer]
    prod: Callable[[Transition, object, SystemState, SystemState], Buffer]
    eval_guard: Callable[[str, object, SystemState], bool]


def buf_empty(t: Transition, inst: object, s: SystemState, b: VariationBinding) -> bool:
    return len(b.buf_state(t, inst, s)) == 0


def buf_nonempty(t: Transition, inst: object, s: SystemState, b: VariationBinding) -> bool:
    return len(b.buf_state(t, inst, s)) != 0


def buffer_types_ok(t: Transition, inst: object, s: SystemState, b: VariationBinding) -> bool:
    """Every buffered token lies in the token sets of both endpoint pins."""
    ad = b.diagram_of(inst)
    in_set = b.elems(ad.pin_type(t.dst, t.in_pin))
    out_set = b.elems(ad.pin_type(t.src, t.out_pin))
    return all(tok in in_set and tok in out_set for tok in b.buf_state(t, inst, s))


# ---------------------------------------------------------------------------
# Initial / final configurations
# ---------------------------------------------------------------------------

def is_initial_state(inst: object, s: SystemState, b: VariationBinding) -> bool:
    """Some initial node has tokens on all its outgoing transitions, and
    every other node has empty outgoing buffers and is not executing."""
    ad = b.diagram_of(inst)
    some_initial = any(
        n.kind is NodeKind.INITIAL
        and all(buf_nonempty(t, inst, s, b) for t in outgoing(ad, n))
        for n in ad.nodes
    )
    others_quiet = all(
        n.kind is NodeKind.INITIAL
        or (all(buf_empty(t, inst, s, b) for t in outgoing(ad, n))
            and not b.executing(n, inst, s))
        for n in ad.nodes
    )
    return some_initial and others_quiet


def is_final_state(inst: object, s: SystemState, b: VariationBinding) -> bool:
    """Some final node has a token on an incoming transition, and every
    other node has empty incoming buffers and is not executing."""
    ad = b.diagram_of(inst)
    some_final = any(
        n.kind is NodeKind.FINAL
        and any(buf_nonempty(t, inst, s, b) for t in incoming(ad, n))
        for n in ad.nodes
    )
    others_quiet = all(
        n.kind is NodeKind.FINAL
        or (all(buf_empty(t, inst, s, b) for t in incoming(ad, n))
            and not b.executing(n, inst, s))
        for n in ad.nodes
    )
    return some_final and others_quiet


# ---------------------------------------------------------------------------
# Step predicates
# ---------------------------------------------------------------------------

def _cons_counts(ad, n, inst, s0, s1, b):
    return [len(b.cons(t, inst, s0, s1)) for t in incoming(ad, n)]


def _prod_counts(ad, n, inst, s0, s1, b):
    return [len(b.prod(t, inst, s0, s1)) for t in outgoing(ad, n)]


def stutters(n: Node, inst: object, s0: SystemState, s1: SystemState,
             b: VariationBinding) -> bool:
    """The node's execution flag is unchanged and none of its adjacent
    transitions consumed or produced anything."""
    ad = b.diagram_of(inst)
    return (b.executing(n, inst, s0) == b.executing(n, inst, s1)
            and all(c == 0 for c in _cons_counts(ad, n, inst, s0, s1, b))
            and all(p == 0 for p in _prod_counts(ad, n, inst, s0, s1, b)))


def starts_action(n: Node, inst: object, s0: SystemState, s1: SystemState,
                  b: VariationBinding) -> bool:
    """Execution begins: flag flips on, one token consumed per incoming
    transition, nothing produced."""
    ad = b.diagram_of(inst)
    return (not b.executing(n, inst, s0) and b.executing(n, inst, s1)
            and all(c == 1 for c in _cons_counts(ad, n, inst, s0, s1, b))
            and all(p == 0 for p in _prod_counts(ad, n, inst, s0, s1, b)))


def finishes_action(n: Node, inst: object, s0: SystemState, s1: SystemState,
                    b: VariationBinding) -> bool:
    """Execution ends: flag flips off, one token produced per outgoing
    transition, nothing consumed."""
    ad = b.diagram_of(inst)
    return (b.executing(n, inst, s0) and not b.executing(n, inst, s1)
            and all(p == 1 for p in _prod_counts(ad, n, inst, s0, s1, b))
            and all(c == 0 for c in _cons_counts(ad, n, inst, s0, s1, b)))


def fires_instantly(n: Node, inst: object, s0: SystemState, s1: SystemState,
                    b: VariationBinding) -> bool:
    """The whole reaction in one step: one token consumed per incoming
    and one produced per outgoing transition."""
    ad = b.diagram_of(inst)
    return (all(c == 1 for c in _cons_counts(ad, n, inst, s0, s1, b))
            and all(p == 1 for p in _prod_counts(ad, n, inst, s0, s1, b)))


# A fork/join reacts instantaneously with exactly the same token-count
# formula as a one-step action; keep a distinct name for call sites.
fires_forkjoin = fires_instantly


def fires_decision(n: Node, inst: object, s0: SystemState, s1: SystemState,
                   b: VariationBinding) -> bool:
    """Exactly one incoming transition consumes one token and exactly one
    outgoing transition produces one token whose guard holds afterwards."""
    ad = b.diagram_of(inst)
    ins = incoming(ad, n)
    outs = outgoing(ad, n)
    one_in = any(
        len(b.cons(t, inst, s0, s1)) == 1
        and all(len(b.cons(t2, inst, s0, s1)) == 0 for t2 in ins if t2 != t)
        for t in ins
    )
    one_out = any(
        len(b.prod(t, inst, s0, s1)) == 1
        and b.eval_guard(ad.guard(t.src, t.out_pin), inst, s1)
        and all(len(b.prod(t2, inst, s0, s1)) == 0 for t2 in outs if t2 != t)
        for t in outs
    )
    return one_in and one_out


def allows_step(n: Node, inst: object, s0: SystemState, s1: SystemState,
                b: VariationBinding) -> bool:
    """Whether the state change is permitted for this node: a stutter, or
    the node-kind-specific reaction.  Initial and final nodes only ever
    stutter; anything else would create or destroy tokens unaccounted."""
    if stutters(n, inst, s0, s1, b):
        return True
    if n.kind is NodeKind.ACTION:
        return (starts_action(n, inst, s0, s1, b)
                or finishes_action(n, inst, s0, s1, b)
                or fires_instantly(n, inst, s0, s1, b))
    if n.kind is NodeKind.FORKJOIN:
        return fires_forkjoin(n, inst, s0, s1, b)
    if n.kind is NodeKind.DECISIONMERGE:
        return fires_decision(n, inst, s0, s1, b)
    return False


# ---------------------------------------------------------------------------
# Trace conformance
# ---------------------------------------------------------------------------

class VerdictKind(enum.Enum):
    SATISFIED = "satisfied"
    SATISFIED_SO_FAR = "satisfied-so-far"
    NO_INITIAL_FOUND = "no-initial-found"
    VIOLATED = "violated"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    index: int | None = None
    node: str | None = None
    predicate: str | None = None

    @property
    def ok(self) -> bool:
        return self.kind in (VerdictKind.SATISFIED, VerdictKind.SATISFIED_SO_FAR)

    def to_json(self) -> dict:
        return {"verdict": self.kind.value, "index": self.index,
                "node": self.node, "predicate": self.predicate}


_STEP_PREDICATE = {
    NodeKind.ACTION: "step:action",
    NodeKind.FORKJOIN: "step:forkjoin",
    NodeKind.DECISIONMERGE: "step:decisionmerge",
    NodeKind.INITIAL: "step:initial",
    NodeKind.FINAL: "step:final",
}


def conforms(trace: Trace, inst: object, b: VariationBinding) -> Verdict:
    """Check a trace against the diagram instance: find the first initial
    state, then require every later step to be allowed for every node and
    finality to persist."""
    ad = b.diagram_of(inst)
    start = None
    for i in range(len(trace)):
        if is_initial_state(inst, trace[i], b):
            start = i
            break
    if start is None:
        return Verdict(VerdictKind.NO_INITIAL_FOUND)

    for j in range(start, len(trace) - 1):
        s0, s1 = trace[j], trace[j + 1]
        for n in ad.nodes:
            if not allows_step(n, inst, s0, s1, b):
                return Verdict(VerdictKind.VIOLATED, j, n.name, _STEP_PREDICATE[n.kind])
        if is_final_state(inst, s0, b) and not is_final_state(inst, s1, b):
            return Verdict(VerdictKind.VIOLATED, j, _final_witness(ad, inst, s1, b),
                           "final-persistence")
    if trace.truncated:
        return Verdict(VerdictKind.SATISFIED_SO_FAR)
    return Verdict(VerdictKind.SATISFIED)


def _final_witness(ad: ActivityDiagram, inst: object, s: SystemState,
                   b: VariationBinding) -> str:
    """A node to blame when a state stopped being final."""
    for n in ad.nodes:
        if n.kind is NodeKind.FINAL:
            continue
        if b.executing(n, inst, s) or any(buf_nonempty(t, inst, s, b) for t in incoming(ad, n)):
            return n.name
    for n in ad.nodes:
        if n.kind is NodeKind.FINAL:
            return n.name
    return ad.nodes[0].name if ad.nodes else ""


# ---------------------------------------------------------------------------
# Buffer discipline
# ---------------------------------------------------------------------------

def buffer_law_holds(t: Transition, inst: object, s0: SystemState, s1: SystemState,
                     b: VariationBinding) -> bool:
    """FIFO law: the consumed tokens are a prefix of the old buffer and
    the new buffer is the remainder plus the produced tokens."""
    before = b.buf_state(t, inst, s0)
    after = b.buf_state(t, inst, s1)
    consumed = b.cons(t, inst, s0, s1)
    produced = b.prod(t, inst, s0, s1)
    if before[:len(consumed)] != consumed:
        return False
    rest = before[len(consumed):]
    return after == rest + produced


def fifo_delta(before: Buffer, after: Buffer) -> tuple[Buffer, Buffer]:
    """Infer (consumed, produced) from two buffer snapshots under the
    FIFO law, choosing the decomposition with minimal movement (the
    longest suffix of `before` that is a prefix of `after` stays put)."""
    for keep in range(min(len(before), len(after)), -1, -1):
        if keep == 0 or before[-keep:] == after[:keep]:
            return before[:len(before) - keep], after[keep:]
    return before, after
