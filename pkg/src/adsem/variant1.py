"""Variant 1: the whole diagram is one method body of atomic actions.

The running instance is a single method execution: one frame, one
thread, and a program counter that walks the diagram.  A transition
holds the (only) control token exactly when the frame's pc equals the
pc assigned to the transition's destination, so the buffers are a pure
function of the control store.

Decision/merge nodes are crossed within the step of the node that feeds
them: the pc only ever rests on action nodes (and the final node), and
the branch is chosen by evaluating guards against the post-state store.
Resting the pc on a merge would put tokens on all of its incoming
transitions at once, which no step predicate could then clear.

Effects and guards use a small integer action language:
``attr := expr``, ``local x := expr``, and comparison guards over
attributes and locals (exact integer arithmetic with + - *).

The shape restriction this variant needs: every action and final node
has at most one incoming transition (merges belong on decision/merge
nodes) and non-decision nodes have at most one outgoing transition.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .diagram import ActivityDiagram, Node, NodeKind, PinKind, PinType, Transition, incoming, outgoing
from .semantics import ALL_TOKENS, CONTROL_ONLY, CONTROL_TOKEN, Token, TokenSet, VariationBinding
from .sysmodel import Frame, SystemState, Trace, Universe, Value, advance_pc, top_frame


class ActionLanguageError(Exception):
    pass


class VariantError(Exception):
    pass


# ---------------------------------------------------------------------------
# Action language
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class NameRef:
    name: str


@dataclass(frozen=True)
class Arith:
    op: str  # + - *
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Compare:
    op: str  # < <= = != >= >
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class BoolLit:
    value: bool


Expr = IntLit | NameRef | Arith
GuardExpr = Compare | BoolLit


@dataclass(frozen=True)
class SetAttr:
    name: str
    expr: Expr


@dataclass(frozen=True)
class SetLocal:
    name: str
    expr: Expr


@dataclass(frozen=True)
class Skip:
    pass


Stmt = SetAttr | SetLocal | Skip

_AL_TOKEN = re.compile(r"\s*(?:(?P<int>\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
                       r"|(?P<op>:=|<=|>=|!=|==|[-+*<>=()]))")


def _al_lex(text: str) -> list[str]:
    toks: list[str] = []
    pos = 0
    while pos < len(text):
        m = _AL_TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip():
                raise ActionLanguageError(f"bad character {text[pos:].strip()[0]!r} in {text!r}")
            break
        toks.append(m.group("int") or m.group("name") or m.group("op"))
        pos = m.end()
    return toks


class _AL:
    def __init__(self, text: str):
        self.text = text
        self.toks = _al_lex(text)
        self.i = 0

    def peek(self) -> str | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, expected: str | None = None) -> str:
        tok = self.peek()
        if tok is None or (expected is not None and tok != expected):
            raise ActionLanguageError(f"expected {expected or 'more input'} in {self.text!r}")
        self.i += 1
        return tok

    def atom(self) -> Expr:
        tok = self.take()
        if tok.isdigit():
            return IntLit(int(tok))
        if tok == "(":
            e = self.sum()
            self.take(")")
            return e
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", tok):
            return NameRef(tok)
        raise ActionLanguageError(f"unexpected {tok!r} in {self.text!r}")

    def term(self) -> Expr:
        e = self.atom()
        while self.peek() == "*":
            self.take()
            e = Arith("*", e, self.atom())
        return e

    def sum(self) -> Expr:
        e = self.term()
        while self.peek() in ("+", "-"):
            e = Arith(self.take(), e, self.term())
        return e

    def done(self) -> None:
        if self.peek() is not None:
            raise ActionLanguageError(f"trailing input {self.peek()!r} in {self.text!r}")


def parse_statement(text: str) -> Stmt:
    """``attr := expr`` or ``local name := expr``; empty text is a skip."""
    if not text.strip():
        return Skip()
    p = _AL(text)
    first = p.take()
    is_local = first == "local" and p.peek() != ":="
    name = p.take() if is_local else first
    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
        raise ActionLanguageError(f"bad assignment target in {text!r}")
    p.take(":=")
    expr = p.sum()
    p.done()
    return SetLocal(name, expr) if is_local else SetAttr(name, expr)


def parse_guard(text: str) -> GuardExpr:
    """A comparison, or the literals ``true`` / ``false``."""
    stripped = text.strip()
    if stripped == "true":
        return BoolLit(True)
    if stripped == "false":
        return BoolLit(False)
    p = _AL(text)
    left = p.sum()
    op = p.take()
    if op == "==":
        op = "="
    if op not in ("<", "<=", "=", "!=", ">=", ">"):
        raise ActionLanguageError(f"guard needs a comparison, got {op!r} in {text!r}")
    right = p.sum()
    p.done()
    return Compare(op, left, right)


def eval_expr(expr: Expr, attrs: dict[str, Value], locals_: dict[str, Value]) -> int:
    if isinstance(expr, IntLit):
        return expr.value
    if isinstance(expr, NameRef):
        if expr.name in locals_:
            return int(locals_[expr.name])
        if expr.name in attrs:
            return int(attrs[expr.name])
        raise ActionLanguageError(f"unknown attribute or local {expr.name!r}")
    if isinstance(expr, Arith):
        left = eval_expr(expr.left, attrs, locals_)
        right = eval_expr(expr.right, attrs, locals_)
        return left + right if expr.op == "+" else left - right if expr.op == "-" else left * right
    raise ActionLanguageError(f"cannot evaluate {expr!r}")


_CMP = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


def eval_guard_expr(g: GuardExpr, attrs: dict[str, Value], locals_: dict[str, Value]) -> bool:
    if isinstance(g, BoolLit):
        return g.value
    return _CMP[g.op](eval_expr(g.left, attrs, locals_), eval_expr(g.right, attrs, locals_))


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MethodExecutionInstance:
    """One method execution: the diagram is the method body."""
    ad: ActivityDiagram
    caller: str
    meth: str
    params: tuple[str, ...]
    callee: str
    pc_map: dict[str, str]
    thread: str

    def pc_of_node(self, name: str) -> str:
        return self.pc_map[name]

    def node_at(self, pc: str) -> Node | None:
        for name, value in self.pc_map.items():
            if value == pc:
                return self.ad.node(name)
        return None

    def to_json(self) -> dict:
        return {"caller": self.caller, "meth": self.meth, "params": list(self.params),
                "callee": self.callee, "pc_map": dict(self.pc_map), "thread": self.thread}

    @staticmethod
    def from_json(ad: ActivityDiagram, d: dict) -> "MethodExecutionInstance":
        return MethodExecutionInstance(
            ad=ad, caller=d["caller"], meth=d["meth"], params=tuple(d.get("params", ())),
            callee=d["callee"], pc_map=dict(d["pc_map"]), thread=d["thread"])


def method_instance(ad: ActivityDiagram, caller: str = "obj:caller",
                    callee: str = "obj:callee", thread: str = "th0",
                    params: tuple[str, ...] = ()) -> MethodExecutionInstance:
    """Standard instance: one pc per node, named after it."""
    pc_map = {n.name: f"pc:{n.name}" for n in ad.nodes}
    return MethodExecutionInstance(ad=ad, caller=caller, meth=f"m:{ad.name}",
                                   params=params, callee=callee, pc_map=pc_map,
                                   thread=thread)


def instance_universe(inst: MethodExecutionInstance) -> Universe:
    owner_class = "MethodOwner"
    caller_class = "CallerSite"
    return Universe(
        oids=frozenset({inst.callee, inst.caller}),
        classes=frozenset({owner_class, caller_class}),
        vars=frozenset(inst.params),
        meths=frozenset({inst.meth}),
        threads=frozenset({inst.thread}),
        pcs=frozenset(inst.pc_map.values()),
        class_of={inst.callee: owner_class, inst.caller: caller_class},
        defined_in={inst.meth: owner_class},
        pc_of={inst.meth: frozenset(inst.pc_map.values())},
    )


# ---------------------------------------------------------------------------
# Statement semantics (a checker over state pairs)
# ---------------------------------------------------------------------------

def _frames_isolated(s0: SystemState, s1: SystemState, oid: str, thread: str,
                     allow_locals: bool) -> bool:
    """The step touched nothing but the top frame of (oid, thread): same
    stack shape, same frame identity fields, pc changed, and locals only
    when allowed."""
    st0, st1 = s0.stack(oid, thread), s1.stack(oid, thread)
    if not st0 or not st1 or len(st0) != len(st1) or st0[1:] != st1[1:]:
        return False
    f0, f1 = st0[0], st1[0]
    if (f0.callee, f0.mname, f0.caller) != (f1.callee, f1.mname, f1.caller):
        return False
    if f0.pc == f1.pc:
        return False
    if not allow_locals and f0.vars != f1.vars:
        return False
    for o in set(s0.control_store) | set(s1.control_store):
        for th in set(s0.control_store.get(o, {})) | set(s1.control_store.get(o, {})):
            if (o, th) != (oid, thread) and s0.stack(o, th) != s1.stack(o, th):
                return False
    return s0.event_store == s1.event_store


def _stores_equal_except(s0: SystemState, s1: SystemState, oid: str,
                         changed: dict[str, Value]) -> bool:
    """Data stores agree everywhere except `oid`'s attrs in `changed`."""
    for o in set(s0.data_store) | set(s1.data_store):
        before, after = s0.attrs(o), s1.attrs(o)
        if o != oid:
            if before != after:
                return False
            continue
        expected = dict(before)
        expected.update(changed)
        if after != expected:
            return False
    return True


def statement_holds(stmt: Stmt, oid: str, thread: str, s0: SystemState, s1: SystemState,
                    pc_order: list[str] | None = None) -> bool:
    """Does the state pair mirror executing `stmt` on (oid, thread)?

    The pc must move (to the successor in `pc_order` when one is given;
    the diagram dictates the jump otherwise), the rest of the frame and
    every other store location must be untouched, and the data change
    must be exactly the statement's effect evaluated in the pre-state.
    """
    f0 = top_frame(s0, oid, thread)
    if f0 is None:
        raise VariantError(f"no frame for ({oid!r}, {thread!r})")
    attrs0, locals0 = s0.attrs(oid), f0.locals

    if isinstance(stmt, SetAttr):
        value = eval_expr(stmt.expr, attrs0, locals0)
        if not _stores_equal_except(s0, s1, oid, {stmt.name: value}):
            return False
        if not _frames_isolated(s0, s1, oid, thread, allow_locals=False):
            return False
    elif isinstance(stmt, SetLocal):
        value = eval_expr(stmt.expr, attrs0, locals0)
        if not _stores_equal_except(s0, s1, oid, {}):
            return False
        if not _frames_isolated(s0, s1, oid, thread, allow_locals=True):
            return False
        expected = dict(locals0)
        expected[stmt.name] = value
        if top_frame(s1, oid, thread).locals != expected:
            return False
    elif isinstance(stmt, Skip):
        if not _stores_equal_except(s0, s1, oid, {}):
            return False
        if not _frames_isolated(s0, s1, oid, thread, allow_locals=False):
            return False
    else:
        raise ActionLanguageError(f"unknown statement {stmt!r}")

    if pc_order is not None:
        return s1.stack(oid, thread) == advance_pc(s0.stack(oid, thread), pc_order)
    return True


def guard_effect_holds(guard: GuardExpr, oid: str, thread: str,
                       s0: SystemState, s1: SystemState) -> bool:
    """A guard's only effect is the pc jump: it must evaluate true and the
    step must otherwise look like a skip."""
    f1 = top_frame(s1, oid, thread)
    if f1 is None:
        return False
    if not eval_guard_expr(guard, s1.attrs(oid), f1.locals):
        return False
    return statement_holds(Skip(), oid, thread, s0, s1)


# ---------------------------------------------------------------------------
# Buffers, tokens, flow
# ---------------------------------------------------------------------------

def pc_buffer_state(t: Transition, inst: MethodExecutionInstance,
                    s: SystemState) -> tuple[Token, ...]:
    """The control token sits on t exactly when the frame's pc names t's
    destination; with no frame every buffer is empty."""
    frame = top_frame(s, inst.callee, inst.thread)
    if frame is None:
        return ()
    return (CONTROL_TOKEN,) if frame.pc == inst.pc_map.get(t.dst) else ()


def token_domain_v1(ptype: PinType) -> TokenSet:
    if ptype.kind is PinKind.CONTROL:
        return CONTROL_ONLY
    if ptype.kind is PinKind.TOP:
        return ALL_TOKENS
    raise VariantError(f"data pin type {ptype} has no tokens in the atomic-action variant")


def _single_out(ad: ActivityDiagram, n: Node) -> Transition:
    outs = outgoing(ad, n)
    if len(outs) != 1:
        raise VariantError(f"{n.name!r} has {len(outs)} outgoing transitions; "
                           f"sequential flow needs exactly one")
    return outs[0]


def flow_walk(ad: ActivityDiagram, start: Node, attrs: dict[str, Value],
              locals_: dict[str, Value]) -> tuple[Node, list[Transition]]:
    """Follow control from `start` through any decision/merge nodes until
    it lands on an action or final node.  Guards are evaluated in declared
    output-pin order against the given store; the first true guard wins.
    """
    path: list[Transition] = []
    node = start
    for _ in range(len(ad.nodes) + 1):
        if node.kind is NodeKind.DECISIONMERGE:
            chosen = None
            for t in outgoing(ad, node):
                if eval_guard_expr(parse_guard(ad.guard(t.src, t.out_pin)), attrs, locals_):
                    chosen = t
                    break
            if chosen is None:
                raise VariantError(f"stuck-decision: no guard of {node.name!r} holds")
            t = chosen
        else:
            t = _single_out(ad, node)
        path.append(t)
        node = ad.node(t.dst)
        if node.kind in (NodeKind.ACTION, NodeKind.FINAL):
            return node, path
        if node.kind in (NodeKind.INITIAL, NodeKind.FORKJOIN):
            raise VariantError(f"flow reached {node.kind.value} node {node.name!r}")
    raise VariantError("decision cycle: control never reaches an action or final node")


# ---------------------------------------------------------------------------
# Running a method
# ---------------------------------------------------------------------------

def _entry(ad: ActivityDiagram) -> Transition:
    initials = [n for n in ad.nodes if n.kind is NodeKind.INITIAL]
    if len(initials) != 1:
        raise VariantError(f"one initial node required, found {len(initials)}")
    return _single_out(ad, initials[0])


def _check_shape(ad: ActivityDiagram) -> None:
    for n in ad.nodes:
        if n.kind in (NodeKind.ACTION, NodeKind.FINAL) and len(incoming(ad, n)) > 1:
            raise VariantError(f"{n.name!r} has several incoming transitions; "
                               f"merge them on a decision/merge node")


def run_method(ad: ActivityDiagram, inst: MethodExecutionInstance,
               store: dict[str, Value], args: dict[str, Value] | None = None,
               max_steps: int = 10_000) -> Trace:
    """Deterministic execution of the diagram as one method call.

    The trace starts in the initial configuration (frame pushed, pc on
    the entry node) and ends in the final configuration (pc on the final
    node); the frame pop that returns from the method happens after the
    conformance-relevant part and is not recorded.  Cut at `max_steps`
    with the truncation flag.
    """
    _check_shape(ad)
    entry = _entry(ad)
    if len(incoming(ad, ad.node(entry.dst))) > 1:
        raise VariantError(f"entry node {entry.dst!r} has several incoming transitions; "
                           f"no state could count as initial")
    locals_ = {p: (args or {}).get(p, 0) for p in inst.params}
    frame = Frame.make(inst.callee, inst.meth, locals_, inst.pc_map[entry.dst], inst.caller)
    state = SystemState(
        data_store={inst.callee: dict(store)},
        control_store={inst.callee: {inst.thread: (frame,)}},
    )
    states = [state]
    for _ in range(max_steps):
        frame = top_frame(state, inst.callee, inst.thread)
        node = inst.node_at(frame.pc)
        if node is None:
            raise VariantError(f"frame pc {frame.pc!r} names no node")
        if node.kind is NodeKind.FINAL:
            return Trace(tuple(states), truncated=False)

        attrs = state.attrs(inst.callee)
        locals_ = frame.locals
        if node.kind is NodeKind.ACTION:
            stmt = parse_statement(node.effect)
            if isinstance(stmt, SetAttr):
                attrs[stmt.name] = eval_expr(stmt.expr, state.attrs(inst.callee), frame.locals)
            elif isinstance(stmt, SetLocal):
                locals_ = dict(locals_)
                locals_[stmt.name] = eval_expr(stmt.expr, state.attrs(inst.callee), frame.locals)
        elif node.kind is not NodeKind.DECISIONMERGE:
            raise VariantError(f"pc rests on {node.kind.value} node {node.name!r}")

        landing, _ = flow_walk(ad, node, attrs, locals_)
        new_frame = frame.with_locals(locals_).with_pc(inst.pc_map[landing.name])
        state = SystemState(
            data_store={**{o: s for o, s in state.data_store.items() if o != inst.callee},
                        inst.callee: attrs},
            control_store={inst.callee: {inst.thread: (new_frame,)}},
            event_store=state.event_store,
        )
        states.append(state)
    return Trace(tuple(states), truncated=True)


def terminal_store(inst: MethodExecutionInstance, trace: Trace) -> dict[str, Value]:
    return trace[len(trace) - 1].attrs(inst.callee)


# ---------------------------------------------------------------------------
# The binding
# ---------------------------------------------------------------------------

def _movement(inst: MethodExecutionInstance, s0: SystemState,
              s1: SystemState) -> tuple[Node, Node, list[Transition]] | None:
    """The fired node, landing node, and traversed path for a pc change;
    None for no movement or an unexplainable jump."""
    f0 = top_frame(s0, inst.callee, inst.thread)
    f1 = top_frame(s1, inst.callee, inst.thread)
    if f0 is None or f1 is None or f0.pc == f1.pc:
        return None
    source = inst.node_at(f0.pc)
    target = inst.node_at(f1.pc)
    if source is None or target is None:
        return None
    try:
        landing, path = flow_walk(inst.ad, source, s1.attrs(inst.callee), f1.locals)
    except VariantError:
        return None
    if landing.name != target.name:
        return None
    return source, landing, path


def atomic_binding(inst: MethodExecutionInstance) -> VariationBinding:
    """All executions are instantaneous: nothing ever reports executing,
    guards always evaluate true (branching lives in the guard's effect),
    and consumption/production is derived from the pc movement."""
    ad = inst.ad

    def moved(t: Transition, s0: SystemState, s1: SystemState,
              produced_side: bool) -> tuple[Token, ...]:
        before = pc_buffer_state(t, inst, s0)
        after = pc_buffer_state(t, inst, s1)
        if produced_side and not before and after:
            return (CONTROL_TOKEN,)
        if not produced_side and before and not after:
            return (CONTROL_TOKEN,)
        move = _movement(inst, s0, s1)
        if move is not None:
            _, _, path = move
            pass_through = {p.key for p in path
                            if ad.node(p.dst).kind is NodeKind.DECISIONMERGE}
            if t.key in pass_through:
                return (CONTROL_TOKEN,)
        return ()

    return VariationBinding(
        diagram_of=lambda _inst: ad,
        executing=lambda n, _inst, s: False,
        elems=token_domain_v1,
        buf_state=lambda t, _inst, s: pc_buffer_state(t, inst, s),
        cons=lambda t, _inst, s0, s1: moved(t, s0, s1, produced_side=False),
        prod=lambda t, _inst, s0, s1: moved(t, s0, s1, produced_side=True),
        eval_guard=lambda g, _inst, s: True,
    )


# ---------------------------------------------------------------------------
# The effect constraint
# ---------------------------------------------------------------------------

def check_effect_constraint(ad: ActivityDiagram, inst: MethodExecutionInstance,
                            trace: Trace) -> bool:
    """Every pc movement must mirror the fired node's effect: the action's
    statement semantics on the stores, and a true guard (with no store
    effect of its own) for every decision crossed on the way."""
    for j in range(len(trace) - 1):
        s0, s1 = trace[j], trace[j + 1]
        f0 = top_frame(s0, inst.callee, inst.thread)
        f1 = top_frame(s1, inst.callee, inst.thread)
        if f0 is None or f1 is None:
            continue
        if f0.pc == f1.pc:
            continue
        move = _movement(inst, s0, s1)
        if move is None:
            return False
        source, _, path = move

        if source.kind is NodeKind.ACTION:
            if not statement_holds(parse_statement(source.effect), inst.callee,
                                   inst.thread, s0, s1):
                return False
        elif source.kind is NodeKind.DECISIONMERGE:
            if not statement_holds(Skip(), inst.callee, inst.thread, s0, s1):
                return False
        else:
            return False

        for t in path:
            if ad.node(t.src).kind is NodeKind.DECISIONMERGE:
                guard = parse_guard(ad.guard(t.src, t.out_pin))
                if not eval_guard_expr(guard, s1.attrs(inst.callee), f1.locals):
                    return False
    return True


def trace_firings(ad: ActivityDiagram, inst: MethodExecutionInstance,
                  trace: Trace) -> list[str]:
    """Node names in firing order, decisions included in traversal order."""
    fired: list[str] = []
    for j in range(len(trace) - 1):
        move = _movement(inst, trace[j], trace[j + 1])
        if move is None:
            continue
        source, _, path = move
        fired.append(source.name)
        fired.extend(t.src for t in path[1:] if ad.node(t.src).kind is NodeKind.DECISIONMERGE)
    return fired
