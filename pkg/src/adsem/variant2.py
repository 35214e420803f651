"""Variant 2: every action is a complete method on some object.

Roles are objects, tokens are method calls carrying argument records,
and a node is executing exactly when a matching frame sits on a stack of
its object.  Token buffers live in the data store as per-transition
mailbox objects, so the buffer state is a function of the system state.

An action gathers its inputs through a pin controller (one flag and one
stashed value per input pin); the method starts in the step in which the
last input arrives, consuming one token from every incoming transition
at once.  It then executes for a scenario-determined number of steps
(at least one full step between start and finish) and on finishing emits
call tokens on all outputs.  Fork/join and decision/merge react
instantaneously.  Decision outcomes are data: the feeding action records
its result as an attribute, and guard evaluation looks that result up.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace

from .diagram import ActivityDiagram, Node, NodeKind, PinKind, Transition, incoming, outgoing
from .semantics import (
    CONTROL_TOKEN,
    Token,
    VariationBinding,
    admissible_tokens,
    call_token,
    fifo_delta,
    is_final_state,
)
from .sysmodel import Frame, SystemState, Trace, Universe, Value

MAILBOX_PREFIX = "mbox:"
CHOICE_PREFIX = "choice:"
MAILBOX_VAR = "tokens"
RESULT_VAR = "result"

ROLE_CALLER = "role"
COMMAND_CALLER = "command"


class SimulationError(Exception):
    pass


# ---------------------------------------------------------------------------
# Pin controller (attribute-buffering strategy)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PinController:
    """Tracks which input pins have received a value; firing resets it."""
    pins: tuple[str, ...]
    arrived: tuple[tuple[str, bool], ...] = ()
    stash: tuple[tuple[str, Value], ...] = ()

    @staticmethod
    def for_pins(pins: tuple[str, ...]) -> "PinController":
        return PinController(pins=pins, arrived=tuple((p, False) for p in pins))

    def is_set(self, pin: str) -> bool:
        return dict(self.arrived).get(pin, False)

    def stashed(self) -> dict[str, Value]:
        return dict(self.stash)


def deliver(controller: PinController, pin: str, value: Value) -> tuple[PinController, bool]:
    """Record one arriving value; fire when every pin has one.

    Firing clears the controller.  Delivering twice to a pin before the
    controller fires is an error.
    """
    if pin not in controller.pins:
        raise SimulationError(f"unknown input pin {pin!r}")
    if controller.is_set(pin):
        raise SimulationError(f"double delivery on pin {pin!r}")
    arrived = dict(controller.arrived)
    arrived[pin] = True
    stash = dict(controller.stash)
    stash[pin] = value
    if all(arrived.values()):
        return PinController.for_pins(controller.pins), True
    return replace(controller,
                   arrived=tuple((p, arrived[p]) for p in controller.pins),
                   stash=tuple(sorted(stash.items()))), False


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActionMethodsInstance:
    """Diagram instance where each action is a method on a role object."""
    ad: ActivityDiagram
    meth: dict[str, str]          # action node -> method name
    oid: dict[str, str]           # action node -> object holding the method
    rrep: dict[str, str]          # role -> object representing it
    threads: frozenset[str]
    thread_of: dict[str, str]     # action node -> thread that runs it
    caller_mode: str = ROLE_CALLER
    sub_variant: bool = True

    def caller_of(self, node: str) -> str:
        if self.caller_mode == COMMAND_CALLER:
            return f"cmd:{node}"
        return self.rrep[self.ad.role_of[node]]

    def method_pc(self, node: str) -> str:
        return f"{self.meth[node]}@body"

    def to_json(self) -> dict:
        return {"meth": dict(self.meth), "oid": dict(self.oid), "rrep": dict(self.rrep),
                "threads": sorted(self.threads), "thread_of": dict(self.thread_of),
                "caller_mode": self.caller_mode, "sub_variant": self.sub_variant}

    @staticmethod
    def from_json(ad: ActivityDiagram, d: dict) -> "ActionMethodsInstance":
        return ActionMethodsInstance(
            ad=ad, meth=dict(d["meth"]), oid=dict(d["oid"]), rrep=dict(d["rrep"]),
            threads=frozenset(d["threads"]), thread_of=dict(d["thread_of"]),
            caller_mode=d.get("caller_mode", ROLE_CALLER),
            sub_variant=bool(d.get("sub_variant", True)))


@dataclass(frozen=True)
class Scenario:
    """Everything that resolves the simulator's nondeterminism."""
    seed: int = 0
    decisions: dict[str, str] = field(default_factory=dict)   # decision node -> guard text
    durations: dict[str, int] = field(default_factory=dict)   # action node -> executing steps
    sub_variant: bool = True
    caller_mode: str = ROLE_CALLER

    def to_json(self) -> dict:
        return {"seed": self.seed, "decisions": dict(self.decisions),
                "durations": dict(self.durations), "sub_variant": self.sub_variant,
                "caller_mode": self.caller_mode}

    @staticmethod
    def from_json(d: dict) -> "Scenario":
        return Scenario(seed=int(d.get("seed", 0)), decisions=dict(d.get("decisions", {})),
                        durations={k: int(v) for k, v in d.get("durations", {}).items()},
                        sub_variant=bool(d.get("sub_variant", True)),
                        caller_mode=d.get("caller_mode", ROLE_CALLER))


def standard_instance(ad: ActivityDiagram, scenario: Scenario | None = None) -> ActionMethodsInstance:
    """Deterministic instance: one object per role, the method of an
    action living on its role's object, one thread per action."""
    scenario = scenario or Scenario()
    rrep = {role: f"obj:{role}" for role in ad.roles}
    actions = [n for n in ad.nodes if n.kind is NodeKind.ACTION]
    return ActionMethodsInstance(
        ad=ad,
        meth={n.name: f"m:{n.name}" for n in actions},
        oid={n.name: rrep[ad.role_of[n.name]] for n in actions},
        rrep=rrep,
        threads=frozenset(f"th:{n.name}" for n in actions),
        thread_of={n.name: f"th:{n.name}" for n in actions},
        caller_mode=scenario.caller_mode,
        sub_variant=scenario.sub_variant,
    )


def instance_universe(inst: ActionMethodsInstance) -> Universe:
    ad = inst.ad
    role_class = {role: f"C_{role}" for role in ad.roles}
    oids = set(inst.rrep.values())
    class_of = {inst.rrep[role]: role_class[role] for role in ad.roles}
    for t in ad.transitions:
        oids.add(MAILBOX_PREFIX + t.key)
        class_of[MAILBOX_PREFIX + t.key] = "Bookkeeping"
    for n in ad.nodes:
        if n.kind is NodeKind.DECISIONMERGE:
            oids.add(CHOICE_PREFIX + n.name)
            class_of[CHOICE_PREFIX + n.name] = "Bookkeeping"
        if n.kind is NodeKind.ACTION and inst.caller_mode == COMMAND_CALLER:
            oids.add(f"cmd:{n.name}")
            class_of[f"cmd:{n.name}"] = "CommandHolder"
    meths = dict(inst.meth)
    vars_ = {MAILBOX_VAR, RESULT_VAR}
    for n in ad.nodes:
        vars_.update(n.in_pins)
    return Universe(
        oids=frozenset(oids),
        classes=frozenset(set(role_class.values()) | {"Bookkeeping", "CommandHolder"}),
        vars=frozenset(vars_),
        meths=frozenset(meths.values()),
        threads=inst.threads,
        pcs=frozenset(inst.method_pc(n) for n in meths),
        class_of=class_of,
        defined_in={meths[n]: role_class[ad.role_of[n]] for n in meths},
        pc_of={meths[n]: frozenset({inst.method_pc(n)}) for n in meths},
    )


# ---------------------------------------------------------------------------
# Mailboxes and the binding
# ---------------------------------------------------------------------------

def mailbox_tokens(s: SystemState, t: Transition) -> tuple[Token, ...]:
    raw = s.data_store.get(MAILBOX_PREFIX + t.key, {}).get(MAILBOX_VAR, "[]")
    return tuple(Token.from_json(d) for d in json.loads(str(raw)))


def set_mailbox(s: SystemState, t: Transition, tokens: tuple[Token, ...]) -> SystemState:
    raw = json.dumps([tok.to_json() for tok in tokens], sort_keys=True)
    return s.set_attr(MAILBOX_PREFIX + t.key, MAILBOX_VAR, raw)


def method_frame_present(n: Node, inst: ActionMethodsInstance, s: SystemState) -> bool:
    """A frame for the node's method, on the node's object, anywhere in
    the stack of any of the instance's threads."""
    if n.name not in inst.meth:
        return False
    oid, mname = inst.oid[n.name], inst.meth[n.name]
    return any(
        any(f.callee == oid and f.mname == mname for f in s.stack(oid, th))
        for th in inst.threads
    )


def evaluate_guard(guard: str, inst: ActionMethodsInstance, s: SystemState) -> bool:
    """"true" holds; any other guard text holds when some object recorded
    it as its result."""
    if guard == "true":
        return True
    return any(attrs.get(RESULT_VAR) == guard for attrs in s.data_store.values())


def methods_binding(inst: ActionMethodsInstance) -> VariationBinding:
    def cons(t, _inst, s0, s1):
        consumed, _ = fifo_delta(mailbox_tokens(s0, t), mailbox_tokens(s1, t))
        return consumed

    def prod(t, _inst, s0, s1):
        _, produced = fifo_delta(mailbox_tokens(s0, t), mailbox_tokens(s1, t))
        return produced

    return VariationBinding(
        diagram_of=lambda _inst: inst.ad,
        executing=lambda n, _inst, s: method_frame_present(n, inst, s),
        elems=admissible_tokens,
        buf_state=lambda t, _inst, s: mailbox_tokens(s, t),
        cons=cons,
        prod=prod,
        eval_guard=lambda g, _inst, s: evaluate_guard(g, inst, s),
    )


def check_role_constraint(inst: ActionMethodsInstance, trace: Trace,
                          universe: Universe) -> bool:
    """Sub-variant equation on every pushed action frame: the method is
    defined in the class of the role's object, which is the class of the
    object the frame runs on."""
    node_of_meth = {m: n for n, m in inst.meth.items()}
    for i in range(len(trace)):
        s = trace[i]
        for oid, per_thread in s.control_store.items():
            for stack in per_thread.values():
                for f in stack:
                    n = node_of_meth.get(f.mname)
                    if n is None:
                        continue
                    role_oid = inst.rrep[inst.ad.role_of[n]]
                    if f.callee != inst.oid[n] or f.callee != oid:
                        return False
                    if universe.defined_in[f.mname] != universe.class_of[role_oid]:
                        return False
                    if universe.class_of[inst.oid[n]] != universe.class_of[role_oid]:
                        return False
    return True


# ---------------------------------------------------------------------------
# The simulator
# ---------------------------------------------------------------------------

def _initial_state(ad: ActivityDiagram, inst: ActionMethodsInstance) -> SystemState:
    s = SystemState(data_store={oid: {} for oid in inst.rrep.values()})
    for t in ad.transitions:
        s = set_mailbox(s, t, ())
    counter = 0
    for n in ad.nodes:
        if n.kind is not NodeKind.INITIAL:
            continue
        for t in outgoing(ad, n):
            ptype = ad.pin_type(t.src, t.out_pin)
            if ptype.kind is PinKind.DATA:
                tok = call_token(ptype.data_name, {t.in_pin: f"{ptype.data_name}#{counter}"})
                counter += 1
            else:
                tok = CONTROL_TOKEN
            s = set_mailbox(s, t, (tok,))
    return s


def _payload_value(tok: Token, pin: str) -> Value:
    if tok.is_control:
        return True
    args = dict(tok.payload) if isinstance(tok.payload, tuple) else {}
    if pin in args:
        return args[pin]
    return next(iter(args.values()), str(tok.payload))


def _produce(ad: ActivityDiagram, t: Transition, value: Value, fresh: str) -> Token:
    ptype_out = ad.pin_type(t.src, t.out_pin)
    ptype_in = ad.pin_type(t.dst, t.in_pin)
    for ptype in (ptype_out, ptype_in):
        if ptype.kind is PinKind.DATA:
            return call_token(ptype.data_name, {t.in_pin: value if value is not None else fresh})
    return CONTROL_TOKEN


@dataclass
class _Running:
    started_step: int
    duration: int


def simulate(ad: ActivityDiagram, inst: ActionMethodsInstance, scenario: Scenario,
             max_steps: int = 10_000) -> Trace:
    """Drive the simulated object system until a final configuration.

    Raises SimulationError when nothing can move before `max_steps`
    states, or on a stuck (deadlocked, non-final) configuration.
    """
    rng = random.Random(scenario.seed)
    binding = methods_binding(inst)
    state = _initial_state(ad, inst)
    states = [state]
    running: dict[str, _Running] = {}
    fresh_counter = 0

    def duration_for(node: str) -> int:
        wanted = scenario.durations.get(node, 2 + rng.randrange(2))
        return max(2, wanted)

    while len(states) <= max_steps:
        if is_final_state(inst, state, binding):
            return Trace(tuple(states), truncated=False)

        step_index = len(states) - 1
        events: list[tuple[str, str]] = []
        for n in ad.nodes:
            ins = incoming(ad, n)
            if n.kind is NodeKind.ACTION:
                if n.name in running:
                    if step_index - running[n.name].started_step >= running[n.name].duration:
                        events.append(("finish", n.name))
                elif ins and all(mailbox_tokens(state, t) for t in ins):
                    events.append(("start", n.name))
            elif n.kind is NodeKind.FORKJOIN:
                if ins and all(mailbox_tokens(state, t) for t in ins):
                    events.append(("fire", n.name))
            elif n.kind is NodeKind.DECISIONMERGE:
                if any(mailbox_tokens(state, t) for t in ins):
                    events.append(("decide", n.name))

        if not events:
            if running:
                states.append(state)  # an executing action just takes time
                continue
            raise SimulationError(
                f"stuck: no event enabled and nothing executing at step {step_index}")

        kind, name = sorted(events)[rng.randrange(len(events))]
        node = ad.node(name)

        if kind == "start":
            consumed: list[tuple[Transition, Token]] = []
            s1 = state
            for t in incoming(ad, node):
                box = mailbox_tokens(s1, t)
                consumed.append((t, box[0]))
                s1 = set_mailbox(s1, t, box[1:])
            controller = PinController.for_pins(tuple(t.in_pin for t, _ in consumed))
            deliveries = list(consumed)
            rng.shuffle(deliveries)
            fired = not deliveries
            for t, tok in deliveries:
                controller, fired = deliver(controller, t.in_pin, _payload_value(tok, t.in_pin))
            if not fired:
                raise SimulationError(f"controller of {name!r} did not fire on full delivery")
            for t, tok in consumed:
                if not tok.is_control:
                    s1 = s1.set_attr(inst.oid[name], t.in_pin, _payload_value(tok, t.in_pin))
            frame = Frame.make(inst.oid[name], inst.meth[name], {},
                               inst.method_pc(name), inst.caller_of(name))
            s1 = s1.push(inst.oid[name], inst.thread_of[name], frame)
            running[name] = _Running(step_index, duration_for(name))
            state = s1

        elif kind == "finish":
            s1 = state.pop(inst.oid[name], inst.thread_of[name])
            outs = outgoing(ad, node)
            feeds = [ad.node(t.dst) for t in outs]
            for t in outs:
                fresh_counter += 1
                s1 = set_mailbox(s1, t, mailbox_tokens(s1, t)
                                   + (_produce(ad, t, None, f"{name}#{fresh_counter}"),))
            for fed in feeds:
                if fed.kind is NodeKind.DECISIONMERGE and _has_real_guards(ad, fed):
                    s1 = s1.set_attr(inst.oid[name], RESULT_VAR,
                                     _choose_outcome(ad, fed, scenario, rng))
            del running[name]
            state = s1

        elif kind == "fire":
            s1 = state
            values: list[Value | None] = []
            for t in incoming(ad, node):
                box = mailbox_tokens(s1, t)
                tok = box[0]
                s1 = set_mailbox(s1, t, box[1:])
                values.append(None if tok.is_control else _payload_value(tok, t.in_pin))
            for i, t in enumerate(outgoing(ad, node)):
                fresh_counter += 1
                value = values[i % len(values)] if values else None
                s1 = set_mailbox(s1, t, mailbox_tokens(s1, t)
                                   + (_produce(ad, t, value, f"{name}#{fresh_counter}"),))
            state = s1

        else:  # decide
            s1 = state
            fed = [t for t in incoming(ad, node) if mailbox_tokens(s1, t)]
            t_in = fed[rng.randrange(len(fed))]
            box = mailbox_tokens(s1, t_in)
            tok = box[0]
            s1 = set_mailbox(s1, t_in, box[1:])
            chosen = None
            for t in outgoing(ad, node):
                if evaluate_guard(ad.guard(t.src, t.out_pin), inst, s1):
                    chosen = t
                    break
            if chosen is None:
                outcome = _choose_outcome(ad, node, scenario, rng)
                s1 = s1.set_attr(CHOICE_PREFIX + name, RESULT_VAR, outcome)
                for t in outgoing(ad, node):
                    if evaluate_guard(ad.guard(t.src, t.out_pin), inst, s1):
                        chosen = t
                        break
            if chosen is None:
                raise SimulationError(f"stuck-decision: no guard of {name!r} can hold")
            fresh_counter += 1
            value = None if tok.is_control else _payload_value(tok, t_in.in_pin)
            s1 = set_mailbox(s1, chosen, mailbox_tokens(s1, chosen)
                               + (_produce(ad, chosen, value, f"{name}#{fresh_counter}"),))
            state = s1

        states.append(state)

    raise SimulationError(f"no final configuration within {max_steps} states")


def _has_real_guards(ad: ActivityDiagram, n: Node) -> bool:
    return any(ad.guard(n.name, pin) != "true" for pin in n.out_pins)


def _choose_outcome(ad: ActivityDiagram, n: Node, scenario: Scenario,
                    rng: random.Random) -> str:
    if n.name in scenario.decisions:
        return scenario.decisions[n.name]
    guards = sorted({ad.guard(n.name, pin) for pin in n.out_pins} - {"true"})
    if not guards:
        return "true"
    return guards[rng.randrange(len(guards))]
