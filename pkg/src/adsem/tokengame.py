"""Configuration-level token game: enumerate everything the step
predicates permit, with no system-model encoding in the way.

A configuration is just the per-transition token buffers plus the
executing flag of each action node.  Successor enumeration supports
one-node-at-a-time (interleaving) and simultaneous-disjoint (concurrent)
steps, and instantaneous (one-step) or start/finish (two-phase) action
execution.  Guards are resolved by a three-valued oracle; "either"
explores both branches.

Runs lift into the system model via `as_binding`, so the conformance
checker can audit everything this module generates.
"""

from __future__ import annotations

import itertools
import json
import random
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

from .diagram import ActivityDiagram, NodeKind, PinKind, Transition, incoming, outgoing
from .semantics import (
    CONTROL_TOKEN,
    Token,
    VariationBinding,
    admissible_tokens,
    fifo_delta,
)
from .sysmodel import SystemState, Trace

Buffer = tuple[Token, ...]

INTERLEAVING = "interleaving"
CONCURRENT = "concurrent"
INSTANT = "instant"
TWO_PHASE = "twoPhase"

DEFAULT_BOUND = 100_000


class TokenGameError(Exception):
    pass


@dataclass(frozen=True)
class Configuration:
    """Total buffer map (by transition key) and action executing flags."""
    buffers: tuple[tuple[str, Buffer], ...]
    flags: tuple[tuple[str, bool], ...]

    @staticmethod
    def make(ad: ActivityDiagram,
             buffers: Mapping[str, Sequence[Token]] | None = None,
             flags: Mapping[str, bool] | None = None) -> "Configuration":
        buffers = dict(buffers or {})
        flags = dict(flags or {})
        unknown = set(buffers) - {t.key for t in ad.transitions}
        if unknown:
            raise TokenGameError(f"buffers for unknown transitions: {sorted(unknown)}")
        return Configuration(
            buffers=tuple((t.key, tuple(buffers.get(t.key, ()))) for t in ad.transitions),
            flags=tuple((n.name, bool(flags.get(n.name, False)))
                        for n in ad.nodes if n.kind is NodeKind.ACTION),
        )

    def buffer(self, key: str) -> Buffer:
        for k, buf in self.buffers:
            if k == key:
                return buf
        raise TokenGameError(f"unknown transition {key!r}")

    def flag(self, node: str) -> bool:
        for name, value in self.flags:
            if name == node:
                return value
        return False

    @property
    def token_count(self) -> int:
        return sum(len(buf) for _, buf in self.buffers)

    def to_json(self) -> dict:
        return {
            "buffers": {k: [tok.to_json() for tok in buf] for k, buf in self.buffers if buf},
            "exec": {name: value for name, value in self.flags},
        }

    @staticmethod
    def from_json(ad: ActivityDiagram, d: dict) -> "Configuration":
        buffers = {k: [Token.from_json(tok) for tok in toks]
                   for k, toks in d.get("buffers", {}).items()}
        return Configuration.make(ad, buffers, d.get("exec", {}))

    def canonical(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Guard oracles
# ---------------------------------------------------------------------------

TRUE, FALSE, EITHER = "true", "false", "either"


class GuardOracle:
    """Three-valued guard resolution; "either" explores both branches."""

    def decide(self, guard: str, config: Configuration) -> str:
        raise NotImplementedError


class ExploreAllBranches(GuardOracle):
    """The literal guard "true" holds; everything else is unresolved."""

    def decide(self, guard: str, config: Configuration) -> str:
        return TRUE if guard == "true" else EITHER


class FixedDecisions(GuardOracle):
    """Resolve listed guard texts to fixed booleans; others unresolved."""

    def __init__(self, choices: Mapping[str, bool]):
        self.choices = dict(choices)

    def decide(self, guard: str, config: Configuration) -> str:
        if guard == "true":
            return TRUE
        if guard in self.choices:
            return TRUE if self.choices[guard] else FALSE
        return EITHER


# ---------------------------------------------------------------------------
# Steps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepChoice:
    """Which permitted reaction a node took in a step."""
    node: str
    kind: str  # start | finish | instant | forkjoin | decision
    in_edge: str | None = None
    out_edge: str | None = None

    def label(self) -> str:
        if self.kind == "decision":
            return f"{self.node}:{self.in_edge}=>{self.out_edge}"
        return f"{self.node}:{self.kind}"


def representative_token(ad: ActivityDiagram, t: Transition, position: int) -> Token:
    """Deterministic token for a production on t; the payload depends only
    on the transition and the landing position so reachability closes."""
    out_type = ad.pin_type(t.src, t.out_pin)
    in_type = ad.pin_type(t.dst, t.in_pin)
    for ptype in (out_type, in_type):
        if ptype.kind is PinKind.DATA:
            return Token(ptype.data_name, f"{t.key}#{position}")
    return CONTROL_TOKEN


def initial_config(ad: ActivityDiagram,
                   seed_token: Callable[[Transition], Token] | None = None) -> Configuration:
    """One token on every outgoing transition of every initial node."""
    initials = [n for n in ad.nodes if n.kind is NodeKind.INITIAL]
    if not initials:
        raise TokenGameError(f"activity {ad.name!r} has no initial node")
    buffers: dict[str, list[Token]] = {}
    for n in initials:
        for t in outgoing(ad, n):
            tok = seed_token(t) if seed_token else representative_token(ad, t, 0)
            buffers[t.key] = [tok]
    return Configuration.make(ad, buffers)


def _node_choices(ad: ActivityDiagram, c: Configuration, guards: GuardOracle,
                  action_mode: str) -> dict[str, list[StepChoice]]:
    """Enabled non-stutter choices per node."""
    choices: dict[str, list[StepChoice]] = {}
    for n in ad.nodes:
        ins = incoming(ad, n)
        outs = outgoing(ad, n)
        opts: list[StepChoice] = []
        if n.kind is NodeKind.ACTION:
            inputs_ready = all(c.buffer(t.key) for t in ins)
            if action_mode == INSTANT:
                if inputs_ready:
                    opts.append(StepChoice(n.name, "instant"))
            elif action_mode == TWO_PHASE:
                if c.flag(n.name):
                    opts.append(StepChoice(n.name, "finish"))
                elif inputs_ready:
                    opts.append(StepChoice(n.name, "start"))
            else:
                raise TokenGameError(f"unknown action mode {action_mode!r}")
        elif n.kind is NodeKind.FORKJOIN:
            if all(c.buffer(t.key) for t in ins):
                opts.append(StepChoice(n.name, "forkjoin"))
        elif n.kind is NodeKind.DECISIONMERGE:
            for t_in in ins:
                if not c.buffer(t_in.key):
                    continue
                for t_out in outs:
                    verdict = guards.decide(ad.guard(t_out.src, t_out.out_pin), c)
                    if verdict in (TRUE, EITHER):
                        opts.append(StepChoice(n.name, "decision", t_in.key, t_out.key))
        # initial and final nodes only stutter
        if opts:
            choices[n.name] = opts
    return choices


def _choice_footprint(ad: ActivityDiagram, choice: StepChoice) -> tuple[set[str], set[str]]:
    """(consumed transition keys, produced transition keys)."""
    n = ad.node(choice.node)
    ins = {t.key for t in incoming(ad, n)}
    outs = {t.key for t in outgoing(ad, n)}
    if choice.kind == "start":
        return ins, set()
    if choice.kind == "finish":
        return set(), outs
    if choice.kind in ("instant", "forkjoin"):
        return ins, outs
    if choice.kind == "decision":
        assert choice.in_edge is not None and choice.out_edge is not None
        return {choice.in_edge}, {choice.out_edge}
    raise TokenGameError(f"unknown step kind {choice.kind!r}")


def _apply(ad: ActivityDiagram, c: Configuration,
           choices: Iterable[StepChoice]) -> Configuration:
    buffers = {k: list(buf) for k, buf in c.buffers}
    flags = dict(c.flags)
    consumed: dict[str, Token] = {}
    for choice in choices:
        cons_keys, _ = _choice_footprint(ad, choice)
        for k in cons_keys:
            if not buffers[k]:
                raise TokenGameError(f"consume from empty buffer {k}")
            consumed[k] = buffers[k].pop(0)
        if choice.kind == "start":
            flags[choice.node] = True
        elif choice.kind == "finish":
            flags[choice.node] = False
    for choice in choices:
        _, prod_keys = _choice_footprint(ad, choice)
        for k in prod_keys:
            t = Transition.from_key(k)
            tok = representative_token(ad, t, len(buffers[k]))
            if choice.kind == "decision" and choice.in_edge in consumed:
                candidate = consumed[choice.in_edge]
                out_set = admissible_tokens(ad.pin_type(t.src, t.out_pin))
                in_set = admissible_tokens(ad.pin_type(t.dst, t.in_pin))
                if candidate in out_set and candidate in in_set:
                    tok = candidate
            buffers[k].append(tok)
    return Configuration.make(ad, {k: tuple(v) for k, v in buffers.items()}, flags)


ChoiceSet = frozenset


def successors(ad: ActivityDiagram, c: Configuration, mode: str = INTERLEAVING,
               guards: GuardOracle | None = None,
               action_mode: str = INSTANT) -> list[tuple[frozenset, Configuration]]:
    """All permitted next configurations with the choices that reach them.

    Interleaving: exactly one node takes a non-stutter step.  Concurrent:
    any nonempty set of nodes whose consumed and produced transition sets
    are pairwise disjoint fires simultaneously.
    """
    guards = guards or ExploreAllBranches()
    per_node = _node_choices(ad, c, guards, action_mode)
    results: list[tuple[frozenset, Configuration]] = []

    def admit(selection: tuple[StepChoice, ...]) -> None:
        footprints = [_choice_footprint(ad, ch) for ch in selection]
        touched_cons: set[str] = set()
        touched_prod: set[str] = set()
        for cons_keys, prod_keys in footprints:
            touched_cons |= cons_keys
            touched_prod |= prod_keys
        if touched_cons & touched_prod:
            return
        results.append((frozenset(selection), _apply(ad, c, selection)))

    if mode == INTERLEAVING:
        for opts in per_node.values():
            for choice in opts:
                admit((choice,))
    elif mode == CONCURRENT:
        names = sorted(per_node)
        pools = [[None] + list(per_node[name]) for name in names]
        for combo in itertools.product(*pools):
            selection = tuple(ch for ch in combo if ch is not None)
            if selection:
                admit(selection)
    else:
        raise TokenGameError(f"unknown mode {mode!r}")

    results.sort(key=lambda pair: (pair[1].canonical(),
                                   sorted(ch.label() for ch in pair[0])))
    return results


# ---------------------------------------------------------------------------
# Configuration-level initial/final
# ---------------------------------------------------------------------------

def config_is_initial(ad: ActivityDiagram, c: Configuration) -> bool:
    some_initial = any(
        n.kind is NodeKind.INITIAL and all(c.buffer(t.key) for t in outgoing(ad, n))
        for n in ad.nodes
    )
    others_quiet = all(
        n.kind is NodeKind.INITIAL
        or (not any(c.buffer(t.key) for t in outgoing(ad, n)) and not c.flag(n.name))
        for n in ad.nodes
    )
    return some_initial and others_quiet


def config_is_final(ad: ActivityDiagram, c: Configuration) -> bool:
    some_final = any(
        n.kind is NodeKind.FINAL and any(c.buffer(t.key) for t in incoming(ad, n))
        for n in ad.nodes
    )
    others_quiet = all(
        n.kind is NodeKind.FINAL
        or (not any(c.buffer(t.key) for t in incoming(ad, n)) and not c.flag(n.name))
        for n in ad.nodes
    )
    return some_final and others_quiet


# ---------------------------------------------------------------------------
# Reachability
# ---------------------------------------------------------------------------

@dataclass
class ReachabilityResult:
    initial: Configuration
    configs: list[Configuration]
    edges: list[tuple[Configuration, frozenset, Configuration]]
    truncated: bool


def reachable(ad: ActivityDiagram, mode: str = INTERLEAVING,
              guards: GuardOracle | None = None, action_mode: str = INSTANT,
              bound: int = DEFAULT_BOUND) -> ReachabilityResult:
    """BFS closure of `successors` from the initial configuration, up to
    `bound` distinct configurations."""
    if bound < 1:
        raise TokenGameError("bound must be >= 1")
    start = initial_config(ad)
    visited: dict[Configuration, None] = {start: None}
    order = [start]
    edges: list[tuple[Configuration, frozenset, Configuration]] = []
    truncated = False
    queue = deque([start])
    while queue:
        c = queue.popleft()
        for choices, c1 in successors(ad, c, mode, guards, action_mode):
            if c1 not in visited:
                if len(visited) >= bound:
                    truncated = True
                    continue
                visited[c1] = None
                order.append(c1)
                queue.append(c1)
            edges.append((c, choices, c1))
    return ReachabilityResult(start, order, edges, truncated)


@dataclass
class AnalysisReport:
    configurations: int
    edges: int
    truncated: bool
    deadlocks: list[Configuration]
    final_reachability: dict[str, bool]
    decision_coverage: dict[str, bool]
    never_fired: list[str]

    def to_json(self) -> dict:
        return {
            "configurations": self.configurations,
            "edges": self.edges,
            "truncated": self.truncated,
            "deadlocks": [c.to_json() for c in self.deadlocks],
            "final_reachability": self.final_reachability,
            "decision_coverage": self.decision_coverage,
            "never_fired": self.never_fired,
        }


def analyze(ad: ActivityDiagram, result: ReachabilityResult) -> AnalysisReport:
    """Deadlocks (maximal non-final configurations), reachability of each
    final input, branch coverage per decision output pin, and nodes that
    never fired."""
    sources = {c for c, _, _ in result.edges}
    deadlocks = [c for c in result.configs if c not in sources and not config_is_final(ad, c)]

    final_reach: dict[str, bool] = {}
    for n in ad.nodes:
        if n.kind is NodeKind.FINAL:
            for t in incoming(ad, n):
                final_reach[t.key] = any(c.buffer(t.key) for c in result.configs)

    coverage: dict[str, bool] = {}
    for n in ad.nodes:
        if n.kind is NodeKind.DECISIONMERGE:
            for pin in n.out_pins:
                coverage[f"{n.name}.{pin}"] = False
    fired: set[str] = set()
    for _, choices, _ in result.edges:
        for ch in choices:
            fired.add(ch.node)
            if ch.kind == "decision" and ch.out_edge:
                t = Transition.from_key(ch.out_edge)
                coverage[f"{t.src}.{t.out_pin}"] = True

    never = [n.name for n in ad.nodes
             if n.kind not in (NodeKind.INITIAL, NodeKind.FINAL) and n.name not in fired]
    return AnalysisReport(
        configurations=len(result.configs),
        edges=len(result.edges),
        truncated=result.truncated,
        deadlocks=deadlocks,
        final_reachability=final_reach,
        decision_coverage=coverage,
        never_fired=never,
    )


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Run:
    configs: tuple[Configuration, ...]
    choices: tuple[frozenset, ...]

    def __post_init__(self):
        if len(self.choices) != len(self.configs) - 1:
            raise TokenGameError("a run has one choice set per step")


def maximal_runs(ad: ActivityDiagram, mode: str = INTERLEAVING,
                 guards: GuardOracle | None = None, action_mode: str = INSTANT,
                 max_runs: int = 1000, max_len: int = 200) -> list[Run]:
    """All runs from the initial configuration that end in a configuration
    with no successors, depth-first up to `max_len` states; longer runs
    are cut and dropped."""
    out: list[Run] = []

    def explore(configs: tuple[Configuration, ...], choices: tuple[frozenset, ...]) -> None:
        if len(out) >= max_runs:
            return
        succ = successors(ad, configs[-1], mode, guards, action_mode)
        if not succ:
            out.append(Run(configs, choices))
            return
        if len(configs) >= max_len:
            return
        for chs, c1 in succ:
            explore(configs + (c1,), choices + (chs,))

    explore((initial_config(ad),), ())
    return out


def random_run(ad: ActivityDiagram, seed: int = 0, mode: str = INTERLEAVING,
               guards: GuardOracle | None = None, action_mode: str = INSTANT,
               max_len: int = 200) -> tuple[Run, bool]:
    """One seeded run; the flag reports whether it was cut before dying out."""
    rng = random.Random(seed)
    configs: tuple[Configuration, ...] = (initial_config(ad),)
    choices: tuple[frozenset, ...] = ()
    while len(configs) < max_len:
        succ = successors(ad, configs[-1], mode, guards, action_mode)
        if not succ:
            return Run(configs, choices), False
        chs, c1 = succ[rng.randrange(len(succ))]
        configs += (c1,)
        choices += (chs,)
    succ = successors(ad, configs[-1], mode, guards, action_mode)
    return Run(configs, choices), bool(succ)


# ---------------------------------------------------------------------------
# Lifting configurations into the system model
# ---------------------------------------------------------------------------

BUFFER_OID = "buffers"
FLAGS_OID = "executing"


@dataclass(frozen=True)
class TokenGameInstance:
    """Degenerate diagram instance whose state is the lifted configuration."""
    ad: ActivityDiagram


def lift_config(ad: ActivityDiagram, c: Configuration) -> SystemState:
    buffers = {k: json.dumps([tok.to_json() for tok in buf], sort_keys=True)
               for k, buf in c.buffers}
    flags = {name: value for name, value in c.flags}
    return SystemState(data_store={BUFFER_OID: buffers, FLAGS_OID: flags})


def lifted_binding(ad: ActivityDiagram) -> VariationBinding:
    def buf_state(t: Transition, inst, s: SystemState) -> Buffer:
        raw = s.data_store.get(BUFFER_OID, {}).get(t.key, "[]")
        return tuple(Token.from_json(d) for d in json.loads(raw))

    def executing(n, inst, s: SystemState) -> bool:
        return bool(s.data_store.get(FLAGS_OID, {}).get(n.name, False))

    def cons(t, inst, s0, s1) -> Buffer:
        consumed, _ = fifo_delta(buf_state(t, inst, s0), buf_state(t, inst, s1))
        return consumed

    def prod(t, inst, s0, s1) -> Buffer:
        _, produced = fifo_delta(buf_state(t, inst, s0), buf_state(t, inst, s1))
        return produced

    return VariationBinding(
        diagram_of=lambda inst: ad,
        executing=executing,
        elems=admissible_tokens,
        buf_state=buf_state,
        cons=cons,
        prod=prod,
        eval_guard=lambda guard, inst, s: True,
    )


def as_binding(ad: ActivityDiagram, run: Sequence[Configuration],
               mode: str = INTERLEAVING, guards: GuardOracle | None = None,
               action_mode: str = INSTANT,
               truncated: bool | None = None) -> tuple[TokenGameInstance, VariationBinding, Trace]:
    """Lift a run of configurations to a system-model trace plus a binding
    that reads buffers and flags straight off the lifted states.

    When `truncated` is not given it is derived: a run whose last
    configuration still has successors is a prefix.
    """
    if not run:
        raise TokenGameError("empty run")
    if truncated is None:
        truncated = bool(successors(ad, run[-1], mode, guards, action_mode))
    states = tuple(lift_config(ad, c) for c in run)
    return TokenGameInstance(ad), lifted_binding(ad), Trace(states, truncated=truncated)


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

def run_to_jsonl(run: Iterable[Configuration]) -> str:
    return "\n".join(json.dumps(c.to_json(), sort_keys=True) for c in run) + "\n"


def run_from_jsonl(ad: ActivityDiagram, text: str) -> list[Configuration]:
    return [Configuration.from_json(ad, json.loads(line))
            for line in text.splitlines() if line.strip()]


def reachability_to_dot(ad: ActivityDiagram, result: ReachabilityResult) -> str:
    index = {c: i for i, c in enumerate(result.configs)}

    def describe(c: Configuration) -> str:
        parts = [f"{k}({len(buf)})" for k, buf in c.buffers if buf]
        parts += [name for name, value in c.flags if value]
        return "\\n".join(parts) if parts else "empty"

    lines = [f'digraph "{ad.name}-reachability" {{']
    for c, i in index.items():
        shape = "doublecircle" if config_is_final(ad, c) else "box"
        lines.append(f'    n{i} [shape={shape}, label="{describe(c)}"];')
    for c0, choices, c1 in result.edges:
        label = ", ".join(sorted(ch.label() for ch in choices))
        lines.append(f'    n{index[c0]} -> n{index[c1]} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
