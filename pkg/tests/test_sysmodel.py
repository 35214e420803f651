from __future__ import annotations

import pytest

from adsem.sysmodel import (
    Frame,
    SystemModelError,
    SystemState,
    Trace,
    Universe,
    advance_pc,
    canonical_key,
    generate_traces,
    state_from_json,
    state_to_json,
    top_frame,
)


def frame(pc="p1", vars=None) -> Frame:
    return Frame.make("obj:a", "m:run", vars or {}, pc, "obj:caller")


UNI = Universe(
    oids=frozenset({"obj:a"}), classes=frozenset({"A"}),
    meths=frozenset({"m:run"}), threads=frozenset({"th"}),
    pcs=frozenset({"p1", "p2", "p3"}),
    class_of={"obj:a": "A"}, defined_in={"m:run": "A"},
    pc_of={"m:run": frozenset({"p1", "p2", "p3"})},
)


# ---------------------------------------------------------------------------
# Frames and stacks
# ---------------------------------------------------------------------------

def test_top_frame_returns_pushed_frame():
    s = SystemState().push("obj:a", "th", frame())
    assert top_frame(s, "obj:a", "th") == frame()


def test_top_frame_empty_stack_absent():
    assert top_frame(SystemState(), "obj:a", "th") is None


def test_top_frame_lifo():
    f1, f2 = frame("p1"), frame("p2")
    s = SystemState().push("obj:a", "th", f1).push("obj:a", "th", f2)
    assert top_frame(s, "obj:a", "th") == f2
    assert top_frame(s.pop("obj:a", "th"), "obj:a", "th") == f1


def test_top_frame_unknown_entities():
    s = SystemState().push("obj:a", "th", frame())
    with pytest.raises(SystemModelError):
        top_frame(s, "obj:ghost", "th", universe=UNI)
    with pytest.raises(SystemModelError):
        top_frame(s, "obj:a", "th-ghost", universe=UNI)


def test_universe_rejects_inconsistencies():
    with pytest.raises(SystemModelError):
        Universe(oids=frozenset({"o"}))  # no class for o
    with pytest.raises(SystemModelError):
        Universe(meths=frozenset({"m"}), defined_in={"m": "C"})  # no pcs for m


# ---------------------------------------------------------------------------
# advance_pc
# ---------------------------------------------------------------------------

def test_advance_pc_moves_top():
    stack = (frame("p1"), frame("p3"))
    out = advance_pc(stack, ["p1", "p2", "p3"])
    assert out[0].pc == "p2"
    assert out[1:] == stack[1:]


def test_advance_pc_terminal_errors():
    with pytest.raises(SystemModelError):
        advance_pc((frame("p3"),), ["p1", "p2", "p3"])


def test_advance_pc_empty_and_unknown():
    with pytest.raises(SystemModelError):
        advance_pc((), ["p1"])
    with pytest.raises(SystemModelError):
        advance_pc((frame("zz"),), ["p1", "p2"])


# ---------------------------------------------------------------------------
# Functional update discipline
# ---------------------------------------------------------------------------

def test_set_attr_is_functional_override():
    s0 = SystemState().set_attr("obj:a", "x", 1).set_attr("obj:a", "y", 2)
    s1 = s0.set_attr("obj:a", "x", 9)
    assert s0.attrs("obj:a") == {"x": 1, "y": 2}
    assert s1.attrs("obj:a") == {"x": 9, "y": 2}


# ---------------------------------------------------------------------------
# Trace generation
# ---------------------------------------------------------------------------

def number(n: int) -> SystemState:
    return SystemState().set_attr("obj:a", "n", n)


def test_generate_traces_no_successors():
    traces = generate_traces(lambda s: [], number(0), depth=5, fanout=4)
    assert traces == [Trace((number(0),), truncated=False)]


def test_generate_traces_deterministic_chain():
    def delta(s):
        n = s.attrs("obj:a")["n"]
        return [number(n + 1)] if n < 3 else []

    traces = generate_traces(delta, number(0), depth=10, fanout=4)
    assert len(traces) == 1
    assert len(traces[0]) == 4
    assert not traces[0].truncated


def test_generate_traces_binary_branching():
    def delta(s):
        n = s.attrs("obj:a")["n"]
        return [number(2 * n + 1), number(2 * n + 2)]

    traces = generate_traces(delta, number(0), depth=2, fanout=2)
    assert len(traces) == 4
    assert all(len(t) == 3 and t.truncated for t in traces)


def test_generate_traces_fanout_limits_and_orders():
    def delta(s):
        return [number(3), number(1), number(2)]

    traces = generate_traces(delta, number(0), depth=1, fanout=2)
    # canonical order means the two smallest serializations are explored
    seconds = sorted(t[1].attrs("obj:a")["n"] for t in traces)
    assert len(traces) == 2
    assert seconds == [1, 2]


def test_generated_traces_are_delta_adjacent():
    def delta(s):
        n = s.attrs("obj:a")["n"]
        return [number(n + 1), number(n + 2)] if n < 4 else []

    for trace in generate_traces(delta, number(0), depth=3, fanout=2):
        for i in range(len(trace) - 1):
            assert trace[i + 1] in delta(trace[i])


def test_trace_requires_a_state():
    with pytest.raises(SystemModelError):
        Trace(())


# ---------------------------------------------------------------------------
# JSON snapshots
# ---------------------------------------------------------------------------

def test_state_json_round_trip():
    s = (SystemState(event_store={"obj:a": ("ping",)})
         .set_attr("obj:a", "x", 1)
         .push("obj:a", "th", frame("p2", {"i": 4})))
    d = state_to_json(s)
    assert d["cs"]["obj:a"]["th"][0]["pc"] == "p2"
    assert state_from_json(d) == s
    assert canonical_key(state_from_json(d)) == canonical_key(s)
