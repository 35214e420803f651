from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adsem.diagram import (
    CONTROL,
    DEFAULT_ROLE,
    TOP,
    DiagramError,
    NodeKind,
    ParseError,
    Severity,
    compatible,
    data_type,
    incoming,
    outgoing,
    parse,
    to_dot,
    to_text,
    validate,
)

from .conftest import CORPUS, load

MINIMAL_TEXT = "activity E { initial i; final f; i -> f; }"


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def test_parse_grade_thesis(grade):
    assert grade.name == "GradeThesis"
    assert len(grade.nodes) == 11
    actions = {n.name for n in grade.nodes if n.kind is NodeKind.ACTION}
    assert actions == {"FileThesis", "ReviewThesis1", "ReviewThesis2",
                       "Evaluate", "CreateCert", "DetainFailure"}
    assert grade.roles == ("Student", "Referee1", "Referee2")
    assert grade.pin_type("FileThesis", "t") == data_type("Thesis")
    assert grade.guard("D1", "p") == "passed"
    assert grade.guard("D1", "f") == "failed"
    assert grade.guard("FileThesis", "t") == "true"


def test_parse_minimal_synthesizes_control_pins():
    ad = parse(MINIMAL_TEXT)
    assert len(ad.nodes) == 2
    assert len(ad.transitions) == 1
    t = ad.transitions[0]
    assert ad.node("i").out_pins == (t.out_pin,)
    assert ad.node("f").in_pins == (t.in_pin,)
    assert ad.pin_type("i", t.out_pin) == CONTROL
    assert ad.pin_type("f", t.in_pin) == CONTROL
    assert ad.role_of["i"] == DEFAULT_ROLE


def test_parse_unknown_node_edge():
    with pytest.raises(ParseError) as err:
        parse("activity X { action a out x; a.x -> ghost.y; }")
    codes = [d.code for d in err.value.diagnostics]
    assert "unknown-node" in codes
    assert all(d.severity is Severity.ERROR for d in err.value.diagnostics)


def test_parse_duplicate_node():
    with pytest.raises(ParseError) as err:
        parse("activity X { action a; action a; }")
    assert err.value.diagnostics[0].code == "duplicate-node"


def test_parse_syntax_error_has_location():
    with pytest.raises(ParseError) as err:
        parse("activity X {\n  action ;\n}")
    d = err.value.diagnostics[0]
    assert d.code == "syntax-error"
    assert d.location.startswith("2:")


def test_parse_top_type_and_guard_escapes():
    ad = parse('activity X { action a out p: any guard "x \\"q\\" y"; final f in z; a.p -> f.z; }')
    assert ad.pin_type("a", "p") == TOP
    assert ad.guard("a", "p") == 'x "q" y'
    again = parse(to_text(ad))
    assert again == ad


# ---------------------------------------------------------------------------
# Round trips
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["grade_thesis.ad", "fac.ad", "minimal.ad", "split_join.ad"])
def test_print_parse_round_trip(name):
    ad = load(name)
    assert parse(to_text(ad)) == ad
    # printing is canonical: a second round trip is textually identical
    assert to_text(parse(to_text(ad))) == to_text(ad)


def test_round_trip_preserves_guards_and_effects(fac):
    again = parse(to_text(fac))
    assert again.guard("Loop", "body") == "n > 1"
    assert again.node("MulRes").effect == "res := res * n"


# ---------------------------------------------------------------------------
# Helper functions
# ---------------------------------------------------------------------------

def test_incoming_evaluate(grade):
    ins = incoming(grade, grade.node("Evaluate"))
    assert len(ins) == 2
    assert {t.src for t in ins} == {"J1"}
    assert {t.in_pin for t in ins} == {"r1", "r2"}


def test_incoming_initial_empty(grade):
    assert incoming(grade, grade.node("start")) == ()


def test_incoming_minimal_final():
    ad = parse(MINIMAL_TEXT)
    assert incoming(ad, ad.node("f")) == ad.transitions


def test_outgoing_fork_and_decision(grade):
    assert len(outgoing(grade, grade.node("F1"))) == 2
    assert outgoing(grade, grade.node("finish")) == ()
    d1 = outgoing(grade, grade.node("D1"))
    assert [grade.guard(t.src, t.out_pin) for t in d1] == ["passed", "failed"]


def test_unknown_node_raises(grade):
    with pytest.raises(DiagramError):
        incoming(grade, "nope")
    with pytest.raises(DiagramError):
        outgoing(grade, "nope")


@pytest.mark.parametrize("name", ["grade_thesis.ad", "fac.ad", "minimal.ad", "split_join.ad"])
def test_in_out_partition_transitions(name):
    ad = load(name)
    assert sum(len(incoming(ad, n)) for n in ad.nodes) == len(ad.transitions)
    assert sum(len(outgoing(ad, n)) for n in ad.nodes) == len(ad.transitions)
    for n in ad.nodes:
        mentioned = {t for t in ad.transitions if t.src == n.name or t.dst == n.name}
        assert set(incoming(ad, n)) | set(outgoing(ad, n)) == mentioned


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def test_validate_corpus_clean(grade, fac, minimal, split_join):
    for ad in (grade, fac, minimal, split_join):
        assert validate(ad) == []


def test_validate_variant1_flags_grade(grade):
    codes = {d.code for d in validate(grade, "variant1")}
    assert {"v1-forkjoin", "v1-role", "v1-data-pin"} <= codes
    locations = {d.location for d in validate(grade, "variant1") if d.code == "v1-forkjoin"}
    assert "node F1" in locations


def test_validate_variant1_fac_clean(fac):
    assert validate(fac, "variant1") == []


def test_validate_incompatible_pin_types():
    ad = parse("""
        activity X {
            action a out p: Thesis;
            action b in q: Review;
            final f in z;
            a.p -> b.q;
        }
    """)
    codes = [d.code for d in validate(ad)]
    assert "incompatible-pin-types" in codes


def test_validate_warns_on_stray_guard():
    ad = parse('activity X { action a out p guard "x > 1"; final f in z; a.p -> f.z; }')
    diags = validate(ad)
    assert [d.code for d in diags] == ["guard-on-non-decision"]
    assert diags[0].severity is Severity.WARNING


def test_validate_is_pure_and_order_stable(grade):
    first = validate(grade, "variant1")
    second = validate(grade, "variant1")
    assert first == second


def test_type_compatibility_rules():
    thesis, review = data_type("Thesis"), data_type("Review")
    assert compatible(CONTROL, CONTROL)
    assert compatible(CONTROL, TOP) and compatible(TOP, thesis)
    assert compatible(thesis, thesis)
    assert not compatible(thesis, review)
    assert not compatible(CONTROL, thesis)


# ---------------------------------------------------------------------------
# DOT export
# ---------------------------------------------------------------------------

def test_dot_minimal():
    dot = to_dot(parse(MINIMAL_TEXT))
    assert dot.startswith("digraph")
    assert '"i" -> "f"' in dot


def test_dot_grade_has_role_clusters_and_guards(grade):
    dot = to_dot(grade)
    assert dot.count("subgraph cluster_") == 3
    assert 'label="[passed]"' in dot
    assert 'label="[failed]"' in dot
    assert "diamond" in dot


# ---------------------------------------------------------------------------
# Round trips on randomly generated diagrams
# ---------------------------------------------------------------------------

_IDENT = st.from_regex(r"[A-Za-z][A-Za-z0-9_]{0,6}", fullmatch=True)
_TYPE = st.sampled_from(["", "Thesis", "Review", "any"])
_TEXT = st.text(alphabet="abcn +-*<>=:\"\\", max_size=12)


@st.composite
def random_diagram_text(draw):
    kinds = ["initial", "final", "action", "forkjoin", "decisionmerge"]
    n_nodes = draw(st.integers(1, 6))
    names = [f"n{i}" for i in range(n_nodes)]
    lines = []
    out_pins: list[tuple[str, str]] = []
    in_pins: list[tuple[str, str]] = []
    for i, name in enumerate(names):
        kind = kinds[draw(st.integers(0, 4))]
        parts = [kind, name]
        if draw(st.booleans()):
            parts.append(f"role {draw(_IDENT)}")
        n_in = 0 if kind == "initial" else draw(st.integers(0, 2))
        n_out = 0 if kind == "final" else draw(st.integers(0, 2))
        if n_in:
            decls = []
            for j in range(n_in):
                ptype = draw(_TYPE)
                decls.append(f"p{j}" + (f": {ptype}" if ptype else ""))
                in_pins.append((name, f"p{j}"))
            parts.append("in " + ", ".join(decls))
        if n_out:
            decls = []
            for j in range(n_out):
                ptype = draw(_TYPE)
                decl = f"q{j}" + (f": {ptype}" if ptype else "")
                if draw(st.booleans()):
                    guard = draw(_TEXT)
                    decl += ' guard "' + guard.replace("\\", "\\\\").replace('"', '\\"') + '"'
                decls.append(decl)
                out_pins.append((name, f"q{j}"))
            parts.append("out " + ", ".join(decls))
        if kind == "action" and draw(st.booleans()):
            effect = draw(_TEXT)
            parts.append('effect "' + effect.replace("\\", "\\\\").replace('"', '\\"') + '"')
        lines.append("    " + " ".join(parts) + ";")
    n_edges = draw(st.integers(0, min(4, len(out_pins) * len(in_pins))))
    for _ in range(n_edges):
        if not out_pins or not in_pins:
            break
        src, op = out_pins[draw(st.integers(0, len(out_pins) - 1))]
        dst, ip = in_pins[draw(st.integers(0, len(in_pins) - 1))]
        lines.append(f"    {src}.{op} -> {dst}.{ip};")
    return "activity Rnd {\n" + "\n".join(lines) + "\n}"


@settings(max_examples=150, deadline=None)
@given(random_diagram_text())
def test_random_diagram_round_trip(text):
    ad = parse(text)
    assert parse(to_text(ad)) == ad
    assert validate(ad) == validate(ad)


# ---------------------------------------------------------------------------
# Fuzzing: near-miss inputs never crash, errors carry locations
# ---------------------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.randoms(use_true_random=False))
def test_fuzz_near_miss_inputs(rng: random.Random):
    base = (CORPUS / "grade_thesis.ad").read_text(encoding="utf-8")
    text = list(base)
    for _ in range(rng.randrange(1, 4)):
        op = rng.randrange(3)
        pos = rng.randrange(len(text))
        ch = rng.choice(';{}.->"ax0 \n')
        if op == 0:
            text[pos] = ch
        elif op == 1:
            text.insert(pos, ch)
        else:
            del text[pos]
    mutated = "".join(text)
    try:
        ad = parse(mutated)
    except ParseError as e:
        assert e.diagnostics, "a parse failure must carry diagnostics"
        for d in e.diagnostics:
            assert d.location
    else:
        validate(ad)  # whatever still parses must be safely checkable
