"""Activity-diagram semantics workbench.

Parse and validate activity diagrams, enumerate their token-flow
behavior, check execution traces for conformance, and run the two
shipped interpretations (atomic actions in one method; actions as
methods on role objects).
"""

from .diagram import (
    ActivityDiagram,
    Diagnostic,
    DiagramError,
    Node,
    NodeKind,
    ParseError,
    PinKind,
    PinType,
    Severity,
    Transition,
    incoming,
    outgoing,
    parse,
    to_dot,
    to_text,
    validate,
)
from .semantics import (
    CONTROL_TOKEN,
    Token,
    VariationBinding,
    Verdict,
    VerdictKind,
    allows_step,
    buffer_law_holds,
    conforms,
    is_final_state,
    is_initial_state,
)
from .sysmodel import Frame, SystemState, Trace, Universe
from .tokengame import (
    Configuration,
    GuardOracle,
    StepChoice,
    analyze,
    as_binding,
    initial_config,
    reachable,
    successors,
)

__all__ = [name for name in dir() if not name.startswith("_")]
