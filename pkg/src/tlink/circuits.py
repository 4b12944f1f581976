"""
Layered Clifford+T circuit IR: parsing, validation, layering, serialization,
and depth metrics.

A circuit is a sequence of stages; each stage is an ordered Clifford gate list
followed by one layer of T gates (a set of distinct qubits). Only the final
stage may have an empty T layer. The text format is line-based UTF-8:

    QUBITS 2
    H 0
    CNOT 0 1
    T 1
    ---

``---`` closes a stage, ``#`` starts a comment line, blank lines are ignored.
In canonical form the T lines of a stage come after its Clifford lines.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class ParseError(ValueError):
    """Malformed text input; carries a 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class ValidationError(ValueError):
    """Well-formed input that violates an IR invariant."""


class GateKind(Enum):
    H = "H"
    P = "P"
    PDG = "PDG"
    X = "X"
    Z = "Z"
    CNOT = "CNOT"
    T = "T"

    @property
    def arity(self) -> int:
        return 2 if self is GateKind.CNOT else 1


CLIFFORD_KINDS = frozenset(k for k in GateKind if k is not GateKind.T)


@dataclass(frozen=True)
class Gate:
    """One gate application; CNOT targets are (control, target)."""

    kind: GateKind
    targets: tuple[int, ...]

    def __str__(self) -> str:
        return " ".join([self.kind.value, *map(str, self.targets)])


def h(q: int) -> Gate:
    return Gate(GateKind.H, (q,))


def p(q: int) -> Gate:
    return Gate(GateKind.P, (q,))


def pdg(q: int) -> Gate:
    return Gate(GateKind.PDG, (q,))


def x(q: int) -> Gate:
    return Gate(GateKind.X, (q,))


def z(q: int) -> Gate:
    return Gate(GateKind.Z, (q,))


def t(q: int) -> Gate:
    return Gate(GateKind.T, (q,))


def cnot(c: int, tgt: int) -> Gate:
    return Gate(GateKind.CNOT, (c, tgt))


@dataclass(frozen=True)
class Stage:
    """A Clifford sub-circuit plus its trailing T layer."""

    clifford: tuple[Gate, ...]
    t_layer: frozenset[int]


@dataclass(frozen=True)
class LayeredCircuit:
    n: int
    stages: tuple[Stage, ...]

    @property
    def t_depth(self) -> int:
        return sum(1 for st in self.stages if st.t_layer)


@dataclass(frozen=True)
class DepthMetrics:
    total_depth: int
    t_depth: int
    t_count: int
    gate_count: int


def _check_gate(g: Gate, n: int) -> None:
    if len(g.targets) != g.kind.arity:
        raise ValidationError(f"{g.kind.value} takes {g.kind.arity} target(s), got {len(g.targets)}")
    if g.kind is GateKind.CNOT and g.targets[0] == g.targets[1]:
        raise ValidationError("CNOT control and target must be distinct")
    for q in g.targets:
        if not 0 <= q < n:
            raise ValidationError(f"qubit index {q} out of range for {n} qubits")


def validate(c: LayeredCircuit) -> LayeredCircuit:
    """Check all IR invariants; returns the circuit for chaining."""
    if c.n < 1:
        raise ValidationError("qubit count must be positive")
    if len(c.stages) < 1:
        raise ValidationError("circuit needs at least one stage")
    for i, st in enumerate(c.stages):
        for g in st.clifford:
            if g.kind not in CLIFFORD_KINDS:
                raise ValidationError("T gate inside a Clifford block; use layerize")
            _check_gate(g, c.n)
        for q in st.t_layer:
            if not 0 <= q < c.n:
                raise ValidationError(f"T-layer qubit {q} out of range for {c.n} qubits")
        if not st.t_layer and i != len(c.stages) - 1:
            raise ValidationError("only the final stage may have an empty T layer")
    return c


def flatten(c: LayeredCircuit) -> list[Gate]:
    """Canonical flat gate order: per stage, Clifford gates then sorted T gates."""
    gates: list[Gate] = []
    for st in c.stages:
        gates.extend(st.clifford)
        gates.extend(t(q) for q in sorted(st.t_layer))
    return gates


def layerize(gates: list[Gate], n: int) -> LayeredCircuit:
    """Greedily pack a flat gate list into stages.

    Clifford gates accumulate; T gates on fresh qubits join the open T layer.
    A Clifford gate, or a second T on a qubit already in the layer, closes the
    stage immediately before itself. Gates sharing a qubit are never reordered,
    so flattening the result is circuit-equivalent to the input.
    """
    for g in gates:
        _check_gate(g, n)
    stages: list[Stage] = []
    cliff: list[Gate] = []
    t_layer: set[int] = set()
    for g in gates:
        if g.kind is GateKind.T:
            q = g.targets[0]
            if q in t_layer:
                stages.append(Stage(tuple(cliff), frozenset(t_layer)))
                cliff, t_layer = [], {q}
            else:
                t_layer.add(q)
        else:
            if t_layer:
                stages.append(Stage(tuple(cliff), frozenset(t_layer)))
                cliff, t_layer = [g], set()
            else:
                cliff.append(g)
    stages.append(Stage(tuple(cliff), frozenset(t_layer)))
    return validate(LayeredCircuit(n, tuple(stages)))


def clifford_depth(gates: tuple[Gate, ...] | list[Gate]) -> int:
    """ASAP layering depth of a gate list; every gate costs one layer."""
    free: dict[int, int] = {}
    depth = 0
    for g in gates:
        layer = 1 + max((free.get(q, 0) for q in g.targets), default=0)
        for q in g.targets:
            free[q] = layer
        depth = max(depth, layer)
    return depth


def depth_metrics(c: LayeredCircuit) -> DepthMetrics:
    total = sum(clifford_depth(st.clifford) + (1 if st.t_layer else 0) for st in c.stages)
    t_count = sum(len(st.t_layer) for st in c.stages)
    gate_count = sum(len(st.clifford) for st in c.stages) + t_count
    return DepthMetrics(total, c.t_depth, t_count, gate_count)


def _parse_gate_line(tokens: list[str], n: int, lineno: int) -> Gate:
    try:
        kind = GateKind(tokens[0])
    except ValueError:
        raise ParseError(f"unknown gate {tokens[0]!r}", lineno) from None
    args = tokens[1:]
    if len(args) != kind.arity:
        raise ParseError(f"{kind.value} takes {kind.arity} qubit argument(s)", lineno)
    try:
        targets = tuple(int(a) for a in args)
    except ValueError:
        raise ParseError("qubit arguments must be integers", lineno) from None
    for q in targets:
        if not 0 <= q < n:
            raise ParseError(f"qubit index {q} out of range", lineno)
    if kind is GateKind.CNOT and targets[0] == targets[1]:
        raise ParseError("CNOT control and target must be distinct", lineno)
    return Gate(kind, targets)


def parse_circuit(text: str) -> LayeredCircuit:
    """Parse circuit text; inverse of serialize_circuit on canonical form."""
    n: int | None = None
    stages: list[Stage] = []
    cliff: list[Gate] = []
    t_layer: set[int] = set()
    have_content = False

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if n is None:
            if tokens[0] != "QUBITS" or len(tokens) != 2:
                raise ParseError("expected 'QUBITS <n>' header", lineno)
            try:
                n = int(tokens[1])
            except ValueError:
                raise ParseError("qubit count must be an integer", lineno) from None
            if n < 1:
                raise ParseError("qubit count must be positive", lineno)
            continue
        if line == "---":
            stages.append(Stage(tuple(cliff), frozenset(t_layer)))
            cliff, t_layer = [], set()
            have_content = False
            continue
        g = _parse_gate_line(tokens, n, lineno)
        have_content = True
        if g.kind is GateKind.T:
            q = g.targets[0]
            if q in t_layer:
                raise ParseError(f"duplicate T on qubit {q} within a stage", lineno)
            t_layer.add(q)
        else:
            if t_layer:
                raise ParseError("T gate inside a Clifford block: Clifford gates "
                                 "must precede the stage's T layer", lineno)
            cliff.append(g)

    if n is None:
        raise ParseError("missing 'QUBITS <n>' header", 1)
    if have_content or not stages:
        stages.append(Stage(tuple(cliff), frozenset(t_layer)))
    return validate(LayeredCircuit(n, tuple(stages)))


def serialize_circuit(c: LayeredCircuit) -> str:
    """Canonical text form; parse_circuit round-trips it exactly."""
    lines = [f"QUBITS {c.n}"]
    for st in c.stages:
        lines.extend(str(g) for g in st.clifford)
        lines.extend(f"T {q}" for q in sorted(st.t_layer))
        lines.append("---")
    return "\n".join(lines) + "\n"
