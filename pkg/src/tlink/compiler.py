"""
Teleportation-linked compilation of layered Clifford+T circuits.

compile_measure turns a K-stage circuit on n qubits into a program whose
stages are pre-executed in parallel on the second halves of n(K-1) EPR pairs
and then linked sequentially by Bell measurements, so the sequential depth is
governed by the number of stages (the T-depth) rather than the total gate
depth. Pending phase corrections are applied physically at each link as
classically-conditioned P-dagger gates, and the run ends with conditioned
Pauli corrections from the tracked symbolic mask.

to_unitary rewrites a compiled program as a plain unitary circuit via the
deferred-measurement transform: each Bell measurement becomes a basis
rotation plus coherent copies onto two fresh ancillas, and each conditioned
correction becomes controlled gates on those ancillas.

compile_speculative / execute_speculative implement the grouped extension
for circuits that act classically on basis states: r stages at a time are
pre-evaluated under every assignment of the guessed corrections at in-group
boundaries, and the realized link outcomes select the matching branch.

Cost model for declared depth: every gate costs 1 layer, a Bell measurement
costs 3 (CNOT, H, readout), a conditioned single-qubit correction costs 1,
and EPR preparation is a layer-0 resource. Conditions wait for the readouts
of the variables they reference. compile_* functions are pure; execution is
sequential per program, while stage pre-execution and branch enumeration are
read-only on their inputs and safe to parallelize externally.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .circuits import (
    DepthMetrics,
    Gate,
    GateKind,
    LayeredCircuit,
    ParseError,
    Stage,
    ValidationError,
    cnot,
    depth_metrics,
    flatten,
    h,
    layerize,
    pdg,
    t,
    validate,
    x,
    z,
)
from .frames import (
    KeyPoly,
    OutcomeVar,
    Owner,
    PauliMask,
    SymbolicMask,
    apply_tableau,
    commute_through_t_layer,
    poly_eval,
    tableau_from_stage,
)
from .oracle import (
    _BELL_OUTCOMES,
    MeasRecord,
    Register,
    StateVector,
    apply_gate,
    draw_bell_outcome,
    init_state,
)


class InstrOp(Enum):
    EPR = "EPR"
    GATE = "GATE"
    BELL = "BELL"
    COND_PDG = "PDG"
    COND_X = "X"
    COND_Z = "Z"


_COND_KINDS = {
    InstrOp.COND_PDG: GateKind.PDG,
    InstrOp.COND_X: GateKind.X,
    InstrOp.COND_Z: GateKind.Z,
}


@dataclass(frozen=True)
class Instruction:
    op: InstrOp
    qubits: tuple[int, ...]
    gate: Gate | None = None
    out_vars: tuple[str, str] | None = None
    cond: KeyPoly | None = None


@dataclass
class CompiledProgram:
    total_qubits: int
    n: int
    logical_outputs: tuple[int, ...]
    instructions: tuple[Instruction, ...]
    declared_depth: DepthMetrics
    link_steps: int
    # Symbolic bookkeeping kept for coherence checks; empty on parsed programs.
    link_keys: tuple[tuple[tuple[int, KeyPoly], ...], ...] = ()
    terminal_keys: tuple[tuple[int, KeyPoly], ...] = ()
    final_mask: SymbolicMask | None = None


@dataclass(frozen=True)
class ResourceReport:
    epr_pairs: int
    total_qubits: int
    link_steps: int
    compiled_depth: int
    original_depth: int
    t_depth: int


@dataclass
class ExecTranscript:
    records: list[MeasRecord]
    outcomes: dict[str, int]


@dataclass
class Branch:
    outcomes: dict[str, int]
    probability: float
    state: StateVector


def _schedule_depth(instructions: tuple[Instruction, ...]) -> DepthMetrics:
    """ASAP schedule under the declared cost model, honoring readout dependencies."""
    qubit_free: dict[int, int] = {}
    var_ready: dict[str, int] = {}
    total = 0
    t_layers: set[int] = set()
    gate_count = 0
    t_count = 0
    for ins in instructions:
        if ins.op is InstrOp.EPR:
            continue
        start = max((qubit_free.get(q, 0) for q in ins.qubits), default=0)
        if ins.op is InstrOp.BELL:
            end = start + 3
            for v in ins.out_vars:
                var_ready[v] = end
        elif ins.op is InstrOp.GATE:
            end = start + 1
            gate_count += 1
            if ins.gate.kind is GateKind.T:
                t_count += 1
                t_layers.add(start)
        else:
            for v in ins.cond.variables():
                start = max(start, var_ready.get(v.name, 0))
            end = start + 1
        for q in ins.qubits:
            qubit_free[q] = end
        total = max(total, end)
    return DepthMetrics(total, len(t_layers), t_count, gate_count)


def compile_measure(c: LayeredCircuit) -> CompiledProgram:
    """Compile a layered circuit into a teleportation-linked program.

    Register layout: inputs occupy 0..n-1; the pair block for stage i >= 2
    occupies 2n indices starting at n + 2n(i-2), first halves before second
    halves. Stage 1 runs on the inputs, stage i on its second halves; link i
    applies the pending conditioned P-dagger corrections on stage i's outputs
    and Bell-measures them against stage i+1's first halves. Outcome variables
    are named m<k>x / m<k>z in program order. The initial mask is zero.
    """
    validate(c)
    n, stages = c.n, c.stages
    k_stages = len(stages)

    def first_half(i: int, j: int) -> int:
        return n + 2 * n * (i - 2) + j

    def second_half(i: int, j: int) -> int:
        return n + 2 * n * (i - 2) + n + j

    def carrier(i: int, j: int) -> int:
        return j if i == 1 else second_half(i, j)

    instrs: list[Instruction] = []
    for i in range(2, k_stages + 1):
        for j in range(n):
            instrs.append(Instruction(InstrOp.EPR, (first_half(i, j), second_half(i, j))))
    for i, st in enumerate(stages, start=1):
        for g in st.clifford:
            mapped = Gate(g.kind, tuple(carrier(i, q) for q in g.targets))
            instrs.append(Instruction(InstrOp.GATE, mapped.targets, gate=mapped))
        for q in sorted(st.t_layer):
            instrs.append(Instruction(InstrOp.GATE, (carrier(i, q),), gate=t(carrier(i, q))))

    mask = SymbolicMask.zero(n)
    link_keys: list[tuple[tuple[int, KeyPoly], ...]] = []
    terminal_keys: list[tuple[int, KeyPoly]] = []
    var_idx = 0
    for i, st in enumerate(stages, start=1):
        mask = apply_tableau(tableau_from_stage(st.clifford, n), mask)
        mask, pending = commute_through_t_layer(mask, st.t_layer)
        if i < k_stages:
            link_keys.append(tuple((j, pending[j]) for j in sorted(pending)))
            for j in sorted(pending):
                if not pending[j].is_zero:
                    instrs.append(Instruction(InstrOp.COND_PDG, (carrier(i, j),), cond=pending[j]))
            for j in range(n):
                vx, vz = f"m{var_idx}x", f"m{var_idx}z"
                var_idx += 1
                instrs.append(Instruction(InstrOp.BELL, (carrier(i, j), first_half(i + 1, j)),
                                          out_vars=(vx, vz)))
                mask = mask.xor_at(j, KeyPoly.of(OutcomeVar(vx, Owner.LOCAL)),
                                   KeyPoly.of(OutcomeVar(vz, Owner.LOCAL)))
        else:
            terminal_keys = [(j, pending[j]) for j in sorted(pending)]
            for j, key in terminal_keys:
                if not key.is_zero:
                    instrs.append(Instruction(InstrOp.COND_PDG, (carrier(i, j),), cond=key))
            for j in range(n):
                out_q = carrier(i, j)
                if not mask.a[j].is_zero:
                    instrs.append(Instruction(InstrOp.COND_X, (out_q,), cond=mask.a[j]))
                if not mask.b[j].is_zero:
                    instrs.append(Instruction(InstrOp.COND_Z, (out_q,), cond=mask.b[j]))

    outputs = tuple(carrier(k_stages, j) for j in range(n))
    total_qubits = n + 2 * n * (k_stages - 1)
    program = CompiledProgram(
        total_qubits=total_qubits,
        n=n,
        logical_outputs=outputs,
        instructions=tuple(instrs),
        declared_depth=_schedule_depth(tuple(instrs)),
        link_steps=k_stages - 1,
        link_keys=tuple(link_keys),
        terminal_keys=tuple(terminal_keys),
        final_mask=mask,
    )
    return program


def report(c: LayeredCircuit, p: CompiledProgram) -> ResourceReport:
    dm = depth_metrics(c)
    epr = sum(1 for ins in p.instructions if ins.op is InstrOp.EPR)
    return ResourceReport(
        epr_pairs=epr,
        total_qubits=p.total_qubits,
        link_steps=p.link_steps,
        compiled_depth=p.declared_depth.total_depth,
        original_depth=dm.total_depth,
        t_depth=dm.t_depth,
    )


# -- program text format -----------------------------------------------------

def _poly_to_text(poly: KeyPoly) -> str:
    return str(poly)


def _poly_from_text(text: str, lineno: int) -> KeyPoly:
    text = text.strip()
    if text == "0":
        return KeyPoly.zero()
    poly = KeyPoly.zero()
    for part in text.split("^"):
        part = part.strip()
        if not part:
            raise ParseError("empty condition term", lineno)
        if part == "1":
            poly = poly ^ KeyPoly.one()
            continue
        names = [v.strip() for v in part.split("*")]
        if any(not name or not name.isidentifier() for name in names):
            raise ParseError(f"bad condition term {part!r}", lineno)
        mono = frozenset(OutcomeVar(name, Owner.LOCAL) for name in names)
        poly = poly ^ KeyPoly(frozenset({mono}))
    return poly


def serialize_program(p: CompiledProgram) -> str:
    lines = [f"QUBITS {p.total_qubits}"]
    for ins in p.instructions:
        if ins.op is InstrOp.EPR:
            lines.append(f"EPR {ins.qubits[0]} {ins.qubits[1]}")
        elif ins.op is InstrOp.GATE:
            lines.append(str(ins.gate))
        elif ins.op is InstrOp.BELL:
            lines.append(f"BELL {ins.qubits[0]} {ins.qubits[1]} -> {ins.out_vars[0]} {ins.out_vars[1]}")
        else:
            lines.append(f"{ins.op.value} {ins.qubits[0]} IF {_poly_to_text(ins.cond)}")
    for j, q in enumerate(p.logical_outputs):
        lines.append(f"OUT {j} {q}")
    return "\n".join(lines) + "\n"


def parse_program(text: str) -> CompiledProgram:
    total: int | None = None
    instrs: list[Instruction] = []
    outputs: dict[int, int] = {}
    defined: set[str] = set()

    def q_index(tok: str, lineno: int) -> int:
        try:
            q = int(tok)
        except ValueError:
            raise ParseError("qubit index must be an integer", lineno) from None
        if total is not None and not 0 <= q < total:
            raise ParseError(f"qubit index {q} out of range", lineno)
        return q

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if total is None:
            if tokens[0] != "QUBITS" or len(tokens) != 2:
                raise ParseError("expected 'QUBITS <n>' header", lineno)
            total = int(tokens[1])
            continue
        head = tokens[0]
        if head == "EPR":
            if len(tokens) != 3:
                raise ParseError("EPR takes two qubits", lineno)
            instrs.append(Instruction(InstrOp.EPR, (q_index(tokens[1], lineno), q_index(tokens[2], lineno))))
        elif head == "BELL":
            if len(tokens) != 6 or tokens[3] != "->":
                raise ParseError("expected 'BELL r s -> vx vz'", lineno)
            vx, vz = tokens[4], tokens[5]
            if vx in defined or vz in defined:
                raise ParseError("outcome variable redefined", lineno)
            defined.update((vx, vz))
            instrs.append(Instruction(InstrOp.BELL,
                                      (q_index(tokens[1], lineno), q_index(tokens[2], lineno)),
                                      out_vars=(vx, vz)))
        elif head == "OUT":
            if len(tokens) != 3:
                raise ParseError("expected 'OUT j q'", lineno)
            outputs[int(tokens[1])] = q_index(tokens[2], lineno)
        elif "IF" in tokens:
            if tokens[0] not in ("PDG", "X", "Z") or tokens[2] != "IF":
                raise ParseError("expected '<PDG|X|Z> q IF <condition>'", lineno)
            op = {"PDG": InstrOp.COND_PDG, "X": InstrOp.COND_X, "Z": InstrOp.COND_Z}[tokens[0]]
            cond = _poly_from_text(line.split("IF", 1)[1], lineno)
            for v in cond.variables():
                if v.name not in defined:
                    raise ParseError(f"condition references undefined variable {v.name!r}", lineno)
            instrs.append(Instruction(op, (q_index(tokens[1], lineno),), cond=cond))
        else:
            try:
                kind = GateKind(head)
            except ValueError:
                raise ParseError(f"unknown instruction {head!r}", lineno) from None
            args = tuple(q_index(tok, lineno) for tok in tokens[1:])
            if len(args) != kind.arity:
                raise ParseError(f"{kind.value} takes {kind.arity} qubit argument(s)", lineno)
            g = Gate(kind, args)
            instrs.append(Instruction(InstrOp.GATE, args, gate=g))

    if total is None:
        raise ParseError("missing 'QUBITS <n>' header", 1)
    if not outputs:
        raise ParseError("program has no OUT lines", 1)
    if sorted(outputs) != list(range(len(outputs))):
        raise ParseError("OUT logical wires must be 0..n-1", 1)
    n = len(outputs)
    bells = sum(1 for ins in instrs if ins.op is InstrOp.BELL)
    links = bells // n if n and bells % n == 0 else bells
    return CompiledProgram(
        total_qubits=total,
        n=n,
        logical_outputs=tuple(outputs[j] for j in range(n)),
        instructions=tuple(instrs),
        declared_depth=_schedule_depth(tuple(instrs)),
        link_steps=links,
    )


# -- execution ---------------------------------------------------------------

class _Runner:
    """Windowed executor: defers EPR/gate work until a measurement or
    conditioned correction needs the qubits, and drops measured pairs."""

    def __init__(self, program: CompiledProgram, input_state: StateVector):
        if input_state.n != program.n:
            raise ValidationError("input state size does not match program wires")
        self.program = program
        self.reg = Register()
        self.reg.load(input_state, list(range(program.n)))
        self.buffer: list[tuple[int, Instruction]] = []
        self.pc = 0
        self.outcomes: dict[str, int] = {}
        self.records: list[MeasRecord] = []
        self.prob = 1.0

    def clone(self) -> "_Runner":
        dup = object.__new__(_Runner)
        dup.program = self.program
        dup.reg = self.reg.clone()
        dup.buffer = list(self.buffer)
        dup.pc = self.pc
        dup.outcomes = dict(self.outcomes)
        dup.records = list(self.records)
        dup.prob = self.prob
        return dup

    def _ensure(self, qubits: tuple[int, ...]) -> None:
        for q in qubits:
            if q not in self.reg.qubits:
                self.reg.alloc(q)

    def _run_buffered(self, ins: Instruction) -> None:
        if ins.op is InstrOp.EPR:
            self.reg.prepare_epr(*ins.qubits)
        else:
            self._ensure(ins.qubits)
            self.reg.apply_gate(ins.gate)

    def _flush_for(self, qubits: tuple[int, ...]) -> None:
        need = set(qubits)
        chosen: set[int] = set()
        changed = True
        while changed:
            changed = False
            for idx, ins in self.buffer:
                if idx not in chosen and set(ins.qubits) & need:
                    chosen.add(idx)
                    need |= set(ins.qubits)
                    changed = True
        for idx, ins in self.buffer:
            if idx in chosen:
                self._run_buffered(ins)
        self.buffer = [(idx, ins) for idx, ins in self.buffer if idx not in chosen]

    def advance(self) -> Instruction | None:
        """Run to the next Bell measurement (returned unresolved) or to the end."""
        instrs = self.program.instructions
        while self.pc < len(instrs):
            ins = instrs[self.pc]
            if ins.op in (InstrOp.EPR, InstrOp.GATE):
                self.buffer.append((self.pc, ins))
                self.pc += 1
            elif ins.op is InstrOp.BELL:
                self._flush_for(ins.qubits)
                self._ensure(ins.qubits)
                return ins
            else:
                if poly_eval(ins.cond, self.outcomes):
                    self._flush_for(ins.qubits)
                    self._ensure(ins.qubits)
                    self.reg.apply(_COND_KINDS[ins.op], ins.qubits)
                self.pc += 1
        return None

    def resolve_bell(self, ins: Instruction, xv: int, zv: int) -> None:
        self.prob *= self.reg.project_bell(ins.qubits[0], ins.qubits[1], xv, zv)
        vx, vz = ins.out_vars
        self.outcomes[vx] = xv
        self.outcomes[vz] = zv
        self.records.append(MeasRecord(vx, vz, (xv, zv), ins.qubits))
        self.pc += 1

    def finish(self) -> StateVector:
        for _, ins in self.buffer:
            self._run_buffered(ins)
        self.buffer = []
        self._ensure(self.program.logical_outputs)
        return self.reg.extract(list(self.program.logical_outputs))


def execute(p: CompiledProgram, input_state: StateVector,
            rng: np.random.Generator) -> tuple[StateVector, ExecTranscript]:
    """Run a compiled program, sampling Bell outcomes; returns the reduced
    state on the logical output wires plus the measurement transcript."""
    runner = _Runner(p, input_state)
    while (ins := runner.advance()) is not None:
        probs = runner.reg.bell_probs(*ins.qubits)
        xv, zv = draw_bell_outcome(probs, rng)
        runner.resolve_bell(ins, xv, zv)
    out = runner.finish()
    return out, ExecTranscript(runner.records, runner.outcomes)


def enumerate_branches(p: CompiledProgram, input_state: StateVector,
                       max_outcome_bits: int = 12, cutoff: float = 1e-12) -> list[Branch]:
    """Exhaustively expand every Bell outcome of positive probability.

    Branch probabilities partition 1. Refuses programs whose measurements
    carry more than max_outcome_bits classical bits (2 per Bell measurement).
    """
    bells = sum(1 for ins in p.instructions if ins.op is InstrOp.BELL)
    if 2 * bells > max_outcome_bits:
        raise ValidationError(
            f"branch explosion: {bells} Bell measurements exceed {max_outcome_bits} outcome bits")
    leaves: list[Branch] = []

    def walk(runner: _Runner) -> None:
        ins = runner.advance()
        if ins is None:
            leaves.append(Branch(dict(runner.outcomes), runner.prob, runner.finish()))
            return
        probs = runner.reg.bell_probs(*ins.qubits)
        for xv, zv in _BELL_OUTCOMES:
            if probs[zv, xv] <= cutoff:
                continue
            child = runner.clone()
            child.resolve_bell(ins, xv, zv)
            walk(child)

    walk(_Runner(p, input_state))
    return leaves


# -- unitary conversion ------------------------------------------------------

@dataclass(frozen=True)
class BellGroup:
    """Bookkeeping for one converted Bell measurement: the flat-gate index
    just past its copy block and the four write-once qubits involved."""

    gate_end: int
    r: int
    s: int
    anc_z: int
    anc_x: int


@dataclass
class UnitaryProgram:
    circuit: LayeredCircuit
    total_qubits: int
    n: int
    logical_outputs: tuple[int, ...]
    var_qubits: dict[str, int]
    bell_groups: tuple[BellGroup, ...]


def _cs_dag(a: int, q: int) -> list[Gate]:
    # controlled-P-dagger: diag(1,1,1,-i) on (control a, target q)
    return [pdg(a), t(a), pdg(q), t(q), cnot(a, q), t(q), cnot(a, q)]


def _cz(a: int, q: int) -> list[Gate]:
    return [h(q), cnot(a, q), h(q)]


def _tdg(q: int) -> list[Gate]:
    return [pdg(q), t(q)]


def _ccz(a: int, b: int, c: int) -> list[Gate]:
    return [cnot(b, c), *_tdg(c), cnot(a, c), t(c), cnot(b, c), *_tdg(c), cnot(a, c), t(c),
            t(a), t(b), cnot(a, b), *_tdg(b), cnot(a, b)]


def _ccx(a: int, b: int, c: int) -> list[Gate]:
    return [h(c), *_ccz(a, b, c), h(c)]


def _mono_controls(mono, var_qubits: dict[str, int]) -> list[int]:
    names = sorted(v.name for v in mono)
    missing = [name for name in names if name not in var_qubits]
    if missing:
        raise ValidationError(f"condition references unmeasured variable {missing[0]!r}")
    return [var_qubits[name] for name in names]


def _expand_cond(ins: Instruction, var_qubits: dict[str, int], scratch: list[int],
                 alloc_scratch) -> list[Gate]:
    q = ins.qubits[0]
    cond = ins.cond
    if cond.degree > 2:
        raise ValidationError("condition degree > 2 cannot be converted to controlled gates")
    monos = sorted(cond.monomials, key=lambda m: sorted(v.name for v in m))
    gates: list[Gate] = []
    if ins.op is InstrOp.COND_X:
        for mono in monos:
            ctrls = _mono_controls(mono, var_qubits)
            gates += [cnot(ctrls[0], q)] if len(ctrls) == 1 else _ccx(ctrls[0], ctrls[1], q)
        if cond.constant:
            gates.append(x(q))
        return gates
    if ins.op is InstrOp.COND_Z:
        for mono in monos:
            ctrls = _mono_controls(mono, var_qubits)
            gates += _cz(ctrls[0], q) if len(ctrls) == 1 else _ccz(ctrls[0], ctrls[1], q)
        if cond.constant:
            gates.append(z(q))
        return gates
    # Conditioned P-dagger. XOR of conditions is not a product of the per-term
    # gates, so cross corrections apply: (Pdg)^(u xor v) = (Pdg)^u (Pdg)^v Z^(uv).
    degrees = [len(m) for m in monos]
    if all(d <= 1 for d in degrees):
        ctrls = [_mono_controls(m, var_qubits)[0] for m in monos]
        for ctrl in ctrls:
            gates += _cs_dag(ctrl, q)
        for i, j in itertools.combinations(range(len(ctrls)), 2):
            gates += _ccz(ctrls[i], ctrls[j], q)
        if cond.constant:
            gates.append(pdg(q))
            for ctrl in ctrls:
                gates += _cz(ctrl, q)
        return gates
    if len(monos) == 1 and degrees[0] == 2:
        u, v = _mono_controls(monos[0], var_qubits)
        s = alloc_scratch()
        gates += _ccx(u, v, s) + _cs_dag(s, q) + _ccx(u, v, s)
        if cond.constant:
            gates.append(pdg(q))
            gates += _ccz(u, v, q)
        return gates
    raise ValidationError("conditioned P-dagger with degree-2 terms mixed into a sum "
                          "is not supported in unitary mode")


def to_unitary(p: CompiledProgram) -> UnitaryProgram:
    """Deferred-measurement transform of a measure-mode program.

    Each Bell measurement becomes its basis rotation (CNOT, H) followed by
    coherent copies of the two outcome bits onto fresh ancillas; the measured
    qubits are left in the rotated basis and never touched again. Conditioned
    corrections become gates controlled on the ancillas, decomposed over the
    base gate alphabet. Discarding ancillas, the circuit acts on the logical
    wires exactly as the measured program does on every branch.
    """
    gates: list[Gate] = []
    var_qubits: dict[str, int] = {}
    groups: list[BellGroup] = []
    next_q = p.total_qubits
    scratch: list[int] = []

    def alloc_scratch() -> int:
        nonlocal next_q
        if not scratch:
            scratch.append(next_q)
            next_q += 1
        return scratch[0]

    for ins in p.instructions:
        if ins.op is InstrOp.EPR:
            a, b = ins.qubits
            gates += [h(a), cnot(a, b)]
        elif ins.op is InstrOp.GATE:
            gates.append(ins.gate)
        elif ins.op is InstrOp.BELL:
            r, s = ins.qubits
            vx, vz = ins.out_vars
            anc_z, anc_x = next_q, next_q + 1
            next_q += 2
            var_qubits[vz] = anc_z
            var_qubits[vx] = anc_x
            gates += [cnot(r, s), h(r), cnot(r, anc_z), cnot(s, anc_x)]
            groups.append(BellGroup(len(gates), r, s, anc_z, anc_x))
        else:
            gates += _expand_cond(ins, var_qubits, scratch, alloc_scratch)

    circuit = layerize(gates, max(next_q, 1))
    return UnitaryProgram(
        circuit=circuit,
        total_qubits=next_q,
        n=p.n,
        logical_outputs=p.logical_outputs,
        var_qubits=var_qubits,
        bell_groups=tuple(groups),
    )


def serialize_circuit_of_unitary(up: UnitaryProgram) -> str:
    """Circuit-file text of a converted program; output wires go in comments."""
    from .circuits import serialize_circuit

    text = serialize_circuit(up.circuit)
    lines = [f"# OUT {j} {q}" for j, q in enumerate(up.logical_outputs)]
    return text + "\n".join(lines) + ("\n" if lines else "")


_DIAGONAL_1Q = frozenset({GateKind.P, GateKind.PDG, GateKind.Z, GateKind.T})


def _apply_hybrid(reg: Register, classical: dict[int, int], g: Gate) -> None:
    """Apply a gate where some qubits may have been measured off to classical bits."""
    qs = g.targets
    if not any(q in classical for q in qs):
        for q in qs:
            if q not in reg.qubits:
                reg.alloc(q)
        reg.apply_gate(g)
        return
    if g.kind is GateKind.CNOT:
        c, tgt = qs
        if c in classical and tgt in classical:
            classical[tgt] ^= classical[c]
        elif c in classical:
            if classical[c]:
                if tgt not in reg.qubits:
                    reg.alloc(tgt)
                reg.apply(GateKind.X, (tgt,))
        else:
            raise ValidationError("CNOT from a quantum qubit onto a measured qubit")
    elif g.kind is GateKind.X:
        classical[qs[0]] ^= 1
    elif g.kind in _DIAGONAL_1Q:
        pass  # branch-global phase only
    else:
        raise ValidationError(f"{g.kind.value} on a measured qubit")


def enumerate_unitary_branches(up: UnitaryProgram, input_state: StateVector,
                               cutoff: float = 1e-12) -> list[Branch]:
    """Branch enumeration for a converted circuit.

    After each Bell copy block the four qubits involved are only ever reused
    as controls of controlled gates or under diagonal gates, so measuring
    them there commutes with the remainder of the circuit. Gates are buffered
    and flushed only when a measurement or the output extraction needs their
    qubits' light cone, which keeps the simulation window small; buffered
    gates left over at the end act on qubits disjoint from the outputs' cone
    and cannot affect the extracted state.
    """
    gates = flatten(up.circuit)
    var_of_qubit = {q: v for v, q in up.var_qubits.items()}
    leaves: list[Branch] = []
    Buffer = list[tuple[int, Gate]]

    def flush_for(reg: Register, classical: dict[int, int], buffer: Buffer,
                  qubits) -> Buffer:
        need = set(qubits)
        chosen: set[int] = set()
        changed = True
        while changed:
            changed = False
            for idx, g in buffer:
                if idx not in chosen and set(g.targets) & need:
                    chosen.add(idx)
                    need |= set(g.targets)
                    changed = True
        for idx, g in buffer:
            if idx in chosen:
                _apply_hybrid(reg, classical, g)
        return [(idx, g) for idx, g in buffer if idx not in chosen]

    def run(reg: Register, classical: dict[int, int], buffer: Buffer, gi: int,
            group_idx: int, prob: float, outcomes: dict[str, int]) -> None:
        end = up.bell_groups[group_idx].gate_end if group_idx < len(up.bell_groups) else len(gates)
        buffer = buffer + [(i, gates[i]) for i in range(gi, end)]
        if group_idx == len(up.bell_groups):
            flush_for(reg, classical, buffer, up.logical_outputs)
            for q in up.logical_outputs:
                if q not in reg.qubits:
                    reg.alloc(q)
            leaves.append(Branch(outcomes, prob, reg.extract(list(up.logical_outputs))))
            return
        grp = up.bell_groups[group_idx]
        order = (grp.r, grp.s, grp.anc_z, grp.anc_x)
        buffer = flush_for(reg, classical, buffer, order)
        for q in order:
            if q not in reg.qubits:
                reg.alloc(q)

        def measure_seq(reg: Register, classical: dict[int, int], idx: int,
                        prob: float, outcomes: dict[str, int]) -> None:
            if idx == len(order):
                run(reg, classical, buffer, end, group_idx + 1, prob, outcomes)
                return
            q = order[idx]
            probs = reg.measure_probs(q)
            live = [bit for bit in (0, 1) if probs[bit] > cutoff]
            for bit in live:
                if len(live) == 1:
                    child, child_cls, child_out = reg, classical, outcomes
                else:
                    child, child_cls, child_out = reg.clone(), dict(classical), dict(outcomes)
                child.project_qubit(q, bit)
                child_cls[q] = bit
                if q in var_of_qubit:
                    child_out[var_of_qubit[q]] = bit
                measure_seq(child, child_cls, idx + 1, prob * float(probs[bit]), child_out)

        measure_seq(reg, classical, 0, prob, outcomes)

    reg = Register()
    reg.load(input_state, list(range(up.n)))
    run(reg, {}, [], 0, 0, 1.0, {})
    return leaves


# -- speculative grouped execution for classical circuits --------------------

@dataclass(frozen=True)
class SpecBranch:
    guess: tuple[int, ...]
    output_bits: tuple[int, ...]


@dataclass
class GroupSpec:
    stages: tuple[Stage, ...]
    input_bits: tuple[int, ...]
    boundaries: tuple[tuple[int, ...], ...]
    branches: tuple[SpecBranch, ...]
    selector: dict[tuple[int, ...], int]

    def select(self, realized: tuple[int, ...]) -> int:
        if realized not in self.selector:
            raise ValidationError(f"selector mismatch: no branch for realized bits {realized}")
        return self.selector[realized]


@dataclass
class SpeculativeProgram:
    n: int
    r: int
    stage_count: int
    input_bits: tuple[int, ...]
    groups: tuple[GroupSpec, ...]


@dataclass
class SpecSelection:
    group: int
    realized: tuple[int, ...]
    branch: int


@dataclass
class SpecTranscript:
    link_outcomes: dict[str, int]
    selections: list[SpecSelection]


@dataclass(frozen=True)
class SpecReport:
    critical_path: int
    stage_count: int
    group_count: int
    branch_counts: tuple[int, ...]
    total_copies: int
    max_branch_factor: int


_MAX_SPEC_BRANCHES = 2 ** 16


def _bits_of_basis_state(state: StateVector, context: str) -> tuple[int, ...]:
    probs = np.abs(state.amps) ** 2
    idx = int(np.argmax(probs))
    if probs[idx] < 1.0 - 1e-9:
        raise ValidationError(f"{context}: state is not a basis state (circuit is not classical here)")
    return tuple((idx >> (state.n - 1 - j)) & 1 for j in range(state.n))


def _apply_stage(state: StateVector, st: Stage) -> StateVector:
    for g in st.clifford:
        state = apply_gate(state, g)
    for q in sorted(st.t_layer):
        state = apply_gate(state, t(q))
    return state


def compile_speculative(c: LayeredCircuit, r: int, input_bits: str | tuple[int, ...]) -> SpeculativeProgram:
    """Group stages r at a time and pre-evaluate every guessed-correction branch.

    Requires a circuit whose stages map the realized basis input to basis
    outputs (up to phase); the oracle verifies this stage by stage. At each
    boundary inside a group, all assignments of the pending correction bits on
    that boundary's T layer are enumerated; boundaries between groups are real
    links whose corrections are applied exactly, not guessed.
    """
    validate(c)
    if r < 1:
        raise ValidationError("group size r must be at least 1")
    bits = tuple(int(b) for b in input_bits)
    if len(bits) != c.n or any(b not in (0, 1) for b in bits):
        raise ValidationError(f"input must be a {c.n}-bit classical string")

    state = init_state(c.n, "".join(map(str, bits)))
    stage_inputs = [bits]
    for i, st in enumerate(c.stages):
        state = _apply_stage(state, st)
        stage_inputs.append(_bits_of_basis_state(state, f"stage {i + 1}"))

    groups: list[GroupSpec] = []
    for g0 in range(0, len(c.stages), r):
        stages = c.stages[g0:g0 + r]
        boundaries = tuple(tuple(sorted(st.t_layer)) for st in stages[:-1])
        width = sum(len(b) for b in boundaries)
        if 2 ** width > _MAX_SPEC_BRANCHES:
            raise ValidationError(f"group at stage {g0 + 1} needs {2 ** width} branches; "
                                  f"guard is {_MAX_SPEC_BRANCHES}")
        u = stage_inputs[g0]
        branches: list[SpecBranch] = []
        selector: dict[tuple[int, ...], int] = {}
        for guess in itertools.product((0, 1), repeat=width):
            gstate = init_state(c.n, "".join(map(str, u)))
            pos = 0
            for si, st in enumerate(stages):
                gstate = _apply_stage(gstate, st)
                if si < len(stages) - 1:
                    for q in boundaries[si]:
                        if guess[pos]:
                            gstate = apply_gate(gstate, pdg(q))
                        pos += 1
            out_bits = _bits_of_basis_state(gstate, f"group at stage {g0 + 1}")
            selector[guess] = len(branches)
            branches.append(SpecBranch(guess, out_bits))
        groups.append(GroupSpec(stages, u, boundaries, tuple(branches), selector))

    return SpeculativeProgram(c.n, r, len(c.stages), bits, tuple(groups))


def execute_speculative(sp: SpeculativeProgram,
                        rng: np.random.Generator) -> tuple[str, SpecTranscript, SpecReport]:
    """Sequential link-by-link run: draw teleport outcomes between groups,
    track the concrete mask, compute the realized in-group correction bits,
    and select the matching pre-evaluated branch of each group."""
    n = sp.n
    uniform = np.full((2, 2), 0.25)
    a = [0] * n
    b = [0] * n
    outcomes: dict[str, int] = {}
    selections: list[SpecSelection] = []
    selected_bits = sp.input_bits
    for m, grp in enumerate(sp.groups):
        if m > 0:
            for j in range(n):
                xv, zv = draw_bell_outcome(uniform, rng)
                outcomes[f"L{m}q{j}x"] = xv
                outcomes[f"L{m}q{j}z"] = zv
                a[j] ^= xv
                b[j] ^= zv
        realized: list[int] = []
        for si, st in enumerate(grp.stages):
            tab = tableau_from_stage(st.clifford, n)
            vec = apply_tableau(tab, PauliMask(tuple(a), tuple(b)))
            a, b = list(vec.a), list(vec.b)
            _, pending = commute_through_t_layer(PauliMask(tuple(a), tuple(b)), st.t_layer)
            if si < len(grp.stages) - 1:
                realized.extend(pending[q] for q in sorted(st.t_layer))
            # Pending keys at the group's final boundary are corrected exactly
            # at link time, so they are never guessed.
        branch_idx = grp.select(tuple(realized))
        selections.append(SpecSelection(m, tuple(realized), branch_idx))
        selected_bits = grp.branches[branch_idx].output_bits
    counts = tuple(len(g.branches) for g in sp.groups)
    rep = SpecReport(
        critical_path=len(sp.groups),
        stage_count=sp.stage_count,
        group_count=len(sp.groups),
        branch_counts=counts,
        total_copies=sum(counts),
        max_branch_factor=max(counts),
    )
    return "".join(map(str, selected_bits)), SpecTranscript(outcomes, selections), rep
