import numpy as np
import pytest

from conftest import gates_matrix, random_circuit, random_state
from tlink.circuits import GateKind, ValidationError, flatten, parse_circuit
from tlink.compiler import (
    CompiledProgram,
    Instruction,
    InstrOp,
    UnitaryProgram,
    _ccx,
    _ccz,
    _cs_dag,
    _schedule_depth,
    compile_measure,
    enumerate_unitary_branches,
    to_unitary,
)
from tlink.frames import KeyPoly, OutcomeVar
from tlink.oracle import Register, apply_circuit, fidelity_up_to_phase, init_state


def make_program(total, n, outputs, instrs):
    instrs = tuple(instrs)
    return CompiledProgram(total, n, tuple(outputs), instrs, _schedule_depth(instrs), 0)


def run_unitary_coherently(up: UnitaryProgram, psi):
    """Plain full-width simulation of the converted circuit, no measurements."""
    assert up.total_qubits <= 14
    reg = Register()
    reg.load(psi, list(range(up.n)))
    for q in range(up.n, up.total_qubits):
        reg.alloc(q)
    for g in flatten(up.circuit):
        reg.apply_gate(g)
    return reg.extract(list(up.logical_outputs))


class TestDecompositions:
    def test_controlled_pdg_exact(self):
        got = gates_matrix(_cs_dag(0, 1), 2)
        assert np.allclose(got, np.diag([1, 1, 1, -1j]))

    def test_ccz_exact(self):
        got = gates_matrix(_ccz(0, 1, 2), 3)
        want = np.diag([1, 1, 1, 1, 1, 1, 1, -1])
        assert np.allclose(got, want)

    def test_ccx_exact(self):
        got = gates_matrix(_ccx(0, 1, 2), 3)
        want = np.eye(8, dtype=complex)
        want[[6, 7]] = want[[7, 6]]
        assert np.allclose(got, want)


class TestConversionStructure:
    def test_no_measurements_passes_gates_through(self):
        c = parse_circuit("QUBITS 2\nH 0\nCNOT 0 1\nT 1\n---")
        prog = compile_measure(c)
        up = to_unitary(prog)
        assert flatten(up.circuit) == [ins.gate for ins in prog.instructions]
        assert up.total_qubits == prog.total_qubits

    def test_bell_becomes_rotation_and_copies(self):
        prog = make_program(3, 1, [2], [
            Instruction(InstrOp.EPR, (1, 2)),
            Instruction(InstrOp.BELL, (0, 1), out_vars=("m0x", "m0z")),
        ])
        up = to_unitary(prog)
        kinds = [g.kind.value for g in flatten(up.circuit)]
        assert kinds == ["H", "CNOT", "CNOT", "H", "CNOT", "CNOT"]
        assert up.var_qubits == {"m0z": 3, "m0x": 4}
        assert len(up.bell_groups) == 1

    def test_condition_degree_guard(self):
        u, v, w = (OutcomeVar(s) for s in ("u", "v", "w"))
        cond = KeyPoly(frozenset({frozenset({u, v, w})}))
        prog = make_program(1, 1, [0], [
            Instruction(InstrOp.EPR, (1, 2)),  # defines nothing; decoy
            Instruction(InstrOp.COND_X, (0,), cond=cond),
        ])
        with pytest.raises(ValidationError, match="degree > 2"):
            to_unitary(prog)


class TestTeleportOnly:
    def test_acts_as_identity(self, rng):
        prog = make_program(3, 1, [2], [
            Instruction(InstrOp.EPR, (1, 2)),
            Instruction(InstrOp.BELL, (0, 1), out_vars=("m0x", "m0z")),
            Instruction(InstrOp.COND_X, (2,), cond=KeyPoly.of(OutcomeVar("m0x"))),
            Instruction(InstrOp.COND_Z, (2,), cond=KeyPoly.of(OutcomeVar("m0z"))),
        ])
        up = to_unitary(prog)
        psi = random_state(rng, 1)
        assert fidelity_up_to_phase(run_unitary_coherently(up, psi), psi) >= 1 - 1e-10
        for b in enumerate_unitary_branches(up, psi):
            assert fidelity_up_to_phase(b.state, psi) >= 1 - 1e-10


class TestAgainstDirectUnitary:
    def test_full_coherence_small_circuits(self, rng):
        # Whole converted circuit simulated with no measurement shortcuts.
        cases = [
            "QUBITS 1\nH 0\nT 0\n---\nP 0\nT 0\n---\nH 0\nT 0\n---",
            "QUBITS 1\nT 0\n---\nH 0\nT 0\n---\nH 0\n---",
            "QUBITS 2\nH 0\nCNOT 0 1\nT 1\n---\nCNOT 1 0\nT 0\n---",
        ]
        for text in cases:
            c = parse_circuit(text)
            up = to_unitary(compile_measure(c))
            psi = random_state(rng, c.n)
            out = run_unitary_coherently(up, psi)
            assert fidelity_up_to_phase(out, apply_circuit(psi, c)) >= 1 - 1e-10

    def test_branch_harness_matches_coherent_run(self, rng):
        c = parse_circuit("QUBITS 1\nT 0\n---\nH 0\nT 0\n---\nH 0\n---")
        up = to_unitary(compile_measure(c))
        psi = random_state(rng, 1)
        coherent = run_unitary_coherently(up, psi)
        branches = enumerate_unitary_branches(up, psi)
        assert sum(b.probability for b in branches) == pytest.approx(1.0, abs=1e-10)
        for b in branches:
            assert fidelity_up_to_phase(b.state, coherent) >= 1 - 1e-10

    def test_random_n2_k3(self, rng):
        for _ in range(6):
            c = random_circuit(rng, 2, 3)
            psi = random_state(rng, 2)
            ref = apply_circuit(psi, c)
            up = to_unitary(compile_measure(c))
            for b in enumerate_unitary_branches(up, psi):
                assert fidelity_up_to_phase(b.state, ref) >= 1 - 1e-10


class TestDegreeTwoConditions:
    def _two_var_program(self, op):
        # Teleport twice, undo the accumulated mask, then apply the gate
        # conditioned on the product of the two x outcomes.
        mx = [KeyPoly.of(OutcomeVar(f"m{i}x")) for i in (0, 1)]
        mz = [KeyPoly.of(OutcomeVar(f"m{i}z")) for i in (0, 1)]
        return make_program(5, 1, [4], [
            Instruction(InstrOp.EPR, (1, 2)),
            Instruction(InstrOp.EPR, (3, 4)),
            Instruction(InstrOp.BELL, (0, 1), out_vars=("m0x", "m0z")),
            Instruction(InstrOp.BELL, (2, 3), out_vars=("m1x", "m1z")),
            Instruction(InstrOp.COND_X, (4,), cond=mx[0] ^ mx[1]),
            Instruction(InstrOp.COND_Z, (4,), cond=mz[0] ^ mz[1]),
            Instruction(op, (4,), cond=mx[0] * mx[1]),
        ])

    @pytest.mark.parametrize("op", [InstrOp.COND_X, InstrOp.COND_Z, InstrOp.COND_PDG])
    def test_degree_two_matches_measured_semantics(self, op, rng):
        from tlink.compiler import enumerate_branches
        prog = self._two_var_program(op)
        psi = random_state(rng, 1)
        measured = {tuple(sorted(b.outcomes.items())): b.state
                    for b in enumerate_branches(prog, psi)}
        up = to_unitary(prog)
        branches = enumerate_unitary_branches(up, psi)
        assert sum(b.probability for b in branches) == pytest.approx(1.0, abs=1e-10)
        for b in branches:
            ref = measured[tuple(sorted(b.outcomes.items()))]
            assert fidelity_up_to_phase(b.state, ref) >= 1 - 1e-10
