"""Clifford+T toolkit: teleportation-linked depth compilation, a statevector
oracle, and the simplified garden-hose gadget with its two-party protocol."""

from .circuits import (
    DepthMetrics,
    Gate,
    GateKind,
    LayeredCircuit,
    ParseError,
    Stage,
    ValidationError,
    depth_metrics,
    flatten,
    layerize,
    parse_circuit,
    serialize_circuit,
    validate,
)
from .compiler import (
    Branch,
    CompiledProgram,
    Instruction,
    InstrOp,
    ResourceReport,
    SpeculativeProgram,
    compile_measure,
    compile_speculative,
    enumerate_branches,
    enumerate_unitary_branches,
    execute,
    execute_speculative,
    parse_program,
    report,
    serialize_program,
    to_unitary,
)
from .frames import (
    CliffordTableau,
    KeyPoly,
    OutcomeVar,
    Owner,
    PauliMask,
    SymbolicMask,
    apply_tableau,
    commute_through_pdag,
    commute_through_t_layer,
    cross_terms,
    poly_eval,
    tableau_from_stage,
)
from .gardenhose import (
    CrossTermReport,
    GadgetLayout,
    GadgetResult,
    ProtocolTranscript,
    ResourcePlan,
    analyze_cross_terms,
    bridge_teleport,
    causality_check,
    gadget_truth_table,
    run_gadget,
    run_protocol1,
)
from .oracle import (
    MeasRecord,
    Register,
    StateVector,
    apply_circuit,
    apply_gate,
    apply_mask,
    bell_branches,
    bell_measure,
    fidelity_up_to_phase,
    init_state,
    prepare_epr,
)

__version__ = "0.1.0"
