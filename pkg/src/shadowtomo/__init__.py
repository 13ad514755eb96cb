"""Classical shadow tomography with finite-depth brick-wall Clifford circuits.

The package simulates randomized measurements on stabilizer states, evolves
the snapshot ensemble's entanglement feature as a small periodic MPS, solves
the shadow reconstruction coefficients variationally, and turns snapshot
stores into estimates of Pauli observables, generic Pauli-basis operators,
fidelities and shadow norms.
"""

from .tensor_core import (
    PauliBasisMPS,
    StructureError,
    SubsetMPS,
    apply_two_site_operator_and_truncate,
    mps_evaluate,
    mps_overlap,
    pauli_mps_evaluate,
)
from .stabilizer import (
    CircuitSpec,
    CliffordGate1Q,
    CliffordGate2Q,
    ExtentCapError,
    PauliString,
    SnapshotFormatError,
    SnapshotRecord,
    SnapshotStore,
    StabilizerState,
    load_stabilizer_state,
    pauli_expectation,
    run_protocol,
    sample_clifford_1q,
    sample_clifford_2q,
    save_stabilizer_state,
    stabilizer_to_pauli_mps,
    subset_purity,
)
from .ef_dynamics import (
    EFState,
    GateEFTransfer,
    dump_ef_components,
    ef_component,
    ef_product_state,
    evolve_snapshot_ef,
    haar_gate_ef_transfer,
    page_ef_state,
)
from .reconstruction import (
    FUSION_TABLE,
    FusionTensor,
    IncompleteEnsembleError,
    ReconstructionMPS,
    apply_inverse_channel_dense,
    brute_force_r,
    closed_form_r_clifford,
    closed_form_r_pauli,
    consistency_loss,
    load_r,
    pauli_eigen_coefficient,
    r_table_from_mps,
    ring_coefficient,
    save_r,
    solve_chain,
    solve_r,
)
from .estimation import (
    EstimateResult,
    ObservableSpec,
    estimate_fidelity,
    estimate_observable,
    estimate_pauli,
    median_of_means,
)
from .shadow_norm import (
    DepthScanResult,
    OperatorEF,
    depth_scan,
    fit_optimal_depth,
    pauli_shadow_norm_from_ef,
    shadow_norm_general,
)

__version__ = "0.1.0"
