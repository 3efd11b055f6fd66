"""Sparse error-generator tomography for n-qubit Clifford gate sets.

Builds first-order design matrices from shallow random circuits and Z-type
Pauli observables, and recovers Hamiltonian / stochastic error-generator
rates by pseudoinverse and non-negative least squares.  Includes exact dense
and order-k propagation simulators for synthetic validation data.
"""

from .circuits import Circuit, GateApp, circuit_from_layers
from .design import (
    DesignMatrix,
    ExperimentDesign,
    build_design,
    enumerate_observables,
    grow_until_full_rank,
    make_design,
    rank_report,
    sample_random_circuit,
)
from .errormodel import (
    ElementaryGenerator,
    ErrorModel,
    GateErrorSpec,
    RateVector,
    build_paper_model,
    build_random_model,
    layer_lindbladian,
    validate_model,
)
from .errors import (
    BackendError,
    DataError,
    DesignError,
    DimensionError,
    LingstError,
    ModelError,
    PhaseError,
)
from .gates import embedded_gate, gate_tableau, layer_tableau
from .paulis import (
    CliffordTableau,
    PauliString,
    StabilizerState,
    apply_layer,
    commutes,
    conjugate,
    pauli_mul,
    stabilizer_sign,
)
from .propagation import (
    PropagatedGenerator,
    SensitivityRow,
    h_trace,
    ideal_final_state,
    propagate_all,
    s_trace,
    sensitivity_row,
)
from .simulator import (
    SimDataset,
    SimulatorConfig,
    add_shot_noise,
    generate_dataset,
    simulate_dense,
    simulate_taylor,
)
from .solver import (
    Estimate,
    HSolution,
    ObservationVector,
    SSolution,
    estimate_uncertainty,
    fit,
    solve_hamiltonian,
    solve_stochastic,
)

__version__ = "0.1.0"
