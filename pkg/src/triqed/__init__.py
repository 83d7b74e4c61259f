"""Open-system simulator for entangling state transfer in a three-channel
cavity QED chain (field qubits -> cavity modes -> atoms) with dissipation."""

from .tensor import (
    Channel,
    DensityMatrix,
    HilbertSpace,
    OperatorMatrix,
    SiteIndex,
    SiteKind,
    StateVector,
    embed,
    embed_product,
    expectation,
    partial_trace,
    partial_transpose,
    trace_distance,
)
from .model import (
    InputStateSpec,
    ModelParams,
    TAU_OFF_DEFAULT,
    collapse_operators,
    effective_hamiltonian,
    initial_state,
    interaction_hamiltonian,
    local_phase_rotation,
)
from .dynamics import (
    TimeGrid,
    lindblad_exact,
    mcwf_ensemble,
    mcwf_reduced_ensemble,
    mcwf_trajectory,
)
from .factorized import factorized_evolution, product_reduced_trajectory
from .metrics import (
    ClassLabel,
    classify,
    fidelity_to_map,
    negativity,
    purity,
    tripartite_negativity,
    witness_expectations,
)
from .config import OBSERVABLE_COLUMNS, ScenarioConfig, SolverKind, load_config
from .runner import (
    MapSubsystem,
    PeakKind,
    RateKind,
    classification_map,
    dissipation_sweep,
    fit_exponential,
    peak_times,
    run_scenario,
    validate,
)

__version__ = "0.1.0"
