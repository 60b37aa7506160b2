"""entseq: synthesis of noise-robust perfect entanglers from local rotations
interleaved between weakly entangling two-qubit slices."""

from .gate_algebra import (
    expm_hermitian,
    local_rotation,
    pauli_product,
    trace_fidelity,
)
from .weyl_geometry import (
    canonical_gate,
    cartan_decompose,
    cubic_roots,
    makhlin_invariants,
    pe_distance_d,
    pe_fidelity,
    pe_functional_D,
    w1_indicator_s,
    weyl_coordinates,
)
from .noise_model import (
    ALL_CHANNELS,
    NoiseConfig,
    NoiseRealization,
    RtnTrace,
    TWO_LOCAL_CHANNELS,
    calibrate_amplitude,
    estimate_local_fidelity,
    make_ensemble,
    perturb_angles,
    rtn_value,
    sample_one_over_f,
    sample_quasistatic,
)
from .sequence_engine import (
    EnsembleMetrics,
    SequenceParams,
    evaluate_solution,
    evolve,
    gate_error,
    target_gate,
    zz_phase_slice,
)
from .optimizer import (
    OptimizationResult,
    OptimizerConfig,
    SolutionStore,
    cascade_optimize,
    finite_difference_gradient,
    initialize_guess,
    minimize,
    objective_J,
)

__version__ = "0.1.0"
