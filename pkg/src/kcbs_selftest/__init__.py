"""Certified fidelity bounds for the five-cycle contextuality self-test.

The package turns an observed witness value into a certified lower bound on
the total fidelity of state and measurements to the ideal five-cycle
configuration: a swap circuit built from the measurement letters gives a
linear objective over operator words, a moment-matrix relaxation with a
localizing block turns that into a semidefinite program, and a splitting
solver (or an SDPA export) produces bounds with explicit residual
corrections.  Experiment-side tooling covers witness estimation, noise
metrics, tomography, and direct fidelity accounting.
"""

from .analysis import (
    ExperimentCounts,
    IsometryFit,
    NoiseReport,
    StreamReport,
    TriangleBound,
    WitnessEstimate,
    context_of,
    context_stream_check,
    dump_counts,
    estimate,
    fidelity,
    load_counts,
    load_frequencies,
    noise_metrics,
    optimal_isometry_fidelity,
    povm_tomography,
    probe_frequencies,
    probe_kets,
    state_tomography,
    triangle_lower_bound,
)
from .isometry import (
    ObjectiveFunctional,
    SpanDeficiencyError,
    SwapBlocks,
    TranslationDecomposition,
    aligned_realization,
    build_swap_blocks,
    decompose_translation,
    numeric_swap_check,
    objective_coefficients,
)
from .model import (
    DensityMatrix,
    KcbsConfiguration,
    classical_value,
    config_from_json,
    config_to_json,
    depolarized_state,
    depolarized_state_ninth,
    ideal_configuration,
    quantum_value,
    tilted_configuration,
    witness_value,
)
from .moments import (
    CertificateReport,
    IndexExtensionError,
    MomentProblem,
    assemble,
    assemble_max_witness,
    build_index,
    build_moment_constraints,
    certify,
    fidelity_problem,
    ideal_moment_vector,
)
from .sdpa import export_sdpa, load_manifest, parse_sdpa, problem_from_manifest
from .simulate import sample_counts, sample_stream, sequential_distribution
from .solver import SolveResult, SolverSettings, solve
from .words import NcPoly, Word, adjoint, canonicalize, evaluate, multiply

__version__ = "0.1.0"

__all__ = [
    "CertificateReport",
    "DensityMatrix",
    "ExperimentCounts",
    "IndexExtensionError",
    "IsometryFit",
    "KcbsConfiguration",
    "MomentProblem",
    "NcPoly",
    "NoiseReport",
    "ObjectiveFunctional",
    "SolveResult",
    "SolverSettings",
    "SpanDeficiencyError",
    "StreamReport",
    "SwapBlocks",
    "TranslationDecomposition",
    "TriangleBound",
    "WitnessEstimate",
    "Word",
    "adjoint",
    "aligned_realization",
    "assemble",
    "assemble_max_witness",
    "build_index",
    "build_moment_constraints",
    "build_swap_blocks",
    "canonicalize",
    "certify",
    "classical_value",
    "config_from_json",
    "config_to_json",
    "context_of",
    "context_stream_check",
    "decompose_translation",
    "depolarized_state",
    "depolarized_state_ninth",
    "dump_counts",
    "estimate",
    "evaluate",
    "export_sdpa",
    "fidelity",
    "fidelity_problem",
    "ideal_configuration",
    "ideal_moment_vector",
    "load_counts",
    "load_frequencies",
    "load_manifest",
    "multiply",
    "noise_metrics",
    "numeric_swap_check",
    "objective_coefficients",
    "optimal_isometry_fidelity",
    "parse_sdpa",
    "povm_tomography",
    "probe_frequencies",
    "probe_kets",
    "problem_from_manifest",
    "quantum_value",
    "sample_counts",
    "sample_stream",
    "sequential_distribution",
    "solve",
    "state_tomography",
    "tilted_configuration",
    "triangle_lower_bound",
    "witness_value",
]
