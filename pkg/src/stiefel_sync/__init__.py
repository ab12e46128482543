"""Simulation and certification toolkit for consensus flows on orthonormal frames.

Library layers: ``manifold`` (points, tangents, retraction, sampling),
``graph`` (interaction topologies), ``dynamics`` (the coupled gradient flow
and its integration), ``analysis`` (potential, equilibrium and spectral
certificates, the pair objective and its integer-program reductions), and
``harness``/``cli`` (batch experiments with CSV/JSON/PNG reports).
"""

from .analysis import (
    AscentResult,
    EquilibriumCertificate,
    IntegerProgramResult,
    LagrangeReport,
    MinlpResult,
    SpectralCertificate,
    certify_equilibrium,
    escape_direction,
    lagrange_residual,
    lambda_star,
    lambda_star_from_trace,
    m_minus_upper_bound,
    maximize_f,
    pair_objective_f,
    potential,
    quadratic_form_q,
    solve_integer_program,
    solve_minlp,
    spectral_certificate,
    synchronization_bound,
    trace_M,
)
from .dynamics import (
    FlowConfig,
    SwarmState,
    TerminationReason,
    Trajectory,
    circle_angles,
    embed_circle,
    gradient_rhs,
    homogeneous_rhs,
    integrate,
    integrate_homogeneous,
    kuramoto_rhs,
    max_edge_distance,
    random_swarm,
    step_flow,
    twisted_orbit_distance,
    twisted_state,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DimensionError,
    GraphError,
    IntegrationError,
    NotEquilibriumError,
    RetractionError,
)
from .graph import Graph, complete, cycle, from_spec, is_connected, path, random_connected
from .harness import (
    ExperimentConfig,
    TrialResult,
    emit_results,
    load_config,
    run_certification,
    run_counterexample,
    run_experiment,
    run_monte_carlo,
)
from .manifold import (
    ORTH_TOL,
    StiefelPoint,
    TangentVector,
    chordal_distance,
    polar_factor,
    project_tangent,
    random_stiefel,
    retract,
    skew,
    sym,
    validate,
)

__version__ = "0.1.0"
