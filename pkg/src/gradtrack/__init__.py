"""Distributed gradient tracking over time-varying networks.

Simulation engine for consensus-based first-order methods in which every node
tracks the network-average gradient, with interchangeable tracking terms,
per-node step-size policies (constant, curvature-matching spectral rule,
backtracking line search) and doubly stochastic mixing sequences.  Companion
tools compute the convergence-constant machinery of the small-gain analysis
and drive a reproducible experiment harness.
"""

from gradtrack.method import (
    IterateState,
    RunStatus,
    StepKind,
    StepPolicy,
    TrackingKind,
    TrackingVariant,
    Trajectory,
    constant_steps,
    init_state,
    iterate,
    line_search_steps,
    rlinear_certificate,
    run,
    spectral_steps,
    trajectory_to_csv,
    uniform_x0,
    vectors_per_edge,
)
from gradtrack.network import (
    ConsensusMatrix,
    Digraph,
    NetworkSequence,
    WindowAnalysis,
    averaging_matrix,
    centering_matrix,
    complete_digraph,
    connected_geometric_graph,
    directed_ring,
    drop_edges,
    edge_list_text,
    metropolis_weights,
    parse_edge_list_text,
    random_geometric_graph,
    ring_mixing,
    theta_mixing,
    window_contraction,
    window_product,
)
from gradtrack.objective import (
    LogisticInstance,
    LogisticModel,
    ObjectiveModel,
    QuadraticInstance,
    QuadraticModel,
    ReferenceSolution,
    generate_logistic_data,
    logistic_local_eval,
    quadratic_local_eval,
    solve_reference,
)
from gradtrack.theory import (
    CONDITION_NAMES,
    ConditionReport,
    FeasibilityResult,
    FeasibilitySearchError,
    QuadraticBenchmark,
    TheoryConstants,
    benchmark_instance,
    check_conditions,
    constants,
    omega_diagnostics,
    quadratic_benchmark,
    search_feasible,
    sigma_recursion,
    small_gain_bound,
    tau_contraction,
    weighted_running_max,
)
from gradtrack.harness import (
    DEFAULT_SEEDS,
    CellResult,
    ExperimentConfig,
    SweepResult,
    build_default_config,
    build_model,
    build_sequence,
    convergence_ratios,
    emit_csv,
    emit_plot,
    largest_converged,
    meets_ratio_targets,
    parse_csv,
    run_sweep,
)

__version__ = "0.1.0"
