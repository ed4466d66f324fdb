"""
privrec: differentially private social recommendations.

Mechanisms (exponential, Laplace noisy max, linear smoothing), utility
functions over an undirected social graph, per-node privacy/accuracy
trade-off bounds, and the harness that measures them on real graphs.
"""

try:
    from importlib.metadata import version, PackageNotFoundError

    try:
        __version__ = version("privrec")
    except PackageNotFoundError:
        __version__ = "0.1.0"  # Fallback version
except ImportError:
    __version__ = "0.1.0"

from .errors import (
    PrivrecError,
    EdgeListParseError,
    GraphCacheError,
    NodeDomainError,
    DomainError,
    PreconditionError,
    ConfigurationError,
    CapacityError,
    UndefinedAccuracyError,
    InfeasibleBoundError,
    QuadratureError,
)
from .graph import (
    Graph,
    EdgeFlip,
    FlipDirection,
    load_edge_list,
    read_graph,
    write_graph_cache,
    read_graph_cache,
    graph_stats,
    common_neighbor_count,
    candidate_set,
    apply_flip,
)
from .utility import (
    UtilityKind,
    UtilityFunctionSpec,
    UtilityVector,
    utility_vector,
    utility_vector_from_values,
    weighted_paths_sensitivity,
    scale_to_unit_sensitivity,
    concentration_beta,
    exchangeability_check,
)
from .mechanisms import (
    Mechanism,
    MechanismParams,
    RecommendationDistribution,
    AliasTable,
    derive_rng,
    sample,
    exponential_distribution,
    argmax_distribution,
    laplace_recommend,
    laplace_recommend_batch,
    laplace_two_node_win_prob,
    laplace_selection_probabilities,
    linear_smoothing,
    smoothing_privacy,
    smoothing_param_for_privacy,
    smoothing_param_for_epsilon,
    expected_accuracy,
    max_ln_ratio,
)
from .bounds import (
    BoundInputs,
    NodeBound,
    accuracy_upper_bound,
    epsilon_lower_bound,
    epsilon_lower_bound_concentration,
    t_generic,
    t_common_neighbors,
    t_weighted_paths,
    node_accuracy_ceiling,
    exp_mech_ratio_floor,
    rewire_to_top,
)
from .experiment import (
    ExperimentConfig,
    AccuracyReport,
    evaluate_node,
    run_experiment,
    accuracy_cdf,
    accuracy_vs_degree,
    accuracy_by_rank,
    fraction_above,
    compare_reports,
)
from .audit import AuditReport, audit_graph, privacy_audit, rewiring_audit
from .io_utils import read_data, write_data, get_file_format

__all__ = [
    "__version__",
    # Errors
    "PrivrecError",
    "EdgeListParseError",
    "GraphCacheError",
    "NodeDomainError",
    "DomainError",
    "PreconditionError",
    "ConfigurationError",
    "CapacityError",
    "UndefinedAccuracyError",
    "InfeasibleBoundError",
    "QuadratureError",
    # Graph
    "Graph",
    "EdgeFlip",
    "FlipDirection",
    "load_edge_list",
    "read_graph",
    "write_graph_cache",
    "read_graph_cache",
    "graph_stats",
    "common_neighbor_count",
    "candidate_set",
    "apply_flip",
    # Utilities
    "UtilityKind",
    "UtilityFunctionSpec",
    "UtilityVector",
    "utility_vector",
    "utility_vector_from_values",
    "weighted_paths_sensitivity",
    "scale_to_unit_sensitivity",
    "concentration_beta",
    "exchangeability_check",
    # Mechanisms
    "Mechanism",
    "MechanismParams",
    "RecommendationDistribution",
    "AliasTable",
    "derive_rng",
    "sample",
    "exponential_distribution",
    "argmax_distribution",
    "laplace_recommend",
    "laplace_recommend_batch",
    "laplace_two_node_win_prob",
    "laplace_selection_probabilities",
    "linear_smoothing",
    "smoothing_privacy",
    "smoothing_param_for_privacy",
    "smoothing_param_for_epsilon",
    "expected_accuracy",
    "max_ln_ratio",
    # Bounds
    "BoundInputs",
    "NodeBound",
    "accuracy_upper_bound",
    "epsilon_lower_bound",
    "epsilon_lower_bound_concentration",
    "t_generic",
    "t_common_neighbors",
    "t_weighted_paths",
    "node_accuracy_ceiling",
    "exp_mech_ratio_floor",
    "rewire_to_top",
    # Experiment and audit
    "ExperimentConfig",
    "AccuracyReport",
    "evaluate_node",
    "run_experiment",
    "accuracy_cdf",
    "accuracy_vs_degree",
    "accuracy_by_rank",
    "fraction_above",
    "compare_reports",
    "AuditReport",
    "privacy_audit",
    "audit_graph",
    "rewiring_audit",
    # I/O utilities
    "read_data",
    "write_data",
    "get_file_format",
]
