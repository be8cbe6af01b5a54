"""Push-sum consensus optimisation over time-varying directed graphs.

Topologies, adaptive and uniform weighting, the push-sum protocol, SGD and
momentum optimisers on top of it, synthetic objectives, and numerical checks
of the consensus theory.
"""

from .algorithms import (
    CSV_FIELDS,
    AssumptionError,
    MetricsLog,
    MetricsRecord,
    OptimizerKind,
    OptimizerSpec,
    OptimizerState,
    Trace,
    msgap_perturbation,
    run_experiment,
    saddopt_round,
    scalars_per_edge,
    sgap_perturbation,
)
from .analysis import (
    BoundParams,
    PreconditionError,
    VerificationReport,
    compare_regimes,
    compute_bound_params,
    consensus_bound,
    verify_identities,
    verify_lemma1,
    verify_lemma2,
    verify_theorem1,
)
from .config import ConfigError, ExperimentConfig, SweepConfig, load_config, load_sweep, parse_config
from .problems import (
    DiversityReport,
    LogisticProblem,
    ProblemKind,
    ProblemSpec,
    QuadraticProblem,
    make_logistic,
    make_problem,
    make_quadratic,
    measure_diversity,
    stochastic_gradient,
)
from .protocol import (
    NetworkState,
    NodeState,
    NumericalError,
    consensus_distance,
    init_network,
    matrix_form_round,
    protocol_round,
)
from .topology import (
    ConnectivityReport,
    EdgeSet,
    GraphSpec,
    TopologyKind,
    aggregate_window,
    check_windows,
    generate_edges,
    graph_diameter,
    max_out_degree,
    out_neighbors,
    validate_assumption1,
)
from .weighting import (
    Moreau,
    MoreauParams,
    UniformOutDegree,
    WeightError,
    WeightMatrix,
    assemble_matrix,
    c_prime,
    check_definition1,
    moreau_column,
    uniform_column,
)

__version__ = "0.1.0"
