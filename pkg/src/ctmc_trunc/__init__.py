"""Finite-truncation analysis of master equations on countable state spaces."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    CtmcTruncError,
    DimensionTooLarge,
    GeneratorInvariantError,
    InvalidNetworkError,
    MissingReverseEdge,
    NotConnected,
    SingularBeyondKernel,
    ZeroMassWindow,
)
from .evolution import (
    EvolveReport,
    ProbVec,
    cesaro_mean,
    dense_expm_oracle,
    embedded_chain,
    evolve,
    long_time_limit,
    restrict,
)
from .generator import (
    GeneratorNorms,
    Scheme,
    SparseGenerator,
    dump_triplets,
    generator_distance,
    norms,
    truncate_condense,
    truncate_sharp,
    truncate_subnetwork,
)
from .limits import (
    SweepReport,
    VerdictReport,
    four_limit_verdict,
    spectral_gap,
    thermodynamic_sweep,
)
from .network import (
    Bits,
    FiniteSubset,
    Int,
    Nat,
    Network,
    StateLabel,
    canonical_index,
    format_label,
    is_strongly_connected,
    label_from_index,
    load_edge_list,
    parse_label,
    subnetwork_edges,
)
from .presets import (
    Preset,
    build_preset,
    chain_n0,
    chain_z,
    hypercube,
    reshuffle_network,
    three_state_example,
    trap_chain,
)
from .simulate import (
    TrajectoryStats,
    consistency_check,
    simulate_final_states,
    simulate_return,
    stationary_from_simulation,
)
from .stationary import (
    DetailedBalanceCertificate,
    StationaryResult,
    candidate_norm_test,
    detailed_balance_candidate,
    in_tree_oracle,
    kolmogorov_check,
    stationary_kernel,
)
