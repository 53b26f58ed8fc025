"""Gossip opinion dynamics with stubborn agents.

Simulation of the stochastic gossip belief process, exact stationary first
and second moments via dual random walks, closed-form oracles for special
topologies, and mixing/fluidity analysis with homogeneous-influence bounds.
"""

from ._kernels import BACKEND, available_backends
from .errors import (
    CapacityError,
    ConvergenceError,
    ExperimentError,
    GossipError,
    InfluenceError,
    RecipeError,
    ReversibilityError,
    ValidationError,
)
from .fluidity import (
    ConcentrationReport,
    FluidityReport,
    concentration_report,
    conductance,
    expected_hitting_time,
    fluidity_report,
    mean_histogram,
    mixing_time,
    psi,
    relaxation_time,
    transition_matrix,
)
from .generators import GraphRecipe, Placement, generate, place_stubborn, write_edgelist
from .moments import (
    HittingDistribution,
    MomentSolution,
    backward_ode,
    barbell_oracle,
    brute_force_gamma,
    cayley_oracle,
    expected_beliefs,
    hitting_gamma,
    pair_hitting_eta,
    second_moments,
    tree_oracle,
)
from .network import (
    ReversibleExtension,
    SocialNetwork,
    UndirectedGraph,
    build_canonical,
    coupled_k,
    generator_q,
    jump_p,
    reversible_extension,
    validate_influence,
)
from .simulate import (
    ErgodicAccumulator,
    ForwardSummary,
    StationarySample,
    default_initial,
    ergodic_ensemble,
    ergodic_moments,
    sample_stationary_backward,
    simulate_forward,
    stationary_ensemble,
    voter_dual_ensemble,
    voter_dual_sample,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
