"""Tracking single molecules in stochastic reaction networks.

Species-level simulation (Gillespie, fluid limit, exact transients), tracked
single-molecule simulation, the limit single-molecule process, the aggregate
approximation built from it, and explicit error bounds.
"""
from .aggregate import AggregateEnsemble, aggregate_trajectory, build_aggregate, check_subconservative, tracked_mass
from .bounds import (
    BoundError,
    BoundQuantities,
    BoundReport,
    BoundValue,
    TubeSpec,
    aggregate_bound,
    centered_poisson_bound,
    centered_poisson_frequency,
    evaluate_bounds,
    p_bound,
    single_molecule_bound,
    tube_quantities,
)
from .fluid import FluidError, FluidSolution, solve_fluid
from .modelfile import Model, ModelFileError, bundled_model, dump_model, load_model, parse_model
from .network import (
    DELTA,
    AugmentedNetwork,
    Complex,
    CustomKinetics,
    Reaction,
    ReactionNetwork,
    SchemaError,
    StatusSchema,
    build_augmented,
    stochastic_intensity,
    deterministic_rate,
)
from .paths import EmpiricalDistribution, count_transitions, distances, occupation_time, survival_curve
from .singlemol import LimitRateTable, SingleMoleculeError, build_limit_rates, hazard, simulate_y, simulate_y_batch
from .ssa import (
    JumpPath,
    SimulationError,
    StateSpaceError,
    TrackedPath,
    TransientDistribution,
    exact_transient,
    simulate_ssa,
    simulate_tracked,
    ssa_batch,
    tracked_batch,
)

__version__ = "0.1.0"
