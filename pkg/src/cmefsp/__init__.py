"""Adaptive finite state projection for the chemical master equation."""

from .bench import BUILTINS, BenchmarkModel, ToggleParams, birth_death, lotka_volterra, michaelis_menten, toggle_switch
from .errors import (
    BudgetError,
    CapacityError,
    ConfigError,
    DegeneratePruneError,
    ExpmvFailure,
    FSPError,
    InvalidArgumentError,
    InvalidNetworkError,
    OracleCapError,
    StaleSpaceError,
)
from .generator import SparseGenerator, assemble, update_generator
from .krylov import ExpmvOptions, ExpmvReport, dense_expm, expmv
from .network import Constant, Hill, MassAction, Reaction, ReactionNetwork, Species, change_vector, propensity
from .solver import (
    AdaptiveFSP,
    BudgetDecision,
    SolverConfig,
    SolveResult,
    StepRecord,
    local_error_bound,
    solve_adaptive,
    solve_standard_fsp,
    solve_time_stepping_fsp,
    verify_budget,
)
from .ssa import EnsembleStats, Trajectory, ensemble_stats, fsp_mean, ssa_trajectory
from .statespace import (
    ProbabilityVector,
    PruneReport,
    StateSpace,
    expand,
    fixed_threshold_prune,
    prune_and_renormalize,
    prune_to_mass,
    quantile_select,
)

__version__ = "0.1.0"
