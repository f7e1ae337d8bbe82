"""Triangularly quadratic BSDE solvers."""

from .bmo import ConstantProviders, bmo_norm_estimate, surrogate_providers, table_providers
from .config import RunConfig, load_config, parse_config, serialize_config
from .constants import ConstantsReport, beta_ode, compute_constants
from .errors import (
    BoundBreachError,
    ConfigError,
    ConvergenceError,
    DegenerateHorizonError,
    EpsilonTooLargeError,
    HypothesisError,
    NonPositiveTransformError,
    ProviderError,
    SingularFitError,
    SpecError,
    TerminalBoundError,
    TriquadError,
    WeightOverflowError,
)
from .fixedpoint import ProcessPair, batch_standard_error, run_picard
from .global_solver import check_global_hypotheses, plan_global, solve_global
from .grid_paths import make_grid, simulate_brownian
from .model import GeneratorDescriptor, ProblemSpec, TerminalPart, validate_assumptions
from .pathdep import PathFunctional, solve_delay, solve_pathdep_local, validate_functional
from .regress import BasisSpec

__version__ = "0.1.0"

__all__ = [
    "BasisSpec", "BoundBreachError", "ConfigError", "ConstantProviders", "ConstantsReport",
    "ConvergenceError", "DegenerateHorizonError", "EpsilonTooLargeError", "GeneratorDescriptor",
    "HypothesisError", "NonPositiveTransformError", "PathFunctional", "ProblemSpec", "ProcessPair",
    "ProviderError", "RunConfig", "SingularFitError", "SpecError", "TerminalBoundError", "TerminalPart",
    "TriquadError", "WeightOverflowError", "batch_standard_error", "beta_ode", "bmo_norm_estimate",
    "check_global_hypotheses", "compute_constants", "load_config", "make_grid", "parse_config",
    "plan_global", "run_picard", "serialize_config", "simulate_brownian", "solve_delay", "solve_global",
    "solve_pathdep_local", "surrogate_providers", "table_providers", "validate_assumptions",
    "validate_functional",
]
