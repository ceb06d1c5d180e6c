"""Networked discrete-time SIR epidemics: simulation, stability certificates,
testing-data generation, state estimation and healing-rate control."""

from .control import (
    ControlConfig,
    ControlledRun,
    check_hypotheses,
    contraction_bound,
    healing_rate_estimated,
    healing_rate_true,
    run_closed_loop,
)
from .estimation import EstimatorConfig, analytic_error, error_sweep, estimate_states
from .model import (
    EpidemicNetwork,
    EpidemicState,
    InvalidNetworkError,
    Schedule,
    StructuralError,
    Trajectory,
    simulate,
    step,
    validate_network,
)
from .stability import build_M, build_Mhat, check_ges, is_irreducible, rate_bound, spectral_radius
from .testing import (
    TestingParams,
    build_transfer_matrix,
    confirmed_expectation,
    confirmed_sampled,
    confirmed_via_transfer,
    generate_dataset,
    removed_data,
)

__all__ = [
    "ControlConfig", "ControlledRun", "EpidemicNetwork", "EpidemicState", "EstimatorConfig",
    "InvalidNetworkError", "Schedule", "StructuralError", "TestingParams", "Trajectory",
    "analytic_error", "build_M", "build_Mhat", "build_transfer_matrix", "check_ges", "check_hypotheses",
    "confirmed_expectation", "confirmed_sampled", "confirmed_via_transfer", "contraction_bound",
    "error_sweep", "estimate_states", "generate_dataset", "healing_rate_estimated", "healing_rate_true",
    "is_irreducible", "rate_bound", "removed_data", "run_closed_loop", "simulate", "spectral_radius", "step",
    "validate_network",
]
