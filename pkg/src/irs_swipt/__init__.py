"""IRS-aided overloaded SWIPT downlink: joint user grouping and resource
allocation under IRS phase errors, with feasibility checking, benchmark
schemes, and Monte Carlo validation."""

from .model import (
    ChannelSet,
    DesignSolution,
    PhaseStats,
    SystemConfig,
    effective_matrix,
    generate_channels,
    phase_error_moment_matrix,
    quad_lift,
)
from .feasibility import EnergyDesign, FeasibilityReport, check_feasibility
from .metrics import MetricsReport, brute_force_grouping_oracle, expected_metrics, sampled_metrics
from .nonoverlap import InfeasibleInstanceError, SolverFailure, solve_frozen_grouping, solve_p1
from .overlap import recover_grouping, solve_p2prime
from .baselines import no_ug_solve, nonrobust_variant, random_ug_solve

__version__ = "0.1.0"

__all__ = [
    "ChannelSet",
    "DesignSolution",
    "PhaseStats",
    "SystemConfig",
    "EnergyDesign",
    "FeasibilityReport",
    "MetricsReport",
    "InfeasibleInstanceError",
    "SolverFailure",
    "effective_matrix",
    "generate_channels",
    "phase_error_moment_matrix",
    "quad_lift",
    "check_feasibility",
    "expected_metrics",
    "sampled_metrics",
    "brute_force_grouping_oracle",
    "solve_p1",
    "solve_p2prime",
    "solve_frozen_grouping",
    "recover_grouping",
    "random_ug_solve",
    "no_ug_solve",
    "nonrobust_variant",
    "__version__",
]
