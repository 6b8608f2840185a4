"""Weighted-sum computation-efficiency maximisation for OFDMA mobile edge computing."""

from .baselines import solve_cb_max, solve_ec_min, solve_local_only, solve_offloading_only
from .channel import ChannelConfig, make_scenario, sample_gains
from .model import (
    Allocation,
    CeReport,
    DegenerateDual,
    DualState,
    InfeasibleInstance,
    InstanceTooLarge,
    NonBinaryMode,
    Scenario,
    ScenarioError,
    SystemParams,
    UserParams,
    ZeroDimension,
    validate_scenario,
)
from .objective import ce_report
from .solver_binary import solve_binary
from .solver_partial import PartialSolution, SolverConfig, solve_partial

__version__ = "0.1.0"

__all__ = [
    "Allocation", "CeReport", "ChannelConfig", "DegenerateDual", "DualState", "InfeasibleInstance",
    "InstanceTooLarge", "NonBinaryMode", "PartialSolution", "Scenario", "ScenarioError",
    "SolverConfig", "SystemParams", "UserParams", "ZeroDimension", "ce_report", "make_scenario",
    "sample_gains", "solve_binary", "solve_cb_max", "solve_ec_min", "solve_local_only",
    "solve_offloading_only", "solve_partial", "validate_scenario",
]
