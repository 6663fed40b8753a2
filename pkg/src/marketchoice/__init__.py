"""Market choice of EWA-learning traders between two double-auction markets."""
from .ewa_sim import SimConfig, SimTrace, escape_time_scan, simulate, two_component_test
from .fp_analysis import (
    LearningParams, fixed_points, homogeneous_population_dynamics, homogeneous_self_consistent,
    threshold_alphas_from_payoffs,
)
from .large_deviation import critical_alphas, minimize_action, peak_levels, solve_steady_state, tilde_p
from .market_core import Aggregates, GameParams, payoff_gap, payoff_grid, payoff_tables
from .nash_solver import classify, find_equilibria, phase_diagram, symmetric_nash_value

__all__ = [
    "Aggregates", "GameParams", "LearningParams", "SimConfig", "SimTrace", "classify", "critical_alphas",
    "escape_time_scan", "find_equilibria", "fixed_points", "homogeneous_population_dynamics",
    "homogeneous_self_consistent", "minimize_action", "payoff_gap", "payoff_grid", "payoff_tables",
    "peak_levels", "phase_diagram", "simulate", "solve_steady_state", "symmetric_nash_value", "tilde_p",
    "threshold_alphas_from_payoffs", "two_component_test",
]
