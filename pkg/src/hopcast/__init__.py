"""Broadcast-rate optimisation for degree-bounded peer-to-peer overlays."""

from .analysis import log_sum_exp_rate, optimal_distribution, stationary_extended, noise_bounds
from .hopper import HopperConfig, OracleMeasure, SolverMeasure, run_hopper
from .oracle import baseline_rate, fullmesh_rate, max_flow, solve_mp
from .overlay import Configuration, OverlayGraph, enumerate_configurations
from .ratecast import SolverConfig, solve_rate

__all__ = [
    "Configuration", "HopperConfig", "OracleMeasure", "OverlayGraph", "SolverConfig",
    "SolverMeasure", "baseline_rate", "enumerate_configurations", "fullmesh_rate",
    "log_sum_exp_rate", "max_flow", "optimal_distribution", "run_hopper", "solve_mp",
    "solve_rate", "stationary_extended", "noise_bounds",
]
