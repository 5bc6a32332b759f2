"""Power-of-d load balancing: coupled simulation, fluid and diffusion limits."""
from .occupancy import (
    ContractViolation,
    DiffusionState,
    FluidState,
    OccupancyState,
    apply_arrival_at_rank,
    apply_departure_at_rank,
    diffusion_scale,
    fluid_scale,
    rank_queue_len,
    tail_sum,
)
from .policies import DISCARD, ConfigError, Kind, PolicySpec, evaluate_rule
from .engine import CoupledRun, InvariantViolation, SimConfig, run_coupled, run_pi_c_mode

__version__ = "0.1.0"

__all__ = [
    "ContractViolation", "DiffusionState", "FluidState", "OccupancyState",
    "apply_arrival_at_rank", "apply_departure_at_rank", "diffusion_scale", "fluid_scale",
    "rank_queue_len", "tail_sum",
    "DISCARD", "ConfigError", "Kind", "PolicySpec", "evaluate_rule",
    "CoupledRun", "InvariantViolation", "SimConfig", "run_coupled", "run_pi_c_mode",
]
