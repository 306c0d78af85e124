"""Cooperative deterministic-learning control of unicycle fleets.

Each agent tracks a recurrent reference using only pose measurements (a
high-gain observer supplies velocity estimates), learns the unknown body
dynamics with a lattice RBF network whose weights are consensus-coupled
over a communication graph, and can later re-use the consolidated weights
to track any trajectory experienced by any agent.
"""

from .config import FleetConfig, default_fleet_config
from .engine import (
    DivergenceError,
    RunLog,
    consolidate_run,
    run_experience,
    run_learning,
)
from .kernels import active_backend, available_backends

__version__ = "0.1.0"

__all__ = [
    "FleetConfig",
    "default_fleet_config",
    "DivergenceError",
    "RunLog",
    "consolidate_run",
    "run_experience",
    "run_learning",
    "active_backend",
    "available_backends",
    "__version__",
]
