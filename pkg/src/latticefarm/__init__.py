"""SU(3) pure-gauge lattice simulation with a small message-passing layer and benchmarks."""

from .action import ActionCoeffs, avg_plaquette, avg_rectangle, staple_sum, total_action
from .comm import comm_init, run_ranks
from .errors import LatticeFarmError
from .lattice import GaugeField, Geometry, build_geometry
from .montecarlo import SimulationConfig, UpdateParams, run_simulation, sweep
from .rng import RngKey

__version__ = "0.1.0"

__all__ = [
    "ActionCoeffs", "GaugeField", "Geometry", "LatticeFarmError", "RngKey", "SimulationConfig",
    "UpdateParams", "avg_plaquette", "avg_rectangle", "build_geometry", "comm_init", "run_ranks",
    "run_simulation", "staple_sum", "sweep", "total_action",
]
