"""Self-triggered controller synthesis through symbolic abstraction."""

from .abstraction import AbstractionParams, SymbolicModel, build_state_sets, check_asr_samples, radius
from .geometry import (
    Box,
    LatticeSpec,
    Region,
    dist_point_box,
    interior_contains,
    lattice_in_ball,
    lattice_in_region,
    lattice_spacing,
    nearest_lattice,
)
from .plant import PlantModel, VehicleParams, estimate_lipschitz, make_plant, scalar_linear, vehicle
from .simulation import Trace, check_validity, periodic_baseline, run_closed_loop, sweep
from .synthesis import (
    AbstractController,
    GameSolution,
    RefinedController,
    abstract_controller,
    brute_force_solve,
    pre,
    refined_controller_query,
    solve,
    verify_initial_cover,
    winning_initial_subset,
)

__version__ = "0.1.0"
