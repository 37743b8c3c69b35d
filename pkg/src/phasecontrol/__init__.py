"""Boundary optimal control of a two-phase heat system.

The package solves a coupled temperature / order-parameter evolution with
a dynamic boundary exchange condition, differentiates it exactly in the
discrete sense (forward sensitivities and transposed adjoint), and wraps
the pair in a projected-gradient optimizer plus a verification harness.
"""

from .adjoint import (
    AdjointTrajectory,
    CostSpec,
    duality_gap,
    gradient,
    solve_adjoint,
)
from .geometry import SpatialGrid, TimeGrid, build_grid
from .harness import (
    Instance,
    bounded_audit,
    contdep_probe,
    epsilon_sweep,
    grad_check,
)
from .norms import (
    control_inner,
    control_norm,
    sensitivity_norm,
    state_difference_norm,
    trajectory_l2,
)
from .optimize import (
    ControlBounds,
    LineSearchError,
    OptimizeOptions,
    OptimizeReport,
    check_optimality,
    evaluate_cost,
    project,
    projected_gradient,
)
from .potentials import (
    LatentHeat,
    PotentialSpec,
    Regularization,
    constant_latent,
    logarithmic_potential,
    regular_potential,
    tanh_latent,
)
from .state import (
    BoundaryControl,
    InitialData,
    InvariantRegionError,
    PhysicalParams,
    SolverError,
    SolverOptions,
    StateTrajectory,
    boundedness_check,
    energy_diagnostic,
    solve_state,
    weak_form_residual,
)

__version__ = "0.1.0"

__all__ = [
    "AdjointTrajectory",
    "BoundaryControl",
    "ControlBounds",
    "CostSpec",
    "InitialData",
    "Instance",
    "InvariantRegionError",
    "LatentHeat",
    "LineSearchError",
    "OptimizeOptions",
    "OptimizeReport",
    "PhysicalParams",
    "PotentialSpec",
    "Regularization",
    "SolverError",
    "SolverOptions",
    "SpatialGrid",
    "StateTrajectory",
    "TimeGrid",
    "bounded_audit",
    "boundedness_check",
    "build_grid",
    "check_optimality",
    "constant_latent",
    "contdep_probe",
    "control_inner",
    "control_norm",
    "duality_gap",
    "energy_diagnostic",
    "epsilon_sweep",
    "evaluate_cost",
    "grad_check",
    "gradient",
    "logarithmic_potential",
    "project",
    "projected_gradient",
    "regular_potential",
    "sensitivity_norm",
    "solve_adjoint",
    "solve_state",
    "state_difference_norm",
    "tanh_latent",
    "trajectory_l2",
    "weak_form_residual",
]
