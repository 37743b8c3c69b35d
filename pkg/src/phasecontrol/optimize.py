"""Cost evaluation, the admissible control box, projected-gradient descent,
and first-order optimality certification.

The descent direction comes from the backward dual march, so every step is
driven by the exact derivative of the discrete cost; fixed points of the
projected iteration are exactly the discrete sign-trichotomy condition the
certifier checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adjoint import AdjointTrajectory, CostSpec, gradient, solve_adjoint
from .geometry import SpatialGrid, TimeGrid
from .norms import control_norm
from .potentials import PotentialSpec, Regularization
from .state import (
    BoundaryControl,
    InitialData,
    PhysicalParams,
    SolverError,
    SolverOptions,
    StateTrajectory,
    solve_state,
)

__all__ = [
    "ControlBounds",
    "OptimizeOptions",
    "OptimizeReport",
    "CertificationReport",
    "LineSearchError",
    "evaluate_cost",
    "project",
    "projected_gradient",
    "check_optimality",
]

_BACKTRACK_BUDGET = 30


class LineSearchError(SolverError):
    """Backtracking exhausted its budget without an acceptable trial."""


@dataclass(frozen=True)
class ControlBounds:
    """Nodewise box for the boundary control; scalars broadcast."""

    u_min: float | np.ndarray
    u_max: float | np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.u_min, float)
        hi = np.asarray(self.u_max, float)
        if np.any(lo > hi):
            raise ValueError("u_min exceeds u_max somewhere")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds contain non-finite values")

    def tables(self, grid: SpatialGrid, tgrid: TimeGrid):
        """Bounds as full (n_steps, n_boundary) tables."""
        shape = (tgrid.n_steps, grid.n_boundary)
        lo = np.broadcast_to(np.asarray(self.u_min, float), shape)
        hi = np.broadcast_to(np.asarray(self.u_max, float), shape)
        return lo, hi

    def midpoint(self, grid: SpatialGrid, tgrid: TimeGrid) -> BoundaryControl:
        lo, hi = self.tables(grid, tgrid)
        return BoundaryControl(values=0.5 * (lo + hi))


@dataclass(frozen=True)
class OptimizeOptions:
    max_iter: int = 200
    tol: float = 1e-6
    s0: float = 1.0
    armijo_c1: float = 1e-4
    backtrack_ratio: float = 0.5

    def __post_init__(self):
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")
        if self.s0 <= 0:
            raise ValueError("s0 must be positive")
        if not 0 < self.backtrack_ratio < 1:
            raise ValueError("backtrack_ratio must lie in (0, 1)")


@dataclass
class CertificationReport:
    """Sign-trichotomy audit of a control against its dual trace.

    Per (time step, boundary node) the switching field s = aperture times
    the dual boundary trace selects a clause: control at the upper bound
    where s is decidedly negative, at the lower bound where decidedly
    positive, unconstrained in the dead band.  The normal-cone residual
    integrates the worst violation of the variational inequality over the
    box, evaluated at the better of the two endpoints (the integrand is
    linear in the competitor).
    """

    tol_sign: float
    satisfied: np.ndarray  # bool, (n_steps, n_boundary)
    satisfied_fraction: float
    normal_cone_residual: float
    lower_active: np.ndarray
    upper_active: np.ndarray
    free: np.ndarray


@dataclass
class OptimizeReport:
    iterations: int
    cost_history: list[float]
    residual_history: list[float]
    step_history: list[float]
    control: BoundaryControl
    lower_active: np.ndarray = field(repr=False)
    upper_active: np.ndarray = field(repr=False)
    free: np.ndarray = field(repr=False)
    certification: CertificationReport = field(repr=False)


def evaluate_cost(
    state: StateTrajectory, cost: CostSpec, grid: SpatialGrid, tgrid: TimeGrid
) -> float:
    """Tracking cost of a solved trajectory.

    One rectangle per step in time for the space-time misfit (matching the
    source quadrature of the dual march), trapezoid weights in space, and
    the terminal phase misfit at the final node.
    """
    tt, pt = cost.checked(grid, tgrid)
    W = grid.interior_weights
    J = 0.0
    if cost.kappa1 != 0.0:
        mis = state.theta[: tgrid.n_steps] - tt[: tgrid.n_steps]
        J += 0.5 * cost.kappa1 * tgrid.dt * float(np.sum((mis * mis) @ W))
    if cost.kappa2 != 0.0:
        mis = state.phi[-1] - pt
        J += 0.5 * cost.kappa2 * float(W @ (mis * mis))
    return J


def project(u, bounds: ControlBounds) -> BoundaryControl:
    """Nodewise clamp of a control table into the box."""
    vals = u.values if isinstance(u, BoundaryControl) else u
    lo = np.asarray(bounds.u_min, float)
    hi = np.asarray(bounds.u_max, float)
    return BoundaryControl(values=np.clip(np.asarray(vals, float), lo, hi))


def _stationarity_residual(grid, tgrid, u_vals, g, bounds) -> float:
    proj = project(u_vals - g, bounds).values
    return control_norm(grid, tgrid, u_vals - proj)


def projected_gradient(
    grid: SpatialGrid,
    tgrid: TimeGrid,
    params: PhysicalParams,
    potential: PotentialSpec,
    init: InitialData,
    cost: CostSpec,
    bounds: ControlBounds,
    u0: BoundaryControl | None = None,
    regularization: Regularization | None = None,
    solver_options: SolverOptions | None = None,
    options: OptimizeOptions | None = None,
) -> OptimizeReport:
    """Minimize the tracking cost over the control box.

    Each iteration evaluates the exact discrete gradient through the
    backward dual march, takes the projected step u - s g with s found by
    backtracking from s0, and accepts on the projection-arc sufficient
    decrease test J(u+) <= J(u) - (c1/s) |u+ - u|^2.  A forward-solver
    failure inside a trial rejects the trial and halves the step; the
    search aborts with LineSearchError once the backtrack budget is spent.
    Iteration stops when the unit-step fixed-point residual
    |u - P(u - g)| drops below tol or max_iter steps were accepted.
    """
    opt = options or OptimizeOptions()

    def forward(vals):
        return solve_state(
            grid, tgrid, params, potential, BoundaryControl(values=vals), init,
            regularization=regularization, options=solver_options,
        )

    start = u0 if u0 is not None else bounds.midpoint(grid, tgrid)
    u = project(start.checked(grid, tgrid), bounds).values
    state = forward(u)
    J = evaluate_cost(state, cost, grid, tgrid)
    cost_hist = [J]
    res_hist: list[float] = []
    step_hist: list[float] = []
    accepted = 0
    while True:
        adj = solve_adjoint(
            grid, tgrid, params, potential, state, cost, regularization
        )
        g = gradient(grid, params, adj)
        res = _stationarity_residual(grid, tgrid, u, g, bounds)
        res_hist.append(res)
        if res <= opt.tol or accepted >= opt.max_iter:
            break
        s = opt.s0
        trial = None
        for _ in range(_BACKTRACK_BUDGET):
            cand = project(u - s * g, bounds).values
            try:
                cand_state = forward(cand)
            except SolverError:
                s *= opt.backtrack_ratio
                continue
            Jc = evaluate_cost(cand_state, cost, grid, tgrid)
            move = control_norm(grid, tgrid, cand - u)
            if Jc <= J - (opt.armijo_c1 / s) * move * move:
                trial = (cand, cand_state, Jc)
                break
            s *= opt.backtrack_ratio
        if trial is None:
            raise LineSearchError(
                "no acceptable step within the backtracking budget"
            )
        u, state, J = trial
        cost_hist.append(J)
        step_hist.append(s)
        accepted += 1
    cert = check_optimality(grid, tgrid, params, BoundaryControl(values=u), adj, bounds)
    return OptimizeReport(
        iterations=accepted,
        cost_history=cost_hist,
        residual_history=res_hist,
        step_history=step_hist,
        control=BoundaryControl(values=u),
        lower_active=cert.lower_active,
        upper_active=cert.upper_active,
        free=cert.free,
        certification=cert,
    )


def check_optimality(
    grid: SpatialGrid,
    tgrid: TimeGrid,
    params: PhysicalParams,
    u: BoundaryControl,
    adjoint: AdjointTrajectory,
    bounds: ControlBounds,
    tol_sign: float | None = None,
) -> CertificationReport:
    """Audit the first-order condition of a control against its dual trace."""
    uv = u.checked(grid, tgrid)
    lo, hi = bounds.tables(grid, tgrid)
    m = params.aperture_on(grid)
    s = m * adjoint.p_gamma[: tgrid.n_steps]
    if tol_sign is None:
        tol_sign = 1e-8 * (1.0 + float(np.abs(s).max(initial=0.0)))
    neg = s < -tol_sign
    pos = s > tol_sign
    satisfied = np.where(
        neg,
        np.abs(uv - hi) <= tol_sign,
        np.where(pos, np.abs(uv - lo) <= tol_sign, True),
    )
    worst = np.maximum(-s * (lo - uv), -s * (hi - uv))
    residual = float(tgrid.dt * np.sum(worst @ grid.boundary_weights))
    return CertificationReport(
        tol_sign=float(tol_sign),
        satisfied=satisfied,
        satisfied_fraction=float(satisfied.mean()),
        normal_cone_residual=residual,
        lower_active=np.abs(uv - lo) <= tol_sign,
        upper_active=np.abs(uv - hi) <= tol_sign,
        free=(np.abs(uv - lo) > tol_sign) & (np.abs(uv - hi) > tol_sign),
    )
