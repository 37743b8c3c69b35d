"""Backward adjoint march and the boundary-control gradient.

The adjoint is the exact transpose of the linearized march in
``sensitivity``: the backward pass walks the recorded substeps and sweeps
in reverse, applies the same symmetric factored systems (a symmetric solve
is its own transpose), and injects the tracking misfit between steps with
the same one-rectangle-per-step quadrature the cost uses.  Exactness here
is what turns the gradient check into a machine-precision identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SpatialGrid, TimeGrid
from .potentials import PotentialSpec, Regularization, effective_nonlinearity
from .sensitivity import (
    SensitivityTrajectory,
    _coefficient_table,
    directional_cost_derivative,
    solve_linearized,
)
from .state import BoundaryControl, PhysicalParams, StateTrajectory, _Kernel

__all__ = [
    "CostSpec",
    "AdjointTrajectory",
    "solve_adjoint",
    "gradient",
    "duality_gap",
]


@dataclass(frozen=True)
class CostSpec:
    """Quadratic tracking cost: space-time temperature misfit weighted by
    kappa1, final-time phase misfit weighted by kappa2."""

    kappa1: float
    kappa2: float
    theta_target: np.ndarray  # (N+1, n_nodes); the last row is unused
    phi_target: np.ndarray  # (n_nodes,)

    def __post_init__(self):
        if self.kappa1 < 0 or self.kappa2 < 0:
            raise ValueError("cost weights must be nonnegative")

    def checked(self, grid: SpatialGrid, tgrid: TimeGrid):
        tt = np.asarray(self.theta_target, float)
        pt = np.asarray(self.phi_target, float)
        if tt.shape != (tgrid.n_steps + 1, grid.n_nodes):
            raise ValueError(
                f"theta_target has shape {tt.shape}, expected "
                f"({tgrid.n_steps + 1}, {grid.n_nodes})"
            )
        if pt.shape != (grid.n_nodes,):
            raise ValueError(
                f"phi_target has shape {pt.shape}, expected ({grid.n_nodes},)"
            )
        if not (np.all(np.isfinite(tt)) and np.all(np.isfinite(pt))):
            raise ValueError("cost targets contain non-finite values")
        return tt, pt


@dataclass
class AdjointTrajectory:
    """Backward dual trajectory; the boundary row is the exact trace.

    The terminal rows hold the transversality data: the temperature dual
    vanishes at the final node and the phase dual equals the weighted final
    misfit nodewise.
    """

    p: np.ndarray  # (N+1, n_nodes)
    p_gamma: np.ndarray  # (N+1, n_boundary)
    q: np.ndarray  # (N+1, n_nodes)


def solve_adjoint(
    grid: SpatialGrid,
    tgrid: TimeGrid,
    params: PhysicalParams,
    potential: PotentialSpec,
    state: StateTrajectory,
    cost: CostSpec,
    regularization: Regularization | None = None,
) -> AdjointTrajectory:
    """Transpose the recorded march backward against the cost sources."""
    nl = effective_nonlinearity(potential, regularization)
    kern = _Kernel(grid, params)
    tt, pt = cost.checked(grid, tgrid)
    N, M = tgrid.n_steps, grid.n_nodes
    W, S, bn = kern.W, kern.S, kern.bn
    table = _coefficient_table(nl, state)

    p = np.zeros((N + 1, M))
    q = np.zeros((N + 1, M))
    q[N] = cost.kappa2 * (state.phi[N] - pt)
    th_bar = np.zeros(M)
    ph_bar = W * q[N]
    for n in range(N - 1, -1, -1):
        if n + 1 <= N - 1 and cost.kappa1 != 0.0:
            th_bar = th_bar + cost.kappa1 * tgrid.dt * W * (
                state.theta[n + 1] - tt[n + 1]
            )
        p_acc = np.zeros(M)
        q_acc = np.zeros(M)
        for co in reversed(table[n]):
            dt = co.dt
            K = co.n_sweeps
            th_in_bar = np.zeros(M)
            ph_in_bar = np.zeros(M)
            z_next = None
            for k in range(K - 1, -1, -1):
                th_bar_k = th_bar if k == K - 1 else W * (co.a * z_next)
                y = kern.theta_solve(dt, th_bar_k)
                p_acc += y
                th_in_bar += (W / dt) * y
                th_in_bar[bn] += S * (kern.tau / dt) * y[bn]
                ph_bar_k = -co.c[k] * (W * y)
                if k == K - 1:
                    ph_bar_k = ph_bar_k + ph_bar
                z = kern.phi_solve(co.dbeta[k], dt, ph_bar_k)
                q_acc += z
                ph_in_bar += W * ((1.0 / dt - co.b[k]) * z) + co.d[k] * (W * y)
                z_next = z
            th_in_bar += W * (co.a * z_next)
            th_bar, ph_bar = th_in_bar, ph_in_bar
        p[n] = p_acc / tgrid.dt
        q[n] = q_acc / tgrid.dt
    return AdjointTrajectory(
        p=p, p_gamma=p[:, grid.boundary_nodes].copy(), q=q
    )


def gradient(
    grid: SpatialGrid, params: PhysicalParams, adjoint: AdjointTrajectory
) -> np.ndarray:
    """Riesz representative of the cost derivative on the control carrier.

    One row per time step: the exchange coefficient times the aperture
    times the boundary trace of the temperature dual at the step's left
    node.  Where the aperture vanishes the gradient vanishes — the control
    cannot act there.
    """
    m = params.aperture_on(grid)
    return params.alpha * m * adjoint.p_gamma[:-1]


def duality_gap(
    grid: SpatialGrid,
    tgrid: TimeGrid,
    params: PhysicalParams,
    potential: PotentialSpec,
    state: StateTrajectory,
    cost: CostSpec,
    h: BoundaryControl,
    regularization: Regularization | None = None,
) -> float:
    """Normalized mismatch between the two derivative pathways.

    Pairs the adjoint gradient with h on the lateral boundary and compares
    against the directional derivative computed through the linearized
    march; both routes traverse the same recorded schedule, so the gap
    sits at round-off.
    """
    from .norms import control_inner

    adj = solve_adjoint(grid, tgrid, params, potential, state, cost, regularization)
    g = gradient(grid, params, adj)
    lhs = control_inner(grid, tgrid, g, h.checked(grid, tgrid))
    sens = solve_linearized(grid, tgrid, params, potential, state, h, regularization)
    rhs = directional_cost_derivative(grid, tgrid, state, sens, cost)
    return abs(lhs - rhs) / max(1.0, abs(lhs))
