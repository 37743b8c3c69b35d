"""Exact directional derivative of the discrete control-to-state map.

This marches the linearization of the staggered scheme exactly as executed:
every substep and inner sweep recorded by the forward solver is
differentiated in order, with the same frozen coefficients, the same
factored matrices, and the boundary direction entering through the exchange
term.  The result is the true Frechet derivative of the discrete solver
(differentiate-then-solve), which is what makes the adjoint below an exact
transpose rather than an O(dt)-consistent approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SpatialGrid, TimeGrid
from .potentials import PotentialSpec, Regularization, effective_nonlinearity
from .state import (
    BoundaryControl,
    PhysicalParams,
    StateTrajectory,
    SubstepRecord,
    _Kernel,
)

__all__ = [
    "SensitivityTrajectory",
    "solve_linearized",
    "directional_cost_derivative",
]


@dataclass
class SensitivityTrajectory:
    """Directional state derivative along one control direction.

    Initial rows are zero; the boundary row is the exact trace of the
    temperature part.
    """

    Theta: np.ndarray  # (N+1, n_nodes)
    Theta_gamma: np.ndarray  # (N+1, n_boundary)
    Phi: np.ndarray  # (N+1, n_nodes)


class _SweepCoefficients:
    """Frozen linearization coefficients of one recorded substep.

    For sweep k the phase equation contributes the diagonal source
    b_k = pi'(phi_in) - theta_src_k * lam'(phi_in) and the coupling weight
    a = lam(phi_in); the temperature equation contributes
    c_k = lam'(phi_k) (phi_k - phi_in)/dt + lam(phi_k)/dt and
    d_k = lam(phi_k)/dt.  Both the linearized and the adjoint marches build
    them from the same stored stages, so the transpose is exact.
    """

    def __init__(self, nl, sub: SubstepRecord):
        dt = sub.dt
        K = sub.theta_stages.shape[0]
        self.dt = dt
        self.n_sweeps = K
        self.a = nl.lam(sub.phi_in)
        dpi_in = nl.dpi(sub.phi_in)
        dlam_in = nl.dlam(sub.phi_in)
        self.b = []
        self.dbeta = []
        self.c = []
        self.d = []
        for k in range(K):
            th_src = sub.theta_in if k == 0 else sub.theta_stages[k - 1]
            self.b.append(dpi_in - th_src * dlam_in)
            ph_k = sub.phi_stages[k]
            self.dbeta.append(nl.beta_pair(ph_k)[1])
            lam_k = nl.lam(ph_k)
            self.c.append(
                nl.dlam(ph_k) * (ph_k - sub.phi_in) / dt + lam_k / dt
            )
            self.d.append(lam_k / dt)


def _coefficient_table(nl, state: StateTrajectory):
    return [
        [_SweepCoefficients(nl, sub) for sub in step.substeps]
        for step in state.steps
    ]


def solve_linearized(
    grid: SpatialGrid,
    tgrid: TimeGrid,
    params: PhysicalParams,
    potential: PotentialSpec,
    state: StateTrajectory,
    h: BoundaryControl,
    regularization: Regularization | None = None,
) -> SensitivityTrajectory:
    """Differentiate the recorded march along the control direction h."""
    nl = effective_nonlinearity(potential, regularization)
    kern = _Kernel(grid, params)
    h_all = h.checked(grid, tgrid)
    N, M = tgrid.n_steps, grid.n_nodes
    Theta = np.zeros((N + 1, M))
    Phi = np.zeros((N + 1, M))
    table = _coefficient_table(nl, state)
    for n in range(N):
        Th = Theta[n]
        Ph = Phi[n]
        for co in table[n]:
            dt = co.dt
            Th_src = Th
            for k in range(co.n_sweeps):
                rhs = kern.W * ((1.0 / dt - co.b[k]) * Ph + co.a * Th_src)
                Ph_k = kern.phi_solve(co.dbeta[k], dt, rhs)
                rhs2 = kern.W * (Th / dt - co.c[k] * Ph_k + co.d[k] * Ph)
                rhs2[kern.bn] += kern.S * (
                    kern.tau * Th[kern.bn] / dt + kern.alpha * kern.m * h_all[n]
                )
                Th_k = kern.theta_solve(dt, rhs2)
                Th_src = Th_k
            Th, Ph = Th_k, Ph_k
        Theta[n + 1] = Th
        Phi[n + 1] = Ph
    return SensitivityTrajectory(
        Theta=Theta,
        Theta_gamma=Theta[:, grid.boundary_nodes].copy(),
        Phi=Phi,
    )


def directional_cost_derivative(
    grid: SpatialGrid,
    tgrid: TimeGrid,
    state: StateTrajectory,
    sens: SensitivityTrajectory,
    cost,
) -> float:
    """Derivative of the tracking cost along a solved direction.

    Uses the same quadrature as the cost itself: one rectangle per step in
    time (left endpoint) for the space-time tracking term, terminal values
    for the final-phase term.
    """
    W = grid.interior_weights
    total = 0.0
    if cost.kappa1 != 0.0:
        mis = state.theta[: tgrid.n_steps] - cost.theta_target[: tgrid.n_steps]
        total += cost.kappa1 * tgrid.dt * float(
            np.sum((mis * sens.Theta[: tgrid.n_steps]) @ W)
        )
    if cost.kappa2 != 0.0:
        total += cost.kappa2 * float(
            W @ ((state.phi[-1] - cost.phi_target) * sens.Phi[-1])
        )
    return total
