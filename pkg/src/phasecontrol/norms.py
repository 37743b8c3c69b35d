"""Discrete norms for trajectories, boundary data, and controls.

Spatial integrals use the grid's trapezoid weights and the stiffness form
for gradient seminorms.  Time integrals over trajectories (values at the
time nodes) use the trapezoid rule; controls and the tracking part of the
cost are piecewise constant per step and integrate exactly with one
rectangle per step, sampled at the left endpoint.
"""

from __future__ import annotations

import numpy as np

from .geometry import SpatialGrid, TimeGrid, convolve_time

__all__ = [
    "domain_l2",
    "domain_h1",
    "trajectory_l2",
    "boundary_trajectory_l2",
    "sup_l2",
    "sup_h1",
    "time_derivative_l2",
    "control_norm",
    "control_inner",
    "sensitivity_norm",
    "state_difference_norm",
]


def domain_l2(grid: SpatialGrid, f) -> float:
    """L2 norm over the domain of one nodal field."""
    f = np.asarray(f, float)
    return float(np.sqrt(grid.interior_weights @ (f * f)))


def domain_h1(grid: SpatialGrid, f) -> float:
    """Full H1 norm over the domain: mass plus stiffness quadratic form."""
    f = np.asarray(f, float)
    return float(np.sqrt(grid.interior_weights @ (f * f) + f @ (grid.stiffness @ f)))


def _time_trapezoid(values: np.ndarray, dt: float) -> float:
    w = np.full(values.shape[0], dt)
    w[0] = w[-1] = dt / 2
    return float(w @ values)


def trajectory_l2(grid: SpatialGrid, tgrid: TimeGrid, F) -> float:
    """Space-time L2 norm of a trajectory sampled at the time nodes."""
    F = np.asarray(F, float)
    sq = F * F @ grid.interior_weights
    return float(np.sqrt(_time_trapezoid(sq, tgrid.dt)))


def boundary_trajectory_l2(grid: SpatialGrid, tgrid: TimeGrid, G) -> float:
    """Space-time L2 norm over the lateral boundary of a boundary trajectory."""
    G = np.asarray(G, float)
    sq = G * G @ grid.boundary_weights
    return float(np.sqrt(_time_trapezoid(sq, tgrid.dt)))


def sup_l2(grid: SpatialGrid, F) -> float:
    """Max over time nodes of the domain L2 norm."""
    F = np.asarray(F, float)
    return float(np.sqrt(np.max(F * F @ grid.interior_weights)))


def sup_h1(grid: SpatialGrid, F) -> float:
    """Max over time nodes of the domain H1 norm."""
    F = np.asarray(F, float)
    vals = F * F @ grid.interior_weights + np.einsum(
        "nm,nm->n", F, (grid.stiffness @ F.T).T
    )
    return float(np.sqrt(np.max(vals)))


def time_derivative_l2(grid: SpatialGrid, tgrid: TimeGrid, F) -> float:
    """L2-in-time, L2-in-space norm of the discrete time derivative."""
    F = np.asarray(F, float)
    d = np.diff(F, axis=0) / tgrid.dt
    sq = d * d @ grid.interior_weights
    return float(np.sqrt(tgrid.dt * np.sum(sq)))


def control_norm(grid: SpatialGrid, tgrid: TimeGrid, u) -> float:
    """Exact lateral-boundary L2 norm of a per-step control table."""
    return float(np.sqrt(control_inner(grid, tgrid, u, u)))


def control_inner(grid: SpatialGrid, tgrid: TimeGrid, u, v) -> float:
    """Exact lateral-boundary L2 inner product of two per-step tables."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    return float(tgrid.dt * np.sum((u * v) @ grid.boundary_weights))


def sensitivity_norm(grid: SpatialGrid, tgrid: TimeGrid, sens) -> float:
    """Composite norm used for the directional-derivative estimates.

    Sum of: space-time L2 of the temperature part, sup-in-time H1 of its
    running time integral, lateral-boundary L2 of its trace, and for the
    phase part sup-in-time L2 plus L2-in-time H1.
    """
    conv = convolve_time(tgrid, sens.Theta)
    phi = np.asarray(sens.Phi, float)
    phi_v_sq = phi * phi @ grid.interior_weights + np.einsum(
        "nm,nm->n", phi, (grid.stiffness @ phi.T).T
    )
    return (
        trajectory_l2(grid, tgrid, sens.Theta)
        + sup_h1(grid, conv)
        + boundary_trajectory_l2(grid, tgrid, sens.Theta_gamma)
        + sup_l2(grid, phi)
        + float(np.sqrt(_time_trapezoid(phi_v_sq, tgrid.dt)))
    )


def state_difference_norm(grid: SpatialGrid, tgrid: TimeGrid, a, b) -> float:
    """Composite distance between two state trajectories.

    Sum of: sup-in-time L2 of the temperature difference, sup-in-time H1 of
    its running time integral, lateral-boundary L2 of the trace difference,
    and for the phase difference the time-H1(L2) norm plus sup-in-time H1.
    """
    dth = np.asarray(a.theta, float) - np.asarray(b.theta, float)
    dph = np.asarray(a.phi, float) - np.asarray(b.phi, float)
    dtg = np.asarray(a.theta_gamma, float) - np.asarray(b.theta_gamma, float)
    phi_h1_time = np.sqrt(
        trajectory_l2(grid, tgrid, dph) ** 2
        + time_derivative_l2(grid, tgrid, dph) ** 2
    )
    return (
        sup_l2(grid, dth)
        + sup_h1(grid, convolve_time(tgrid, dth))
        + boundary_trajectory_l2(grid, tgrid, dtg)
        + float(phi_h1_time)
        + sup_h1(grid, dph)
    )
