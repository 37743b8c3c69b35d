"""Tensor-product grids, quadrature, and difference operators.

Spatial domains are intervals or axis-aligned rectangles discretized on
uniform node grids.  Scalar fields are flat numpy arrays over the nodes
(row-major, x index outermost in 2D); boundary fields are flat arrays over
the boundary nodes in ascending flat-index order.  Space-time fields stack
one row per time node.

Quadrature is trapezoidal in each axis.  In 1D the boundary reduces to the
two endpoints and carries the counting measure (each endpoint has weight 1);
in 2D each boundary node carries the trapezoid weight of every edge it lies
on, so corners get contributions from both incident edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.sparse as sp


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform tensor-product grid with quadrature and stiffness data.

    Attributes
    ----------
    lengths : tuple of float
        Side lengths of the interval / rectangle.
    shape : tuple of int
        Node counts per axis (each >= 2).
    spacing : tuple of float
        Node spacing per axis, ``lengths[d] / (shape[d] - 1)``.
    coords : ndarray, (n_nodes, dim)
        Node coordinates in flat order.
    interior_weights : ndarray, (n_nodes,)
        Tensor trapezoid weights; sums to the domain measure.
    boundary_nodes : ndarray of int, (n_boundary,)
        Flat indices of boundary nodes, ascending.
    boundary_weights : ndarray, (n_boundary,)
        Boundary quadrature weights; sums to 2 in 1D, to the perimeter in 2D.
    stiffness : csr_matrix
        Symmetric positive semidefinite Dirichlet form A with
        ``f @ A @ g = sum of edge differences``; A @ 1 = 0.  Zero-flux
        second differences are ``-A f / interior_weights``.
    """

    lengths: tuple[float, ...]
    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    coords: np.ndarray
    interior_weights: np.ndarray
    boundary_nodes: np.ndarray
    boundary_weights: np.ndarray
    stiffness: sp.csr_matrix = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.boundary_nodes.shape[0]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on [0, horizon] with n_steps implicit-Euler steps."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if not (self.horizon > 0 and np.isfinite(self.horizon)):
            raise ValueError("time horizon must be positive and finite")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)


def _trapezoid_weights(length: float, n: int) -> np.ndarray:
    h = length / (n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def _stiffness_1d(length: float, n: int) -> sp.csr_matrix:
    # Dirichlet form of the first-difference operator: f@A@f = sum h |df/h|^2
    h = length / (n - 1)
    main = np.full(n, 2.0 / h)
    main[0] = main[-1] = 1.0 / h
    off = np.full(n - 1, -1.0 / h)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def build_grid(lengths, shape) -> SpatialGrid:
    """Build a uniform interval (dim 1) or rectangle (dim 2) grid.

    Parameters
    ----------
    lengths : sequence of 1 or 2 positive floats
    shape : sequence of matching length; node counts per axis, each >= 3
        so every axis has at least one interior node
    """
    lengths = tuple(float(L) for L in np.atleast_1d(lengths))
    shape = tuple(int(n) for n in np.atleast_1d(shape))
    if len(lengths) != len(shape) or len(lengths) not in (1, 2):
        raise ValueError("lengths and shape must both have 1 or 2 entries")
    if any(L <= 0 for L in lengths):
        raise ValueError("side lengths must be positive")
    if any(n < 3 for n in shape):
        raise ValueError("need at least 3 nodes per axis (no interior node)")
    spacing = tuple(L / (n - 1) for L, n in zip(lengths, shape))

    axes = [np.linspace(0.0, L, n) for L, n in zip(lengths, shape)]
    waxes = [_trapezoid_weights(L, n) for L, n in zip(lengths, shape)]

    if len(shape) == 1:
        coords = axes[0][:, None]
        weights = waxes[0]
        bnodes = np.array([0, shape[0] - 1])
        bweights = np.ones(2)  # endpoint counting measure
        A = _stiffness_1d(lengths[0], shape[0])
    else:
        nx, ny = shape
        X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
        coords = np.column_stack([X.ravel(), Y.ravel()])
        weights = np.kron(waxes[0], waxes[1])
        Ax = _stiffness_1d(lengths[0], nx)
        Ay = _stiffness_1d(lengths[1], ny)
        A = (sp.kron(Ax, sp.diags(waxes[1])) + sp.kron(sp.diags(waxes[0]), Ay)).tocsr()
        ix, iy = np.unravel_index(np.arange(nx * ny), shape)
        on_x_edge = (ix == 0) | (ix == nx - 1)
        on_y_edge = (iy == 0) | (iy == ny - 1)
        mask = on_x_edge | on_y_edge
        bnodes = np.flatnonzero(mask)
        s = np.zeros(nx * ny)
        s[on_x_edge] += waxes[1][iy[on_x_edge]]  # edges running along y
        s[on_y_edge] += waxes[0][ix[on_y_edge]]  # edges running along x
        bweights = s[bnodes]

    return SpatialGrid(
        lengths=lengths,
        shape=shape,
        spacing=spacing,
        coords=coords,
        interior_weights=np.ascontiguousarray(weights, dtype=float),
        boundary_nodes=bnodes,
        boundary_weights=np.ascontiguousarray(bweights, dtype=float),
        stiffness=A,
    )


def _check_field(grid: SpatialGrid, f, name="field") -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.n_nodes,):
        raise ValueError(f"{name} has shape {f.shape}, expected ({grid.n_nodes},)")
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name} contains non-finite values")
    return f


def _check_boundary_field(grid: SpatialGrid, f, name="boundary field") -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.n_boundary,):
        raise ValueError(f"{name} has shape {f.shape}, expected ({grid.n_boundary},)")
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name} contains non-finite values")
    return f


def integrate_domain(grid: SpatialGrid, f) -> float:
    """Trapezoid integral of a nodal field over the domain."""
    return float(grid.interior_weights @ _check_field(grid, f))


def integrate_boundary(grid: SpatialGrid, f) -> float:
    """Integral of a boundary field against the boundary measure."""
    return float(grid.boundary_weights @ _check_boundary_field(grid, f))


def trace(grid: SpatialGrid, f) -> np.ndarray:
    """Restrict a nodal field to the boundary nodes (boundary index order)."""
    return _check_field(grid, f)[grid.boundary_nodes]


def discrete_laplacian(grid: SpatialGrid, f, flux=None) -> np.ndarray:
    """Second-order Laplacian with prescribed outward normal derivative.

    Interior nodes carry the centered second-difference stencil; boundary
    nodes eliminate the ghost node using the prescribed outward flux
    (default zero).  At 2D corners the scalar flux applies to both incident
    faces.  Equivalent to ``(-A f + B^T S flux) / interior_weights``.
    """
    f = _check_field(grid, f)
    r = -(grid.stiffness @ f)
    if flux is not None:
        flux = _check_boundary_field(grid, flux, "flux")
        r[grid.boundary_nodes] += grid.boundary_weights * flux
    return r / grid.interior_weights


def convolve_time(tgrid: TimeGrid, series) -> np.ndarray:
    """Running time integral (1 * v) of a space-time series, axis 0.

    Cumulative trapezoid; the value at time node 0 is 0.
    """
    series = np.asarray(series, dtype=float)
    if series.shape[0] != tgrid.n_steps + 1:
        raise ValueError(
            f"series has {series.shape[0]} time rows, expected {tgrid.n_steps + 1}"
        )
    if not np.all(np.isfinite(series)):
        raise ValueError("series contains non-finite values")
    return scipy.integrate.cumulative_trapezoid(series, dx=tgrid.dt, axis=0, initial=0.0)
