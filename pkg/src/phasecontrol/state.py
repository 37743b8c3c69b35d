"""Forward solver for the coupled heat / phase system.

The temperature diffuses in the domain and exchanges heat through the
boundary according to a dynamic boundary condition with inertia ``tau``,
exchange coefficient ``alpha``, and a fixed nonnegative aperture profile
multiplying the boundary control.  The order parameter follows a gradient
flow of the double well, driven by the temperature through the latent-heat
coupling.

Time stepping is implicit Euler with an inner staggering: each step runs a
fixed number of coupling sweeps, where a sweep solves the order-parameter
equation (monotone part fully implicit, via damped Newton) with the latest
temperature as source, then the linear temperature equation with the fresh
order parameter.  The smooth well perturbation and the latent-heat factor
in the order-parameter equation are frozen at the step's starting value.
Singular potentials are protected by an invariant-region guard: Newton
iterates are clamped strictly inside the domain of the monotone part, and
a step that converges onto the clamp is rejected and retried with a halved
step, up to a retry budget.

Every step stores its inner-sweep stages so that the linearized and adjoint
marches can differentiate the scheme exactly as executed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import SpatialGrid, TimeGrid, integrate_domain
from .potentials import (
    Nonlinearity,
    PotentialSpec,
    Regularization,
    effective_nonlinearity,
)

__all__ = [
    "PhysicalParams",
    "BoundaryControl",
    "InitialData",
    "SolverOptions",
    "StateTrajectory",
    "SolveDiagnostics",
    "EnergyReport",
    "BoundednessReport",
    "SolverError",
    "NewtonDivergenceError",
    "InvariantRegionError",
    "LinearSolveError",
    "solve_state",
    "weak_form_residual",
    "energy_diagnostic",
    "boundedness_check",
]


class SolverError(RuntimeError):
    """Base class for forward-solver failures."""


class NewtonDivergenceError(SolverError):
    """Newton failed to converge after damping and step-halving retries."""


class InvariantRegionError(SolverError):
    """The order parameter hit the guarded rim of the monotone domain."""


class LinearSolveError(SolverError):
    """A sparse or banded factorization broke down."""


@dataclass(frozen=True)
class PhysicalParams:
    """Diffusivity sigma, boundary inertia tau, exchange alpha, aperture m."""

    sigma: float = 1.0
    tau: float = 1.0
    alpha: float = 1.0
    aperture: float | np.ndarray = 1.0

    def __post_init__(self):
        for name in ("sigma", "tau", "alpha"):
            v = getattr(self, name)
            if not (np.isscalar(v) and v > 0 and np.isfinite(v)):
                raise ValueError(f"{name} must be a positive finite scalar")
        ap = np.asarray(self.aperture, dtype=float)
        if np.any(ap < 0) or not np.all(np.isfinite(ap)):
            raise ValueError("aperture must be nonnegative and finite")

    def aperture_on(self, grid: SpatialGrid) -> np.ndarray:
        ap = np.asarray(self.aperture, dtype=float)
        if ap.ndim == 0:
            return np.full(grid.n_boundary, float(ap))
        if ap.shape != (grid.n_boundary,):
            raise ValueError(
                f"aperture has shape {ap.shape}, expected ({grid.n_boundary},)"
            )
        return ap


@dataclass(frozen=True)
class BoundaryControl:
    """Boundary control, one row per time step, constant over each step.

    Row n holds the values acting on [t_n, t_{n+1}), sampled at the left
    endpoint of the step.
    """

    values: np.ndarray

    @staticmethod
    def constant(grid: SpatialGrid, tgrid: TimeGrid, value: float) -> "BoundaryControl":
        return BoundaryControl(
            np.full((tgrid.n_steps, grid.n_boundary), float(value))
        )

    def checked(self, grid: SpatialGrid, tgrid: TimeGrid) -> np.ndarray:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (tgrid.n_steps, grid.n_boundary):
            raise ValueError(
                f"control has shape {v.shape}, expected "
                f"({tgrid.n_steps}, {grid.n_boundary})"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("control contains non-finite values")
        return v


@dataclass(frozen=True)
class InitialData:
    """Initial temperature and order parameter, nodal."""

    theta0: np.ndarray
    phi0: np.ndarray

    def checked(self, grid: SpatialGrid):
        th = np.asarray(self.theta0, dtype=float)
        ph = np.asarray(self.phi0, dtype=float)
        for name, f in (("theta0", th), ("phi0", ph)):
            if f.shape != (grid.n_nodes,):
                raise ValueError(
                    f"{name} has shape {f.shape}, expected ({grid.n_nodes},)"
                )
            if not np.all(np.isfinite(f)):
                raise ValueError(f"{name} contains non-finite values")
        return th, ph


@dataclass(frozen=True)
class SolverOptions:
    """Staggered-scheme knobs.

    n_sweeps inner coupling sweeps per step; damped Newton with halving line
    search for the order-parameter substep; steps whose Newton iterate
    converges onto the invariant-region clamp are rejected and rerun at
    half the step, up to retry_budget nested halvings.
    """

    n_sweeps: int = 2
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    max_damping: int = 30
    retry_budget: int = 5
    guard_margin: float = 1e-9

    def __post_init__(self):
        if self.n_sweeps < 1:
            raise ValueError("n_sweeps must be at least 1")


@dataclass
class SubstepRecord:
    """One executed substep: inputs and the per-sweep stage values."""

    dt: float
    theta_in: np.ndarray
    phi_in: np.ndarray
    theta_stages: np.ndarray  # (n_sweeps, n_nodes)
    phi_stages: np.ndarray  # (n_sweeps, n_nodes)


@dataclass
class StepRecord:
    substeps: list


@dataclass
class SolveDiagnostics:
    newton_iterations: int = 0
    guard_rejections: int = 0
    newton_rejections: int = 0
    subdivided_steps: int = 0
    max_strong_residual: float = 0.0


@dataclass
class StateTrajectory:
    """Discrete trajectory plus the execution record needed to linearize it."""

    theta: np.ndarray  # (N+1, n_nodes)
    phi: np.ndarray
    xi: np.ndarray  # effective monotone-part values along phi
    theta_gamma: np.ndarray  # (N+1, n_boundary), exact trace of theta
    steps: list
    n_sweeps: int
    diagnostics: SolveDiagnostics


class _Reject(Exception):
    def __init__(self, kind):
        self.kind = kind  # "guard" or "newton"


class _Kernel:
    """Grid-bound linear algebra shared by state, linearized, and adjoint.

    All systems are symmetric positive definite: tridiagonal in 1D (solved
    by banded Cholesky), 5-point in 2D (sparse LU).  The temperature matrix
    depends only on dt and is factored once per dt.
    """

    def __init__(self, grid: SpatialGrid, params: PhysicalParams):
        self.grid = grid
        self.W = grid.interior_weights
        self.A = grid.stiffness
        self.bn = grid.boundary_nodes
        self.S = grid.boundary_weights
        self.sigma = float(params.sigma)
        self.tau = float(params.tau)
        self.alpha = float(params.alpha)
        self.m = params.aperture_on(grid)
        self.banded = grid.dim == 1
        if self.banded:
            self.A_main = self.A.diagonal(0).copy()
            self.A_sup = self.A.diagonal(1).copy()
        self._theta_factor = {}

    def _factor_banded(self, main, sup):
        ab = np.zeros((2, main.size))
        ab[0, 1:] = sup
        ab[1, :] = main
        try:
            return scipy.linalg.cholesky_banded(ab, lower=False)
        except scipy.linalg.LinAlgError as exc:  # pragma: no cover
            raise LinearSolveError(str(exc)) from exc

    def _factor_sparse(self, mat):
        try:
            return spla.splu(mat.tocsc())
        except RuntimeError as exc:  # pragma: no cover
            raise LinearSolveError(str(exc)) from exc

    def theta_solve(self, dt, rhs):
        """Solve the temperature system (W/dt + A + boundary terms) x = rhs."""
        fac = self._theta_factor.get(dt)
        if fac is None:
            d = self.W / dt
            bd = self.S * (self.tau / dt + self.alpha)
            if self.banded:
                main = d + self.A_main
                main[self.bn] += bd
                fac = ("b", self._factor_banded(main, self.A_sup))
            else:
                dvec = d.copy()
                dvec[self.bn] += bd
                fac = ("s", self._factor_sparse(self.A + sp.diags(dvec)))
            self._theta_factor[dt] = fac
        kind, f = fac
        if kind == "b":
            return scipy.linalg.cho_solve_banded((f, False), rhs)
        return f.solve(rhs)

    def phi_solve(self, dbeta, dt, rhs):
        """Solve (W/dt + sigma A + W diag(dbeta)) x = rhs."""
        d = self.W / dt + self.W * dbeta
        if self.banded:
            fac = self._factor_banded(d + self.sigma * self.A_main, self.sigma * self.A_sup)
            return scipy.linalg.cho_solve_banded((fac, False), rhs)
        f = self._factor_sparse(self.sigma * self.A + sp.diags(d))
        return f.solve(rhs)

    def theta_residual(self, th_new, th_old, ph_new, ph_old, lam_new, u, dt):
        """Weak residual of the temperature equation at the given values."""
        F = self.W * ((th_new - th_old) / dt + lam_new * (ph_new - ph_old) / dt)
        F += self.A @ th_new
        tb_new = th_new[self.bn]
        F[self.bn] += self.S * (
            self.tau * (tb_new - th_old[self.bn]) / dt
            + self.alpha * (tb_new - self.m * u)
        )
        return F

    def phi_residual(self, ph, ph_old, beta_val, source, dt):
        """Weak residual of the order-parameter equation; source holds
        pi(phi_old) - theta_source * lam(phi_old)."""
        return self.W * ((ph - ph_old) / dt + beta_val + source) + self.sigma * (self.A @ ph)


def _newton_phi(kern: _Kernel, nl: Nonlinearity, opt: SolverOptions, diag, ph0, source, dt):
    if nl.guard is not None:
        glo = nl.guard[0] + opt.guard_margin
        ghi = nl.guard[1] - opt.guard_margin
    phi = ph0.copy()

    def eval_f(p):
        val, der = nl.beta_pair(p)
        return kern.phi_residual(p, ph0, val, source, dt), der

    def pinned(p):
        return nl.guard is not None and (np.any(p <= glo) or np.any(p >= ghi))

    F, der = eval_f(phi)
    rmax = np.max(np.abs(F / kern.W))
    fnorm = float(F @ F)
    its = 0
    while rmax > opt.newton_tol:
        if its >= opt.newton_max_iter:
            raise _Reject("guard" if pinned(phi) else "newton")
        delta = kern.phi_solve(der, dt, -F)
        t = 1.0
        accepted = False
        for _ in range(opt.max_damping):
            cand = phi + t * delta
            if nl.guard is not None:
                cand = np.clip(cand, glo, ghi)
            Fc, derc = eval_f(cand)
            rc = np.max(np.abs(Fc / kern.W))
            fc = float(Fc @ Fc)
            if rc <= opt.newton_tol or fc < fnorm:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if np.array_equal(cand, phi) and rmax <= 4.0 * np.finfo(float).eps * max(
                1.0, float(np.max(np.abs(der)))
            ):
                # the iterate is bitwise stationary and the residual sits at
                # the floating-point noise floor of the (steep) monotone
                # evaluator: this is the best representable root
                break
            # a line search that cannot move off the clamp is a guard event,
            # not a Newton breakdown
            raise _Reject("guard" if pinned(phi) else "newton")
        phi, F, der, rmax, fnorm = cand, Fc, derc, rc, fc
        its += 1
    diag.newton_iterations += its
    diag.max_strong_residual = max(diag.max_strong_residual, float(rmax))
    if nl.guard is not None and (np.any(phi <= glo) or np.any(phi >= ghi)):
        raise _Reject("guard")
    return phi


def _run_substep(kern, nl, opt, diag, th0, ph0, u, dt):
    K = opt.n_sweeps
    M = th0.size
    th_stages = np.empty((K, M))
    ph_stages = np.empty((K, M))
    base = nl.pi(ph0)
    lam0 = nl.lam(ph0)
    th_src = th0
    for k in range(K):
        ph_new = _newton_phi(kern, nl, opt, diag, ph0, base - th_src * lam0, dt)
        lam_new = nl.lam(ph_new)
        rhs = kern.W * (th0 - lam_new * (ph_new - ph0)) / dt
        rhs[kern.bn] += kern.S * (
            kern.tau * th0[kern.bn] / dt + kern.alpha * kern.m * u
        )
        th_new = kern.theta_solve(dt, rhs)
        th_stages[k] = th_new
        ph_stages[k] = ph_new
        th_src = th_new
    return SubstepRecord(dt, th0.copy(), ph0.copy(), th_stages, ph_stages)


def _advance(kern, nl, opt, diag, th0, ph0, u, dt, depth):
    try:
        sub = _run_substep(kern, nl, opt, diag, th0, ph0, u, dt)
        return [sub]
    except _Reject as rej:
        if rej.kind == "guard":
            diag.guard_rejections += 1
        else:
            diag.newton_rejections += 1
        if depth >= opt.retry_budget:
            if rej.kind == "guard":
                raise InvariantRegionError(
                    "order parameter pinned at the invariant-region clamp; "
                    f"step-halving budget ({opt.retry_budget}) exhausted"
                ) from None
            raise NewtonDivergenceError(
                "Newton failed to converge; damping and step-halving budget "
                f"({opt.retry_budget}) exhausted"
            ) from None
        left = _advance(kern, nl, opt, diag, th0, ph0, u, dt / 2, depth + 1)
        th_mid = left[-1].theta_stages[-1]
        ph_mid = left[-1].phi_stages[-1]
        right = _advance(kern, nl, opt, diag, th_mid, ph_mid, u, dt / 2, depth + 1)
        return left + right


def solve_state(
    grid: SpatialGrid,
    tgrid: TimeGrid,
    params: PhysicalParams,
    potential: PotentialSpec,
    control: BoundaryControl,
    init: InitialData,
    regularization: Regularization | None = None,
    options: SolverOptions | None = None,
) -> StateTrajectory:
    """March the staggered scheme over the whole time grid.

    Returns the nodal temperature/order-parameter trajectories, the
    monotone-part values along the trajectory, the exact boundary trace of
    the temperature, and the per-step execution record.  Raises a typed
    SolverError subclass on Newton divergence, invariant-region violation,
    or linear-solve breakdown.
    """
    opt = options or SolverOptions()
    nl = effective_nonlinearity(potential, regularization)
    kern = _Kernel(grid, params)
    u_all = control.checked(grid, tgrid)
    th0, ph0 = init.checked(grid)
    if nl.guard is not None:
        glo = nl.guard[0] + opt.guard_margin
        ghi = nl.guard[1] - opt.guard_margin
        if np.any(ph0 <= glo) or np.any(ph0 >= ghi):
            raise InvariantRegionError(
                "initial order parameter must lie strictly inside the "
                f"guarded interval ({glo}, {ghi})"
            )

    N, M = tgrid.n_steps, grid.n_nodes
    theta = np.empty((N + 1, M))
    phi = np.empty((N + 1, M))
    xi = np.empty((N + 1, M))
    theta[0], phi[0] = th0, ph0
    xi[0] = nl.beta_pair(ph0)[0]
    diag = SolveDiagnostics()
    steps = []
    dt = tgrid.dt
    for n in range(N):
        subs = _advance(kern, nl, opt, diag, theta[n], phi[n], u_all[n], dt, 0)
        if len(subs) > 1:
            diag.subdivided_steps += 1
        steps.append(StepRecord(substeps=subs))
        theta[n + 1] = subs[-1].theta_stages[-1]
        phi[n + 1] = subs[-1].phi_stages[-1]
        xi[n + 1] = nl.beta_pair(phi[n + 1])[0]
    return StateTrajectory(
        theta=theta,
        phi=phi,
        xi=xi,
        theta_gamma=theta[:, grid.boundary_nodes].copy(),
        steps=steps,
        n_sweeps=opt.n_sweeps,
        diagnostics=diag,
    )


def _theta_source_for_last_sweep(sub: SubstepRecord):
    # temperature stage that fed the final order-parameter solve
    if sub.theta_stages.shape[0] >= 2:
        return sub.theta_stages[-2]
    return sub.theta_in


def weak_form_residual(
    grid: SpatialGrid,
    tgrid: TimeGrid,
    params: PhysicalParams,
    potential: PotentialSpec,
    state: StateTrajectory,
    control: BoundaryControl,
    regularization: Regularization | None = None,
) -> np.ndarray:
    """Max weak-form residual of both equations, per time step.

    Plugs the stored trajectory into the scheme's discrete equations
    (against every nodal basis vector) and reports the largest absolute
    entry per step.  A converged trajectory stays at solver tolerance; a
    perturbed one lights up.
    """
    nl = effective_nonlinearity(potential, regularization)
    kern = _Kernel(grid, params)
    u_all = control.checked(grid, tgrid)
    out = np.zeros(tgrid.n_steps)
    for n, step in enumerate(state.steps):
        worst = 0.0
        for i, sub in enumerate(step.substeps):
            first = i == 0
            last = i == len(step.substeps) - 1
            th_in = state.theta[n] if first else sub.theta_in
            ph_in = state.phi[n] if first else sub.phi_in
            th_out = state.theta[n + 1] if last else sub.theta_stages[-1]
            ph_out = state.phi[n + 1] if last else sub.phi_stages[-1]
            th_src = _theta_source_for_last_sweep(sub)
            source = nl.pi(ph_in) - th_src * nl.lam(ph_in)
            Fphi = kern.phi_residual(
                ph_out, ph_in, nl.beta_pair(ph_out)[0], source, sub.dt
            )
            Fth = kern.theta_residual(
                th_out, th_in, ph_out, ph_in, nl.lam(ph_out), u_all[n], sub.dt
            )
            worst = max(worst, float(np.max(np.abs(Fphi))), float(np.max(np.abs(Fth))))
        out[n] = worst
    return out


@dataclass
class EnergyReport:
    """Telescoped energy identity: lhs, rhs, and slack = rhs - lhs per node.

    slack collects the scheme's numerical dissipation (dropped squares and
    convexity gaps), so it stays nonnegative up to solver tolerances.
    rhs components: initial data terms, boundary control work, smooth-well
    work, and the staggering mismatch of the latent-heat coupling.
    """

    lhs: np.ndarray  # (N+1,)
    rhs: np.ndarray
    slack: np.ndarray
    control_work: np.ndarray
    pi_work: np.ndarray
    coupling_mismatch: np.ndarray


def energy_diagnostic(
    grid: SpatialGrid,
    tgrid: TimeGrid,
    params: PhysicalParams,
    potential: PotentialSpec,
    state: StateTrajectory,
    control: BoundaryControl,
    regularization: Regularization | None = None,
) -> EnergyReport:
    """Discrete counterpart of the basic energy estimate, per time node.

    lhs(t): half squared temperature mass, accumulated temperature gradient
    and boundary dissipation, accumulated squared phase rate, gradient and
    well energy of the phase.  rhs(t): initial-data terms plus boundary
    control work, smooth-well work, and the staggering mismatch.  Testing
    the two equations with the temperature and the phase rate and dropping
    nonnegative squares gives slack = rhs - lhs >= 0 up to solver residuals.
    """
    nl = effective_nonlinearity(potential, regularization)
    kern = _Kernel(grid, params)
    u_all = control.checked(grid, tgrid)
    W, S, A = kern.W, kern.S, kern.A
    bn = kern.bn
    N = tgrid.n_steps

    def snapshot(th, ph):
        tb = th[bn]
        return (
            0.5 * float(W @ (th * th))
            + 0.5 * kern.tau * float(S @ (tb * tb))
            + 0.5 * kern.sigma * float(ph @ (A @ ph))
            + float(W @ nl.beta_hat(ph))
        )

    lhs = np.zeros(N + 1)
    rhs = np.zeros(N + 1)
    control_work = np.zeros(N + 1)
    pi_work = np.zeros(N + 1)
    mismatch = np.zeros(N + 1)
    data0 = snapshot(state.theta[0], state.phi[0])
    lhs[0] = data0
    rhs[0] = data0
    acc_diss = 0.0
    acc_ctrl = 0.0
    acc_pi = 0.0
    acc_mis = 0.0
    for n, step in enumerate(state.steps):
        u = u_all[n]
        for sub in step.substeps:
            dt = sub.dt
            th_m = sub.theta_stages[-1]
            ph_m = sub.phi_stages[-1]
            th_prev, ph_prev = sub.theta_in, sub.phi_in
            dphi = ph_m - ph_prev
            tb = th_m[bn]
            acc_diss += dt * float(th_m @ (A @ th_m))
            acc_diss += kern.alpha * dt * float(S @ (tb * tb))
            acc_diss += float(W @ (dphi * dphi)) / dt
            acc_ctrl += kern.alpha * dt * float(S @ (kern.m * u * tb))
            acc_pi -= float(W @ (nl.pi(ph_prev) * dphi))
            th_src = _theta_source_for_last_sweep(sub)
            acc_mis += float(
                W @ ((th_src * nl.lam(ph_prev) - th_m * nl.lam(ph_m)) * dphi)
            )
        lhs[n + 1] = snapshot(state.theta[n + 1], state.phi[n + 1]) + acc_diss
        rhs[n + 1] = data0 + acc_ctrl + acc_pi + acc_mis
        control_work[n + 1] = acc_ctrl
        pi_work[n + 1] = acc_pi
        mismatch[n + 1] = acc_mis
    return EnergyReport(
        lhs=lhs,
        rhs=rhs,
        slack=rhs - lhs,
        control_work=control_work,
        pi_work=pi_work,
        coupling_mismatch=mismatch,
    )


@dataclass
class BoundednessReport:
    max_abs_theta: float
    max_abs_theta_boundary: float
    phi_min: float
    phi_max: float
    max_abs_xi: float
    confined: bool | None


def boundedness_check(
    state: StateTrajectory, potential: PotentialSpec | None = None
) -> BoundednessReport:
    """Trajectory amplitude audit; confinement flag for singular wells."""
    confined = None
    if potential is not None and np.all(np.isfinite(potential.domain)):
        lo, hi = potential.domain
        confined = bool(state.phi.min() > lo and state.phi.max() < hi)
    return BoundednessReport(
        max_abs_theta=float(np.abs(state.theta).max()),
        max_abs_theta_boundary=float(np.abs(state.theta_gamma).max()),
        phi_min=float(state.phi.min()),
        phi_max=float(state.phi.max()),
        max_abs_xi=float(np.abs(state.xi).max()),
        confined=confined,
    )
