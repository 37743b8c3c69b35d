"""Experiment drivers: derivative checks, regularization sweeps,
continuous-dependence probes, and boundedness audits.

Each driver consumes a self-contained problem instance, draws any
randomness from a caller-supplied seed, and returns a plain report object;
thresholds are recorded alongside the measurements so a report can be
judged on its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .adjoint import CostSpec, gradient, solve_adjoint
from .geometry import SpatialGrid, TimeGrid
from .norms import (
    control_inner,
    control_norm,
    sensitivity_norm,
    state_difference_norm,
    trajectory_l2,
)
from .optimize import ControlBounds, evaluate_cost
from .potentials import PotentialSpec, Regularization
from .sensitivity import directional_cost_derivative, solve_linearized
from .state import (
    BoundaryControl,
    InitialData,
    PhysicalParams,
    SolverError,
    SolverOptions,
    boundedness_check,
    solve_state,
)

__all__ = [
    "Instance",
    "GradCheckProbe",
    "GradCheckReport",
    "EpsilonSweepReport",
    "ContdepReport",
    "BoundedAuditReport",
    "grad_check",
    "epsilon_sweep",
    "contdep_probe",
    "bounded_audit",
]

REL_ERR_TOL = 1e-3
SLOPE_BAND = (1.7, 2.3)
GAP_TOL = 1e-10
BAND_FACTOR = 1e2
_TRAJECTORY_FAULT = 0.05


@dataclass
class Instance:
    """One fully specified control problem, ready to solve."""

    grid: SpatialGrid
    tgrid: TimeGrid
    params: PhysicalParams
    potential: PotentialSpec
    init: InitialData
    control: BoundaryControl
    cost: CostSpec | None = None
    bounds: ControlBounds | None = None
    regularization: Regularization | None = None
    solver_options: SolverOptions | None = None

    def solve(self, control: BoundaryControl | None = None):
        return solve_state(
            self.grid, self.tgrid, self.params, self.potential,
            control if control is not None else self.control, self.init,
            regularization=self.regularization, options=self.solver_options,
        )


@dataclass
class GradCheckProbe:
    index: int
    rel_err: float | None = None
    slope: float | None = None
    gap: float | None = None
    error: str | None = None
    passed: bool = False


@dataclass
class GradCheckReport:
    seed: int
    deltas: tuple[float, ...]
    fd_delta: float
    rel_err_tol: float
    slope_band: tuple[float, float]
    gap_tol: float
    probes: list[GradCheckProbe] = field(default_factory=list)
    passed: bool = False


def _require_cost(instance: Instance) -> CostSpec:
    if instance.cost is None:
        raise ValueError("instance has no cost attached")
    return instance.cost


def grad_check(
    instance: Instance,
    n_directions: int = 5,
    deltas: tuple[float, ...] = (1e-1, 1e-2, 1e-3),
    fd_delta: float = 1e-4,
    seed: int = 0,
    inject_fault: str | None = None,
) -> GradCheckReport:
    """Derivative consistency audit along random control directions.

    For each direction, three independent measurements: the adjoint
    pairing against a central difference of the cost, the Taylor-remainder
    slope of the solution map in the composite trajectory norm, and the
    mismatch between the adjoint pairing and the linearized-march
    derivative.  A probe that cannot be solved is reported failed with its
    error rather than aborting the sweep.  Fault injections corrupt the
    quantity named ("negated-gradient", "perturbed-trajectory") so a
    healthy pipeline can be told apart from a lucky one.
    """
    if inject_fault not in (None, "negated-gradient", "perturbed-trajectory"):
        raise ValueError(f"unknown fault {inject_fault!r}")
    cost = _require_cost(instance)
    rng = np.random.default_rng(seed)
    report = GradCheckReport(
        seed=seed,
        deltas=tuple(deltas),
        fd_delta=fd_delta,
        rel_err_tol=REL_ERR_TOL,
        slope_band=SLOPE_BAND,
        gap_tol=GAP_TOL,
    )
    base = instance.solve()
    deriv_state = base
    if inject_fault == "perturbed-trajectory":
        deriv_state = replace(base, theta=base.theta + _TRAJECTORY_FAULT)
    adj = solve_adjoint(
        instance.grid, instance.tgrid, instance.params, instance.potential,
        deriv_state, cost, instance.regularization,
    )
    g = gradient(instance.grid, instance.params, adj)
    if inject_fault == "negated-gradient":
        g = -g
    uv = instance.control.checked(instance.grid, instance.tgrid)
    for i in range(n_directions):
        probe = GradCheckProbe(index=i)
        report.probes.append(probe)
        h = rng.standard_normal(uv.shape)
        try:
            pair = control_inner(instance.grid, instance.tgrid, g, h)
            plus = instance.solve(BoundaryControl(values=uv + fd_delta * h))
            minus = instance.solve(BoundaryControl(values=uv - fd_delta * h))
            fd = (
                evaluate_cost(plus, cost, instance.grid, instance.tgrid)
                - evaluate_cost(minus, cost, instance.grid, instance.tgrid)
            ) / (2 * fd_delta)
            probe.rel_err = abs(fd - pair) / max(1.0, abs(pair))

            sens = solve_linearized(
                instance.grid, instance.tgrid, instance.params,
                instance.potential, deriv_state, BoundaryControl(values=h),
                instance.regularization,
            )
            dd = directional_cost_derivative(
                instance.grid, instance.tgrid, deriv_state, sens, cost
            )
            probe.gap = abs(pair - dd) / max(1.0, abs(pair))

            rems = []
            for d in deltas:
                pert = instance.solve(BoundaryControl(values=uv + d * h))
                diff = _remainder(pert, base, sens, d)
                rems.append(sensitivity_norm(instance.grid, instance.tgrid, diff))
            if max(rems) < 1e-14:
                probe.slope = None  # exactly linear response; nothing to fit
                slope_ok = True
            else:
                probe.slope = float(
                    np.polyfit(np.log10(deltas), np.log10(rems), 1)[0]
                )
                slope_ok = SLOPE_BAND[0] <= probe.slope <= SLOPE_BAND[1]
            probe.passed = (
                probe.rel_err <= REL_ERR_TOL
                and probe.gap <= GAP_TOL
                and slope_ok
            )
        except SolverError as exc:
            probe.error = str(exc)
            probe.passed = False
    report.passed = bool(report.probes) and all(p.passed for p in report.probes)
    return report


class _FieldTriple:
    def __init__(self, Theta, Theta_gamma, Phi):
        self.Theta = Theta
        self.Theta_gamma = Theta_gamma
        self.Phi = Phi


def _remainder(pert, base, sens, delta):
    return _FieldTriple(
        Theta=pert.theta - base.theta - delta * sens.Theta,
        Theta_gamma=pert.theta_gamma - base.theta_gamma - delta * sens.Theta_gamma,
        Phi=pert.phi - base.phi - delta * sens.Phi,
    )


@dataclass
class EpsilonSweepReport:
    eps: tuple[float, ...]
    succ_diff_phi: list[float]
    succ_diff_theta: list[float]
    dist_phi: list[float]
    dist_theta: list[float]
    monotone_phi: bool
    monotone_theta: bool
    passed: bool


def epsilon_sweep(
    instance: Instance, eps_list=(0.2, 0.1, 0.05, 0.025)
) -> EpsilonSweepReport:
    """Smoothing-parameter sweep against the direct singular solve.

    Solves the instance once per smoothing level (largest first) and once
    directly, then reports the Cauchy differences between consecutive
    levels and each level's distance to the direct solution, both in
    space-time L2.  The checkable surrogate for vanishing-smoothing
    convergence is that both sequences shrink.
    """
    if not np.all(np.isfinite(instance.potential.domain)):
        raise ValueError("smoothing sweep needs a potential with a bounded domain")
    eps = tuple(sorted(set(float(e) for e in eps_list), reverse=True))
    if len(eps) < 2:
        raise ValueError("need at least two smoothing levels")
    runs = []
    for e in eps:
        inst = replace(instance, regularization=Regularization(eps=e))
        runs.append(inst.solve())
    direct = replace(instance, regularization=None).solve()
    gr, tg = instance.grid, instance.tgrid
    succ_phi = [
        trajectory_l2(gr, tg, a.phi - b.phi) for a, b in zip(runs, runs[1:])
    ]
    succ_theta = [
        trajectory_l2(gr, tg, a.theta - b.theta) for a, b in zip(runs, runs[1:])
    ]
    dist_phi = [trajectory_l2(gr, tg, r.phi - direct.phi) for r in runs]
    dist_theta = [trajectory_l2(gr, tg, r.theta - direct.theta) for r in runs]
    mono_phi = all(b <= a for a, b in zip(succ_phi, succ_phi[1:]))
    mono_theta = all(b <= a for a, b in zip(succ_theta, succ_theta[1:]))
    return EpsilonSweepReport(
        eps=eps,
        succ_diff_phi=succ_phi,
        succ_diff_theta=succ_theta,
        dist_phi=dist_phi,
        dist_theta=dist_theta,
        monotone_phi=mono_phi,
        monotone_theta=mono_theta,
        passed=mono_phi and mono_theta,
    )


@dataclass
class ContdepReport:
    seed: int
    separations: tuple[float, ...]
    ratios: np.ndarray  # (n_pairs, n_separations); NaN marks skipped pairs
    band_ratio: float
    band_factor: float
    within_band: bool


def contdep_probe(
    instance: Instance,
    n_pairs: int = 10,
    separations: tuple[float, ...] = (1.0, 1e-2, 1e-4, 1e-6),
    seed: int = 0,
) -> ContdepReport:
    """Stability-ratio sampling across widely separated control pairs.

    Each pair solves the instance at the base control and at a displaced
    control a prescribed distance away, then forms the ratio of the
    composite trajectory distance to the control distance.  Boundedness of
    the solution map shows up as all ratios falling inside one
    multiplicative band, regardless of separation scale.
    """
    rng = np.random.default_rng(seed)
    uv = instance.control.checked(instance.grid, instance.tgrid)
    base = instance.solve()
    ratios = np.full((n_pairs, len(separations)), np.nan)
    for i in range(n_pairs):
        d = rng.standard_normal(uv.shape)
        dn = control_norm(instance.grid, instance.tgrid, d)
        if dn == 0.0:
            continue  # degenerate draw: both members coincide
        unit = d / dn
        for j, sep in enumerate(separations):
            other = instance.solve(BoundaryControl(values=uv + sep * unit))
            dist = state_difference_norm(instance.grid, instance.tgrid, other, base)
            gap = control_norm(
                instance.grid, instance.tgrid, (uv + sep * unit) - uv
            )
            ratios[i, j] = dist / gap
    finite = ratios[np.isfinite(ratios)]
    if finite.size and finite.min() > 0:
        band = float(finite.max() / finite.min())
    else:
        band = float("inf") if finite.size else float("nan")
    return ContdepReport(
        seed=seed,
        separations=tuple(separations),
        ratios=ratios,
        band_ratio=band,
        band_factor=BAND_FACTOR,
        within_band=bool(band <= BAND_FACTOR),
    )


@dataclass
class BoundedAuditRow:
    label: str
    max_abs_theta: float
    max_abs_theta_boundary: float
    phi_min: float
    phi_max: float
    max_abs_xi: float
    guard_rejections: int


@dataclass
class BoundedAuditReport:
    seed: int
    rows: list[BoundedAuditRow]
    uniform_theta_bound: float
    phi_min: float
    phi_max: float
    total_guard_rejections: int
    confined: bool | None


def bounded_audit(
    instance: Instance, n_random: int = 10, seed: int = 0
) -> BoundedAuditReport:
    """Amplitude audit over a family of admissible controls.

    Runs the box corners plus uniform random draws from the box and
    collects the trajectory amplitude report of each run; the aggregate
    rows expose the uniform temperature bound and, for a potential with a
    bounded domain, strict interior confinement of the phase.
    """
    if instance.bounds is None:
        raise ValueError("instance has no control box attached")
    rng = np.random.default_rng(seed)
    lo, hi = instance.bounds.tables(instance.grid, instance.tgrid)
    family = [("corner-min", lo.copy()), ("corner-max", hi.copy())]
    for k in range(n_random):
        draw = lo + rng.uniform(size=lo.shape) * (hi - lo)
        family.append((f"random-{k}", draw))
    rows = []
    confined: bool | None = None
    for label, vals in family:
        state = instance.solve(BoundaryControl(values=vals))
        rep = boundedness_check(state, instance.potential)
        rows.append(
            BoundedAuditRow(
                label=label,
                max_abs_theta=rep.max_abs_theta,
                max_abs_theta_boundary=rep.max_abs_theta_boundary,
                phi_min=rep.phi_min,
                phi_max=rep.phi_max,
                max_abs_xi=rep.max_abs_xi,
                guard_rejections=state.diagnostics.guard_rejections,
            )
        )
        if rep.confined is not None:
            confined = rep.confined if confined is None else (confined and rep.confined)
    return BoundedAuditReport(
        seed=seed,
        rows=rows,
        uniform_theta_bound=max(r.max_abs_theta for r in rows),
        phi_min=min(r.phi_min for r in rows),
        phi_max=max(r.phi_max for r in rows),
        total_guard_rejections=sum(r.guard_rejections for r in rows),
        confined=confined,
    )
