"""Tests for the staggered forward solver."""

import numpy as np
import pytest

from phasecontrol.geometry import TimeGrid, build_grid
from phasecontrol.potentials import (
    Regularization,
    constant_latent,
    logarithmic_potential,
    regular_potential,
    tanh_latent,
)
from phasecontrol.state import (
    BoundaryControl,
    InitialData,
    InvariantRegionError,
    PhysicalParams,
    SolverOptions,
    boundedness_check,
    energy_diagnostic,
    solve_state,
    weak_form_residual,
)

from oracles import dense_staggered_march


def interval_setup(n=7, n_steps=4, horizon=0.4):
    grid = build_grid((1.0,), (n,))
    tgrid = TimeGrid(horizon, n_steps)
    x = grid.coords[:, 0]
    init = InitialData(
        theta0=0.4 * np.cos(np.pi * x),
        phi0=0.3 + 0.2 * np.sin(2.0 * np.pi * x),
    )
    return grid, tgrid, x, init


def march_both_routes(grid, tgrid, params, spec, control, init, n_sweeps):
    state = solve_state(
        grid, tgrid, params, spec, control, init,
        options=SolverOptions(n_sweeps=n_sweeps),
    )
    th_ref, ph_ref = dense_staggered_march(
        W=grid.interior_weights,
        A=grid.stiffness.toarray(),
        bnodes=grid.boundary_nodes,
        S=grid.boundary_weights,
        sigma=params.sigma,
        tau=params.tau,
        alpha=params.alpha,
        m=params.aperture_on(grid),
        dt=tgrid.dt,
        n_steps=tgrid.n_steps,
        n_sweeps=n_sweeps,
        beta=spec.beta,
        dbeta=spec.dbeta,
        pi=spec.pi,
        lam=spec.lam,
        u=control.values,
        th0=init.theta0,
        ph0=init.phi0,
    )
    return state, th_ref, ph_ref


class TestAgainstDenseOracle:
    @pytest.mark.parametrize("n_sweeps", [1, 2, 3])
    def test_interval_regular_well(self, n_sweeps):
        grid, tgrid, x, init = interval_setup()
        params = PhysicalParams(sigma=0.8, tau=1.3, alpha=2.0)
        spec = regular_potential()
        rng = np.random.default_rng(3)
        control = BoundaryControl(rng.uniform(-1.0, 1.0, (tgrid.n_steps, 2)))
        state, th_ref, ph_ref = march_both_routes(
            grid, tgrid, params, spec, control, init, n_sweeps
        )
        np.testing.assert_allclose(state.theta, th_ref, rtol=0, atol=1e-10)
        np.testing.assert_allclose(state.phi, ph_ref, rtol=0, atol=1e-10)

    def test_interval_log_well_tanh_latent(self):
        grid, tgrid, x, init = interval_setup(n=9, n_steps=5, horizon=0.25)
        params = PhysicalParams(sigma=1.0, tau=0.7, alpha=1.5)
        spec = logarithmic_potential(2.0, tanh_latent())
        control = BoundaryControl.constant(grid, tgrid, 0.3)
        state, th_ref, ph_ref = march_both_routes(
            grid, tgrid, params, spec, control, init, 2
        )
        np.testing.assert_allclose(state.theta, th_ref, rtol=0, atol=1e-9)
        np.testing.assert_allclose(state.phi, ph_ref, rtol=0, atol=1e-9)

    def test_rectangle_regular_well(self):
        grid = build_grid((1.0, 0.8), (5, 4))
        tgrid = TimeGrid(0.2, 3)
        xy = grid.coords
        init = InitialData(
            theta0=0.3 * xy[:, 0] * (1.0 - xy[:, 1]),
            phi0=0.4 + 0.1 * np.cos(np.pi * xy[:, 0]) * np.cos(np.pi * xy[:, 1]),
        )
        params = PhysicalParams(sigma=1.2, tau=1.0, alpha=0.9)
        spec = regular_potential()
        rng = np.random.default_rng(5)
        control = BoundaryControl(
            rng.uniform(-0.5, 0.5, (tgrid.n_steps, grid.n_boundary))
        )
        state, th_ref, ph_ref = march_both_routes(
            grid, tgrid, params, spec, control, init, 2
        )
        np.testing.assert_allclose(state.theta, th_ref, rtol=0, atol=1e-10)
        np.testing.assert_allclose(state.phi, ph_ref, rtol=0, atol=1e-10)


class TestExactStationaryState:
    def test_constant_equilibrium_is_reproduced(self):
        # with unit latent coupling, phi* = 1/4 and theta* = gamma(1/4) solve
        # both discrete equations exactly when the control matches theta*;
        # the phase variable must then hold bitwise, the temperature to
        # linear-solver accuracy
        grid, tgrid, _, _ = interval_setup(n=9, n_steps=6, horizon=1.2)
        spec = regular_potential(constant_latent(1.0))
        theta_star = 0.1875  # gamma(0.25), exact dyadic
        init = InitialData(
            theta0=np.full(grid.n_nodes, theta_star),
            phi0=np.full(grid.n_nodes, 0.25),
        )
        control = BoundaryControl.constant(grid, tgrid, theta_star)
        state = solve_state(
            grid, tgrid, PhysicalParams(), spec, control, init
        )
        np.testing.assert_array_equal(state.phi, 0.25)
        assert np.max(np.abs(state.theta - theta_star)) <= 1e-13
        assert state.diagnostics.newton_iterations == 0


class TestTrajectoryContract:
    def test_shapes_trace_and_xi(self):
        grid, tgrid, _, init = interval_setup()
        spec = logarithmic_potential(1.0)
        control = BoundaryControl.constant(grid, tgrid, 0.2)
        state = solve_state(grid, tgrid, PhysicalParams(), spec, control, init)
        N1, M = tgrid.n_steps + 1, grid.n_nodes
        assert state.theta.shape == (N1, M)
        assert state.phi.shape == (N1, M)
        assert state.xi.shape == (N1, M)
        assert state.theta_gamma.shape == (N1, grid.n_boundary)
        np.testing.assert_array_equal(
            state.theta_gamma, state.theta[:, grid.boundary_nodes]
        )
        np.testing.assert_array_equal(state.xi, spec.beta(state.phi))
        assert len(state.steps) == tgrid.n_steps

    def test_initial_slice_matches_data(self):
        grid, tgrid, _, init = interval_setup()
        control = BoundaryControl.constant(grid, tgrid, 0.0)
        state = solve_state(
            grid, tgrid, PhysicalParams(), regular_potential(), control, init
        )
        np.testing.assert_array_equal(state.theta[0], init.theta0)
        np.testing.assert_array_equal(state.phi[0], init.phi0)

    def test_weak_residual_small_then_flags_perturbation(self):
        grid, tgrid, _, init = interval_setup()
        spec = regular_potential()
        control = BoundaryControl.constant(grid, tgrid, 0.4)
        params = PhysicalParams()
        state = solve_state(grid, tgrid, params, spec, control, init)
        resid = weak_form_residual(grid, tgrid, params, spec, state, control)
        assert resid.shape == (tgrid.n_steps,)
        assert np.max(resid) <= 1e-9
        state.theta[2, 3] += 1e-3
        bumped = weak_form_residual(grid, tgrid, params, spec, state, control)
        assert np.max(bumped) > 1e-6

    def test_regularized_run_drops_guard(self):
        grid, tgrid, _, init = interval_setup()
        spec = logarithmic_potential(2.0)
        control = BoundaryControl.constant(grid, tgrid, 1.0)
        state = solve_state(
            grid, tgrid, PhysicalParams(), spec, control, init,
            regularization=Regularization(0.1),
        )
        assert np.all(np.isfinite(state.theta))
        assert np.all(np.isfinite(state.phi))
        rep = boundedness_check(state, spec)
        assert rep.max_abs_theta >= rep.max_abs_theta_boundary


class TestEnergyDiagnostic:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_slack_nonnegative_log_well(self, seed):
        grid, tgrid, x, _ = interval_setup(n=9, n_steps=8, horizon=0.5)
        rng = np.random.default_rng(seed)
        init = InitialData(
            theta0=rng.uniform(-0.5, 0.5, grid.n_nodes),
            phi0=rng.uniform(-0.7, 0.7, grid.n_nodes),
        )
        params = PhysicalParams(tau=0.8, alpha=1.4)
        spec = logarithmic_potential(2.0)
        control = BoundaryControl(
            rng.uniform(-1.0, 1.0, (tgrid.n_steps, grid.n_boundary))
        )
        state = solve_state(grid, tgrid, params, spec, control, init)
        rep = energy_diagnostic(grid, tgrid, params, spec, state, control)
        assert rep.slack[0] == 0.0
        assert np.min(np.diff(rep.slack)) >= -1e-10
        assert np.all(np.isfinite(rep.lhs)) and np.all(np.isfinite(rep.rhs))

    def test_slack_nonnegative_regular_well(self):
        grid, tgrid, _, init = interval_setup(n=11, n_steps=10, horizon=1.0)
        params = PhysicalParams()
        spec = regular_potential(tanh_latent())
        control = BoundaryControl.constant(grid, tgrid, -0.6)
        state = solve_state(grid, tgrid, params, spec, control, init)
        rep = energy_diagnostic(grid, tgrid, params, spec, state, control)
        assert np.min(np.diff(rep.slack)) >= -1e-10


class TestInvariantRegionGuard:
    def test_benign_log_run_never_rejects(self):
        grid, tgrid, _, init = interval_setup(n=9, n_steps=6, horizon=0.3)
        spec = logarithmic_potential(2.0)
        control = BoundaryControl.constant(grid, tgrid, 0.8)
        state = solve_state(grid, tgrid, PhysicalParams(), spec, control, init)
        assert state.diagnostics.guard_rejections == 0
        assert state.phi.min() > -1.0 and state.phi.max() < 1.0

    def test_hard_push_subdivides_and_recovers(self):
        # transiently hot initial data drives the phase toward the singular
        # end; the full step converges onto the clamp and is rejected, while
        # the halved substeps let the temperature collapse between phase
        # moves and resolve the approach strictly inside
        grid = build_grid((1.0,), (7,))
        tgrid = TimeGrid(1.0, 2)
        spec = logarithmic_potential(2.0, constant_latent(5.0))
        init = InitialData(
            theta0=np.full(grid.n_nodes, 5.0), phi0=np.zeros(grid.n_nodes)
        )
        control = BoundaryControl.constant(grid, tgrid, 0.0)
        state = solve_state(
            grid, tgrid, PhysicalParams(), spec, control, init
        )
        d = state.diagnostics
        assert d.guard_rejections >= 1
        assert d.subdivided_steps >= 1
        assert state.phi.min() > -1.0 and state.phi.max() < 1.0
        for step in state.steps:
            total = sum(sub.dt for sub in step.substeps)
            assert total == pytest.approx(tgrid.dt, rel=1e-12)

    def test_budget_exhaustion_raises_typed_error(self):
        grid = build_grid((1.0,), (5,))
        tgrid = TimeGrid(1.0, 1)
        spec = logarithmic_potential(2.0, constant_latent(50.0))
        init = InitialData(
            theta0=np.full(grid.n_nodes, 50.0),
            phi0=np.full(grid.n_nodes, 0.9),
        )
        control = BoundaryControl.constant(grid, tgrid, 50.0)
        with pytest.raises(InvariantRegionError):
            solve_state(
                grid, tgrid, PhysicalParams(), spec, control, init,
                options=SolverOptions(retry_budget=2),
            )

    def test_initial_data_outside_guard_rejected(self):
        grid, tgrid, _, _ = interval_setup()
        spec = logarithmic_potential(2.0)
        init = InitialData(
            theta0=np.zeros(grid.n_nodes), phi0=np.full(grid.n_nodes, 1.0)
        )
        control = BoundaryControl.constant(grid, tgrid, 0.0)
        with pytest.raises(InvariantRegionError):
            solve_state(grid, tgrid, PhysicalParams(), spec, control, init)


class TestValidation:
    def test_control_shape_and_finiteness(self):
        grid, tgrid, _, init = interval_setup()
        spec = regular_potential()
        with pytest.raises(ValueError, match="control"):
            solve_state(
                grid, tgrid, PhysicalParams(), spec,
                BoundaryControl(np.zeros((3, 2))), init,
            )
        bad = np.zeros((tgrid.n_steps, 2))
        bad[1, 0] = np.nan
        with pytest.raises(ValueError, match="finite"):
            solve_state(
                grid, tgrid, PhysicalParams(), spec, BoundaryControl(bad), init
            )

    def test_initial_data_shape(self):
        grid, tgrid, _, _ = interval_setup()
        init = InitialData(theta0=np.zeros(3), phi0=np.zeros(grid.n_nodes))
        with pytest.raises(ValueError, match="theta0"):
            solve_state(
                grid, tgrid, PhysicalParams(), regular_potential(),
                BoundaryControl.constant(grid, tgrid, 0.0), init,
            )

    def test_params_validated(self):
        with pytest.raises(ValueError):
            PhysicalParams(sigma=0.0)
        with pytest.raises(ValueError):
            PhysicalParams(tau=-1.0)
        with pytest.raises(ValueError):
            PhysicalParams(aperture=np.array([1.0, -0.5]))
        with pytest.raises(ValueError):
            SolverOptions(n_sweeps=0)

    def test_aperture_profile_shape_checked(self):
        grid, tgrid, _, init = interval_setup()
        params = PhysicalParams(aperture=np.array([1.0, 0.5, 0.2]))
        with pytest.raises(ValueError, match="aperture"):
            solve_state(
                grid, tgrid, params, regular_potential(),
                BoundaryControl.constant(grid, tgrid, 0.0), init,
            )
