"""Adjoint transpose checks: exact pairing with the linearized march,
terminal conditions, linearity in the cost, and agreement of the gradient
with finite differences of the cost through the nonlinear solver.
"""

import numpy as np
import pytest

from phasecontrol.adjoint import (
    AdjointTrajectory,
    CostSpec,
    duality_gap,
    gradient,
    solve_adjoint,
)
from phasecontrol.geometry import TimeGrid, build_grid
from phasecontrol.norms import control_inner
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
    PhysicalParams,
    solve_state,
)
from test_sensitivity import loop_cost, make_instance


def make_cost(inst, seed=101, kappa1=1.0, kappa2=0.5):
    rng = np.random.default_rng(seed)
    M = inst.grid.n_nodes
    return CostSpec(
        kappa1=kappa1,
        kappa2=kappa2,
        theta_target=0.1 * rng.standard_normal((inst.tgrid.n_steps + 1, M)),
        phi_target=0.2 * rng.standard_normal(M),
    )


class TestDuality:
    def test_gap_at_round_off_singular_well(self):
        inst = make_instance()
        cost = make_cost(inst)
        for _ in range(10):
            h = BoundaryControl(values=inst.rng.standard_normal((8, 2)))
            gap = duality_gap(
                inst.grid, inst.tgrid, inst.params, inst.potential,
                inst.state, cost, h,
            )
            assert gap <= 1e-10

    def test_gap_at_round_off_with_regularization(self):
        inst = make_instance()
        reg = Regularization(eps=0.1)
        state = solve_state(
            inst.grid, inst.tgrid, inst.params, inst.potential,
            BoundaryControl(values=inst.u0), inst.init, regularization=reg,
        )
        cost = make_cost(inst)
        for _ in range(5):
            h = BoundaryControl(values=inst.rng.standard_normal((8, 2)))
            gap = duality_gap(
                inst.grid, inst.tgrid, inst.params, inst.potential,
                state, cost, h, regularization=reg,
            )
            assert gap <= 1e-10

    def test_gap_at_round_off_planar_domain(self):
        rng = np.random.default_rng(31)
        grid = build_grid((1.0, 0.8), (6, 5))
        tgrid = TimeGrid(0.3, 5)
        params = PhysicalParams(sigma=1.0, tau=0.5, alpha=2.0)
        pot = regular_potential(latent=tanh_latent())
        x = grid.coords
        init = InitialData(
            theta0=0.3 * np.cos(np.pi * x[:, 0]),
            phi0=0.4 + 0.3 * np.sin(np.pi * x[:, 1]),
        )
        nB = grid.n_boundary
        u = BoundaryControl(values=0.2 * rng.standard_normal((5, nB)))
        state = solve_state(grid, tgrid, params, pot, u, init)
        cost = CostSpec(
            kappa1=2.0,
            kappa2=1.0,
            theta_target=0.1 * rng.standard_normal((6, grid.n_nodes)),
            phi_target=0.1 * rng.standard_normal(grid.n_nodes),
        )
        for _ in range(5):
            h = BoundaryControl(values=rng.standard_normal((5, nB)))
            assert duality_gap(grid, tgrid, params, pot, state, cost, h) <= 1e-10

    def test_gap_survives_step_subdivision(self):
        # same transient-heat push used in the state tests: the recorded
        # schedule contains halved substeps, and the backward walk must
        # retrace exactly that schedule
        grid = build_grid((1.0,), (7,))
        tgrid = TimeGrid(1.0, 2)
        pot = logarithmic_potential(2.0, constant_latent(5.0))
        init = InitialData(
            theta0=np.full(grid.n_nodes, 5.0), phi0=np.zeros(grid.n_nodes)
        )
        params = PhysicalParams()
        state = solve_state(
            grid, tgrid, params, pot, BoundaryControl.constant(grid, tgrid, 0.0), init
        )
        assert state.diagnostics.subdivided_steps >= 1
        rng = np.random.default_rng(37)
        cost = CostSpec(
            kappa1=1.0,
            kappa2=1.0,
            theta_target=rng.standard_normal((3, 7)),
            phi_target=rng.standard_normal(7),
        )
        for _ in range(5):
            h = BoundaryControl(values=rng.standard_normal((2, 2)))
            assert duality_gap(grid, tgrid, params, pot, state, cost, h) <= 1e-10


class TestStructure:
    def test_zero_cost_gives_zero_adjoint_and_gradient(self):
        inst = make_instance()
        cost = CostSpec(
            kappa1=0.0,
            kappa2=0.0,
            theta_target=np.zeros((9, 9)),
            phi_target=np.zeros(9),
        )
        adj = solve_adjoint(
            inst.grid, inst.tgrid, inst.params, inst.potential, inst.state, cost
        )
        assert not adj.p.any()
        assert not adj.q.any()
        assert not gradient(inst.grid, inst.params, adj).any()

    def test_terminal_rows(self):
        inst = make_instance()
        cost = make_cost(inst)
        adj = solve_adjoint(
            inst.grid, inst.tgrid, inst.params, inst.potential, inst.state, cost
        )
        assert not adj.p[-1].any()
        np.testing.assert_array_equal(
            adj.q[-1], cost.kappa2 * (inst.state.phi[-1] - cost.phi_target)
        )

    def test_adjoint_is_additive_in_the_cost(self):
        inst = make_instance()
        cost = make_cost(inst)
        only_theta = CostSpec(
            kappa1=cost.kappa1,
            kappa2=0.0,
            theta_target=cost.theta_target,
            phi_target=cost.phi_target,
        )
        only_phi = CostSpec(
            kappa1=0.0,
            kappa2=cost.kappa2,
            theta_target=cost.theta_target,
            phi_target=cost.phi_target,
        )
        args = (inst.grid, inst.tgrid, inst.params, inst.potential, inst.state)
        both = solve_adjoint(*args, cost)
        a = solve_adjoint(*args, only_theta)
        b = solve_adjoint(*args, only_phi)
        np.testing.assert_allclose(both.p, a.p + b.p, rtol=0, atol=1e-13)
        np.testing.assert_allclose(both.q, a.q + b.q, rtol=0, atol=1e-13)

    def test_boundary_rows_are_the_exact_trace(self):
        inst = make_instance()
        adj = solve_adjoint(
            inst.grid, inst.tgrid, inst.params, inst.potential, inst.state,
            make_cost(inst),
        )
        np.testing.assert_array_equal(
            adj.p_gamma, adj.p[:, inst.grid.boundary_nodes]
        )


class TestGradient:
    def test_shape_is_one_row_per_step(self):
        inst = make_instance()
        adj = solve_adjoint(
            inst.grid, inst.tgrid, inst.params, inst.potential, inst.state,
            make_cost(inst),
        )
        g = gradient(inst.grid, inst.params, adj)
        assert g.shape == (8, 2)

    def test_vanishes_where_the_aperture_is_closed(self):
        inst = make_instance()
        params = PhysicalParams(
            sigma=inst.params.sigma,
            tau=inst.params.tau,
            alpha=inst.params.alpha,
            aperture=np.array([0.0, 1.0]),
        )
        state = solve_state(
            inst.grid, inst.tgrid, params, inst.potential,
            BoundaryControl(values=inst.u0), inst.init,
        )
        adj = solve_adjoint(
            inst.grid, inst.tgrid, params, inst.potential, state, make_cost(inst)
        )
        g = gradient(inst.grid, params, adj)
        assert not g[:, 0].any()
        assert g[:, 1].any()

    def test_pairs_like_a_central_difference_of_the_cost(self):
        inst = make_instance()
        cost = make_cost(inst)
        adj = solve_adjoint(
            inst.grid, inst.tgrid, inst.params, inst.potential, inst.state, cost
        )
        g = gradient(inst.grid, inst.params, adj)
        h = inst.rng.standard_normal((8, 2))
        lhs = control_inner(inst.grid, inst.tgrid, g, h)
        d = 1e-4
        vals = []
        for sign in (+1.0, -1.0):
            st = solve_state(
                inst.grid, inst.tgrid, inst.params, inst.potential,
                BoundaryControl(values=inst.u0 + sign * d * h), inst.init,
                options=inst.opts,
            )
            vals.append(loop_cost(inst.grid, inst.tgrid, st, cost))
        fd = (vals[0] - vals[1]) / (2 * d)
        assert lhs == pytest.approx(fd, rel=1e-5)


class TestValidation:
    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            CostSpec(
                kappa1=-1.0,
                kappa2=0.0,
                theta_target=np.zeros((9, 9)),
                phi_target=np.zeros(9),
            )

    def test_target_shapes_checked(self):
        inst = make_instance()
        bad = CostSpec(
            kappa1=1.0,
            kappa2=1.0,
            theta_target=np.zeros((3, 9)),
            phi_target=np.zeros(9),
        )
        with pytest.raises(ValueError, match="theta_target"):
            solve_adjoint(
                inst.grid, inst.tgrid, inst.params, inst.potential, inst.state, bad
            )
        bad2 = CostSpec(
            kappa1=1.0,
            kappa2=1.0,
            theta_target=np.zeros((9, 9)),
            phi_target=np.zeros(4),
        )
        with pytest.raises(ValueError, match="phi_target"):
            solve_adjoint(
                inst.grid, inst.tgrid, inst.params, inst.potential, inst.state, bad2
            )

    def test_non_finite_targets_rejected(self):
        inst = make_instance()
        tt = np.zeros((9, 9))
        tt[2, 3] = np.nan
        bad = CostSpec(
            kappa1=1.0, kappa2=1.0, theta_target=tt, phi_target=np.zeros(9)
        )
        with pytest.raises(ValueError, match="finite"):
            solve_adjoint(
                inst.grid, inst.tgrid, inst.params, inst.potential, inst.state, bad
            )
