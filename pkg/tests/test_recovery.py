"""Halfspace-projection recovery filter tests.

The closed-form projection is checked against an exhaustive grid search and
against analytically derived example corrections.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viewsafe.geometry import InvalidInputError
from viewsafe.recovery import (
    FilterDecision,
    InfeasibleGridError,
    RecoveryParams,
    nagumo_ok,
    qp_oracle,
    recover,
)

vec6 = st.lists(st.floats(-2.0, 2.0), min_size=6, max_size=6).map(np.array)


class TestNagumo:
    def test_boundary_requires_inward_velocity(self):
        grad = np.array([1.0, 0, 0, 0, 0, 0])
        assert nagumo_ok(0.0, grad, np.array([0.1, 0, 0, 0, 0, 0]), alpha=1.0)
        assert not nagumo_ok(0.0, grad, np.array([-0.1, 0, 0, 0, 0, 0]), alpha=1.0)

    def test_interior_allows_controlled_approach(self):
        grad = np.array([1.0, 0, 0, 0, 0, 0])
        # grad.u = -0.5 >= -alpha*h = -1.0
        assert nagumo_ok(1.0, grad, np.array([-0.5, 0, 0, 0, 0, 0]), alpha=1.0)
        assert not nagumo_ok(1.0, grad, np.array([-1.5, 0, 0, 0, 0, 0]), alpha=1.0)


class TestRecover:
    def test_satisfied_constraint_passes_through(self):
        params = RecoveryParams()
        u = np.array([0.2, -0.1, 0.0, 0.0, 0.0, 0.3])
        d = recover(u, 0.5, np.array([1.0, 0, 0, 0, 0, 0]), params)
        assert not d.modified
        assert np.array_equal(d.u_out, u)
        assert d.constraint_slack >= 0

    def test_boundary_projection_zeroes_outward_component(self):
        # h = 0, grad = e1, u = (-1, 0.5, 0, ...): projection removes exactly
        # the outward x component, leaving (0, 0.5, 0, ...)
        params = RecoveryParams()
        u = np.array([-1.0, 0.5, 0.0, 0.0, 0.0, 0.0])
        d = recover(u, 0.0, np.array([1.0, 0, 0, 0, 0, 0]), params)
        assert d.modified
        assert np.allclose(d.u_out, [0.0, 0.5, 0.0, 0.0, 0.0, 0.0], atol=1e-12)
        assert d.constraint_slack == pytest.approx(0.0, abs=1e-12)

    def test_interior_projection_lands_on_plane(self):
        params = RecoveryParams(alpha=2.0)
        grad = np.array([0.5, -1.0, 0.25, 0.0, 0.3, 0.0])
        u = np.array([-1.0, 2.0, 0.0, 0.1, -0.4, 0.2])
        h = 0.1
        d = recover(u, h, grad, params)
        assert d.modified
        assert float(grad @ d.u_out) == pytest.approx(-params.alpha * h, abs=1e-10)

    def test_idempotent(self):
        params = RecoveryParams()
        grad = np.array([0.3, 0.7, -0.2, 0.1, 0.0, 0.4])
        u = np.array([-2.0, 0.0, 1.0, 0.0, 0.0, 0.0])
        d1 = recover(u, 0.05, grad, params)
        d2 = recover(d1.u_out, 0.05, grad, params)
        # re-filtering an already-projected action changes nothing (up to
        # roundoff in the on-plane dot product)
        assert np.allclose(d2.u_out, d1.u_out, atol=1e-12)

    def test_hold_fallback_on_degenerate_gradient(self):
        params = RecoveryParams(grad_eps=0.1, fallback="hold")
        d = recover(np.ones(6), -0.5, 1e-4 * np.ones(6), params)
        assert d.fallback_used
        assert np.allclose(d.u_out, 0.0)

    def test_retreat_fallback_moves_toward_target(self):
        params = RecoveryParams(grad_eps=0.1, fallback="retreat")
        d = recover(np.ones(6), -0.5, np.zeros(6), params,
                    retreat_target=np.array([3.0, 0.0, 0.0]))
        assert d.fallback_used
        assert np.allclose(d.u_out, [1.0, 0, 0, 0, 0, 0], atol=1e-12)

    def test_retreat_without_target_holds(self):
        params = RecoveryParams(grad_eps=0.1, fallback="retreat")
        d = recover(np.ones(6), -0.5, np.zeros(6), params)
        assert d.fallback_used
        assert np.allclose(d.u_out, 0.0)

    def test_nonfinite_rejected(self):
        with pytest.raises(InvalidInputError):
            recover(np.full(6, np.nan), 0.0, np.ones(6), RecoveryParams())

    def test_param_validation(self):
        with pytest.raises(InvalidInputError):
            RecoveryParams(alpha=0.0)
        with pytest.raises(InvalidInputError):
            RecoveryParams(fallback="stop")


class TestRecoverProperties:
    @settings(max_examples=200, deadline=None)
    @given(vec6, vec6, st.floats(-0.5, 0.5), st.floats(0.1, 3.0))
    def test_output_satisfies_constraint(self, u, grad, h, alpha):
        params = RecoveryParams(alpha=alpha, grad_eps=1e-6)
        d = recover(u, h, grad, params)
        if not d.fallback_used:
            assert float(np.asarray(grad) @ d.u_out) + alpha * h >= -1e-9

    @settings(max_examples=100, deadline=None)
    @given(vec6, vec6, st.floats(0.25, 4.0))
    def test_boundary_projection_scale_equivariance(self, u, grad, scale):
        # on the boundary (h = 0) the projection is the plain orthogonal
        # projection onto grad.u >= 0, invariant to rescaling the gradient
        grad = np.asarray(grad)
        if np.linalg.norm(grad) < 1e-3:
            return
        params = RecoveryParams()
        d1 = recover(u, 0.0, grad, params)
        d2 = recover(u, 0.0, scale * grad, params)
        assert np.allclose(d1.u_out, d2.u_out, atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(vec6, vec6, st.floats(-0.5, 0.5))
    def test_minimum_norm_among_feasible(self, u, grad, h):
        grad = np.asarray(grad)
        u = np.asarray(u)
        if np.linalg.norm(grad) < 1e-3:
            return
        params = RecoveryParams()
        d = recover(u, h, grad, params)
        if not d.modified:
            return
        # any feasible point is at least as far from u_pi as the projection
        correction = np.linalg.norm(d.u_out - u)
        rng = np.random.default_rng(0)
        for _ in range(20):
            cand = u + rng.normal(0, 1.0, 6)
            if float(grad @ cand) + params.alpha * h >= 0:
                assert np.linalg.norm(cand - u) >= correction - 1e-9


class TestQpOracle:
    def test_agrees_with_closed_form(self):
        rng = np.random.default_rng(41)
        params = RecoveryParams()
        for _ in range(25):
            u = rng.uniform(-1, 1, 6)
            grad = rng.uniform(-1, 1, 6)
            h = rng.uniform(-0.3, 0.3)
            if np.linalg.norm(grad) < 0.2:
                continue
            closed = recover(u, h, grad, params).u_out
            oracle = qp_oracle(u, h, grad, params.alpha,
                               grid_radius=3.0, grid_step=0.02)
            assert np.linalg.norm(closed - oracle) < 0.05

    def test_grid_refinement_converges(self):
        u = np.array([-1.0, 0.4, 0.0, 0.0, 0.0, 0.0])
        grad = np.array([1.0, 0.2, 0.0, 0.0, 0.0, 0.0])
        h = -0.1
        closed = recover(u, h, grad, RecoveryParams()).u_out
        err = [np.linalg.norm(qp_oracle(u, h, grad, 1.0, 2.0, step) - closed)
               for step in (0.2, 0.1, 0.05)]
        assert err[2] <= err[0] + 1e-12
        assert err[2] < 0.1

    def test_feasible_input_returned_unchanged(self):
        u = np.array([1.0, 0, 0, 0, 0, 0])
        out = qp_oracle(u, 1.0, u, 1.0, 1.0, 0.1)
        assert np.array_equal(out, u)

    def test_infeasible_zero_gradient(self):
        with pytest.raises(InfeasibleGridError):
            qp_oracle(np.ones(6), -1.0, np.zeros(6), 1.0, 1.0, 0.1)

    def test_bad_grid_step(self):
        with pytest.raises(InvalidInputError):
            qp_oracle(np.ones(6), -1.0, np.ones(6), 1.0, 1.0, 0.0)
