"""Flow-map accumulator and inverse-Jacobian algebra on an analytic shear map.

The shear X(y) = (y1 + t sin y2, y2) has a nilpotent Jacobian integral, so
every derived quantity (determinant, inverse, inverse rate, pullback
operators) has a closed form to compare against.
"""

import math

import numpy as np
import pytest

from lagflow.errors import DegenerateInput, NoConvergence, SeriesDiverged, SingularJacobian
from lagflow.fields import (
    MatrixField,
    ScalarField,
    VectorField,
    bilinear_sample,
    divergence,
    gradient,
    jacobian,
    l2_norm,
    matrix_pointwise_norm,
    random_scalar,
    random_vector,
    vector_laplacian,
)
from lagflow.flow_map import (
    FlowMap,
    advance_flow_map,
    deformation_gradient,
    gradient_bound_margin,
    inverse_deviation_margin,
    inverse_jacobian,
    inverse_jacobian_rate,
    inverse_map,
    jacobian_contraction,
    jacobian_determinant,
    load_flow_map,
    eulerian_to_lagrangian,
    lagrangian_to_eulerian,
    neumann_tail_bound,
    new_flow_map,
    positions,
    pullback_divergence,
    pullback_gradient,
    pullback_laplacian,
    save_flow_map,
)

EPS = 1e-12


def shear_flow(grid, t):
    """Synthetic flow map X(y) = (y1 + t sin y2, y2)."""
    x1, x2 = grid.meshes()
    zeros = np.zeros_like(x2)
    disp = VectorField(grid, np.stack([t * np.sin(x2), zeros]))
    cvals = np.zeros((2, 2, grid.n, grid.n))
    cvals[0, 1] = t * np.cos(x2)
    gvals = np.zeros((2, 2, grid.n, grid.n))
    gvals[0, 1] = np.cos(x2)
    return FlowMap(
        grid=grid,
        time=t,
        displacement=disp,
        jacobian_integral=MatrixField(grid, cvals),
        du_linf_integral=t,
        last_velocity=VectorField(grid, np.stack([np.sin(x2), zeros])),
        last_gradient=MatrixField(grid, gvals),
    )


class TestAccumulator:
    def test_new_flow_map_is_identity(self, grid32):
        flow = new_flow_map(grid32)
        assert flow.time == 0.0
        assert np.max(np.abs(flow.displacement.values)) == 0.0
        det = jacobian_determinant(flow)
        assert np.max(np.abs(det.values - 1.0)) == 0.0

    def test_trapezoid_exact_for_steady_velocity(self, grid32, rng):
        v = random_vector(grid32, 3, rng)
        flow = new_flow_map(grid32, v)
        dt = 0.125
        for _ in range(4):
            flow = advance_flow_map(flow, v, dt)
        assert flow.time == pytest.approx(0.5)
        assert np.max(np.abs(flow.displacement.values - 0.5 * v.values)) < EPS
        expect_c = 0.5 * jacobian(v).values
        assert np.max(np.abs(flow.jacobian_integral.values - expect_c)) < EPS
        expect_du = 0.5 * float(np.max(matrix_pointwise_norm(jacobian(v))))
        assert flow.du_linf_integral == pytest.approx(expect_du, rel=EPS)

    def test_positions_unwrapped(self, grid32):
        flow = shear_flow(grid32, 0.5)
        pts = positions(flow)
        x1, x2 = grid32.meshes()
        assert np.allclose(pts[:, 0], (x1 + 0.5 * np.sin(x2)).ravel())
        assert np.allclose(pts[:, 1], x2.ravel())

    def test_rejects_bad_steps(self, grid32):
        flow = new_flow_map(grid32)
        with pytest.raises(DegenerateInput):
            advance_flow_map(flow, flow.last_velocity, -0.1)


class TestDeterminantAndBounds:
    @pytest.mark.parametrize("t", [0.1, 0.5, 0.9])
    def test_shear_preserves_volume_exactly(self, grid64, t):
        det = jacobian_determinant(shear_flow(grid64, t))
        assert np.max(np.abs(det.values - 1.0)) < EPS

    @pytest.mark.parametrize("t", [0.1, 0.5, 0.9])
    def test_deformation_bound_margin(self, grid64, t):
        margin = gradient_bound_margin(shear_flow(grid64, t))
        # exp(t) - (t + sqrt(t^2 + 4)) / 2 for the worst gridpoint
        expect = math.exp(t) - 0.5 * (t + math.sqrt(t * t + 4.0))
        assert margin == pytest.approx(expect, rel=1e-10)
        assert margin > 0

    @pytest.mark.parametrize("t", [0.1, 0.4])
    def test_inverse_deviation_margin_equals_t(self, grid64, t):
        # |A - Id| = |C| = t for the nilpotent shear, so the margin is
        # exactly 2t - t = t
        margin = inverse_deviation_margin(shear_flow(grid64, t))
        assert margin == pytest.approx(t, rel=1e-10)


class TestInverseJacobian:
    def test_direct_matches_closed_form(self, grid64):
        t = 0.4
        flow = shear_flow(grid64, t)
        a = inverse_jacobian(flow)
        x2 = grid64.meshes()[1]
        assert np.max(np.abs(a.values[0, 0] - 1.0)) < EPS
        assert np.max(np.abs(a.values[1, 1] - 1.0)) < EPS
        assert np.max(np.abs(a.values[1, 0])) < EPS
        assert np.max(np.abs(a.values[0, 1] + t * np.cos(x2))) < EPS

    def test_neumann_exact_for_nilpotent(self, grid64):
        flow = shear_flow(grid64, 0.7)
        direct = inverse_jacobian(flow, "direct_adjugate")
        series = inverse_jacobian(flow, "neumann_series")
        assert np.max(np.abs(direct.values - series.values)) < EPS

    def test_neumann_tail_bound_honored_nontrivially(self, grid64):
        # non-nilpotent deviation with pointwise norm peaking at 0.45: the
        # k_max = 30 truncation error must sit under the geometric tail,
        # which is well above round-off here
        x1 = grid64.meshes()[0]
        cvals = np.zeros((2, 2, grid64.n, grid64.n))
        cvals[0, 1] = 0.45 * np.sin(x1)
        cvals[1, 0] = 0.20 * np.sin(x1)
        flow = new_flow_map(grid64)
        flow = FlowMap(grid=grid64, time=1.0,
                       displacement=flow.displacement,
                       jacobian_integral=MatrixField(grid64, cvals),
                       du_linf_integral=0.45,
                       last_velocity=flow.last_velocity,
                       last_gradient=flow.last_gradient)
        tail = neumann_tail_bound(flow, 30)
        assert 1e-13 < tail < 1e-9
        direct = inverse_jacobian(flow, "direct_adjugate")
        series = inverse_jacobian(flow, "neumann_series", k_max=30)
        diff = float(np.max(matrix_pointwise_norm(
            direct.values - series.values)))
        assert diff <= tail
        assert diff > 0.0

    def test_series_diverged_guard(self, grid32):
        flow = shear_flow(grid32, 1.0)
        with pytest.raises(SeriesDiverged):
            inverse_jacobian(flow, "neumann_series")
        with pytest.raises(SeriesDiverged):
            inverse_jacobian_rate(flow)

    def test_singular_jacobian_guard(self, grid32):
        cvals = np.zeros((2, 2, 32, 32))
        cvals[0, 0] = -0.999
        cvals[1, 1] = -0.999
        base = new_flow_map(grid32)
        flow = FlowMap(grid=grid32, time=1.0, displacement=base.displacement,
                       jacobian_integral=MatrixField(grid32, cvals),
                       du_linf_integral=0.999,
                       last_velocity=base.last_velocity,
                       last_gradient=base.last_gradient)
        with pytest.raises(SingularJacobian):
            inverse_jacobian(flow)

    def test_unknown_method_rejected(self, grid32):
        with pytest.raises(DegenerateInput):
            inverse_jacobian(new_flow_map(grid32), "qr")


class TestInverseRate:
    def test_rate_at_time_zero_is_minus_gradient(self, grid32, rng):
        v = random_vector(grid32, 4, rng)
        flow = new_flow_map(grid32, v)
        rate = inverse_jacobian_rate(flow)
        assert np.max(np.abs(rate.values + jacobian(v).values)) < EPS

    def test_rate_exact_on_shear(self, grid64):
        # frozen shear velocity: A(t) = Id - t C1, so dA/dt = -C1 at all t
        flow = shear_flow(grid64, 0.6)
        rate = inverse_jacobian_rate(flow)
        x2 = grid64.meshes()[1]
        assert np.max(np.abs(rate.values[0, 1] + np.cos(x2))) < EPS
        assert np.max(np.abs(rate.values[0, 0])) < EPS
        assert np.max(np.abs(rate.values[1, 0])) < EPS
        assert np.max(np.abs(rate.values[1, 1])) < EPS


class TestInverseMap:
    def test_recovers_labels_on_shear(self, grid64):
        t = 0.3
        flow = shear_flow(grid64, t)
        x = np.array([[1.0, 2.0], [4.0, 0.5], [0.1, 6.0]])
        y = inverse_map(flow, x)
        # exact inverse: y = (x1 - t sin(x2), x2)
        expect = x.copy()
        expect[:, 0] -= t * np.sin(x[:, 1])
        assert np.max(np.abs(y - expect)) < 1e-3  # bilinear displacement
        # consistency with the discrete displacement to the requested tol
        samp = bilinear_sample(grid64, flow.displacement.values, y)
        forward = y + np.moveaxis(samp, 0, -1)
        assert np.max(np.abs(forward - x)) < 1e-9

    def test_identity_shortcut(self, grid32):
        flow = new_flow_map(grid32)
        pts = np.array([[0.3, 0.4]])
        assert np.array_equal(inverse_map(flow, pts), pts)

    def test_no_convergence_for_expanding_map(self, grid32):
        # displacement depends on the coordinate being solved for, with
        # slope 2 > 1, so the fixed-point lookup cannot contract
        x1 = grid32.meshes()[0]
        disp = VectorField(grid32, np.stack([2.0 * np.sin(x1),
                                             np.zeros_like(x1)]))
        base = new_flow_map(grid32)
        flow = FlowMap(grid=grid32, time=1.0, displacement=disp,
                       jacobian_integral=base.jacobian_integral,
                       du_linf_integral=2.0,
                       last_velocity=base.last_velocity,
                       last_gradient=base.last_gradient)
        with pytest.raises(NoConvergence) as err:
            inverse_map(flow, np.array([[1.0, 1.3]]), max_iter=8)
        assert err.value.residual > 0

    def test_frame_change_round_trip(self, grid64, rng):
        flow = shear_flow(grid64, 0.2)
        v = random_vector(grid64, 3, rng)
        u = eulerian_to_lagrangian(v, flow)
        back = lagrangian_to_eulerian(u, flow)
        # two bilinear interpolations of a band-3 field on a 64-grid
        assert l2_norm(VectorField(grid64, back.values - v.values)) \
            < 2e-2 * l2_norm(v)


class TestPullbackOperators:
    def test_pullback_gradient_oracle(self, grid64):
        t = 0.35
        flow = shear_flow(grid64, t)
        a = inverse_jacobian(flow)
        x1, x2 = grid64.meshes()
        f = ScalarField(grid64, np.sin(x1))
        got = pullback_gradient(f, a)
        assert np.max(np.abs(got.values[0] - np.cos(x1))) < 1e-11
        assert np.max(np.abs(got.values[1]
                             + t * np.cos(x2) * np.cos(x1))) < 1e-11

    def test_gradient_rearrangement_identity(self, grid64, rng):
        # (grad - pullback grad) P = (Id - transpose(A)) grad P
        a = inverse_jacobian(shear_flow(grid64, 0.45))
        p = random_scalar(grid64, 6, rng)
        gp = gradient(p)
        lhs = gp.values - pullback_gradient(p, a).values
        rhs = gp.values - np.einsum("jiab,jab->iab", a.values, gp.values)
        scale = math.sqrt(np.sum(gp.values ** 2))
        assert math.sqrt(np.sum((lhs - rhs) ** 2)) < 1e-6 * scale

    def test_divergence_contraction_identity(self, grid64, rng):
        # div(A H) = A : D H for volume-preserving maps
        a = inverse_jacobian(shear_flow(grid64, 0.45))
        h = random_vector(grid64, 6, rng)
        lhs = pullback_divergence(h, a)
        rhs = jacobian_contraction(h, a)
        num = l2_norm(ScalarField(grid64, lhs.values - rhs.values))
        assert num < 1e-6 * max(l2_norm(lhs), 1e-30)

    def test_laplacian_difference_identity(self, grid64, rng):
        # (lap - pullback lap) u = div((Id - A A^T) grad u) componentwise
        a = inverse_jacobian(shear_flow(grid64, 0.45))
        u = random_vector(grid64, 6, rng)
        lhs = vector_laplacian(u).values - pullback_laplacian(u, a).values
        aat = np.einsum("ikab,jkab->ijab", a.values, a.values)
        rhs = np.empty_like(lhs)
        for i in range(2):
            gi = gradient(ScalarField(grid64, u.values[i]))
            mod = gi.values - np.einsum("ijab,jab->iab", aat, gi.values)
            rhs[i] = divergence(VectorField(grid64, mod)).values
        scale = l2_norm(vector_laplacian(u))
        assert l2_norm(VectorField(grid64, lhs - rhs)) < 1e-6 * scale


class TestPersistence:
    def test_save_load_round_trip(self, grid32, rng, tmp_path):
        v = random_vector(grid32, 3, rng)
        flow = new_flow_map(grid32, v)
        for _ in range(3):
            flow = advance_flow_map(flow, v, 0.05)
        save_flow_map(flow, tmp_path)
        back = load_flow_map(tmp_path)
        assert back.time == pytest.approx(flow.time)
        assert back.du_linf_integral == pytest.approx(flow.du_linf_integral)
        assert np.array_equal(back.displacement.values,
                              flow.displacement.values)
        assert np.array_equal(back.jacobian_integral.values,
                              flow.jacobian_integral.values)
        assert np.array_equal(back.last_velocity.values,
                              flow.last_velocity.values)
        assert np.array_equal(back.last_gradient.values,
                              flow.last_gradient.values)
