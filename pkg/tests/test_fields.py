"""Spectral field primitives against hand-computed trigonometric oracles."""

import math

import numpy as np
import pytest

from lagflow.errors import DegenerateInput
from lagflow.fields import (
    Grid,
    MatrixField,
    ScalarField,
    VectorField,
    advection_term,
    apply_matrix,
    bilinear_sample,
    dealias,
    divergence,
    divergence_residual,
    gradient,
    inner_l2,
    inverse_laplacian,
    jacobian,
    l2_norm,
    laplacian,
    leray_project,
    linf_norm,
    load_field,
    lp_norm,
    matmul_fields,
    matrix_pointwise_norm,
    mean,
    multiply,
    pointwise_magnitude,
    random_divergence_free,
    random_scalar,
    random_vector,
    relative_l2_error,
    save_field,
    transpose_field,
    vector_laplacian,
    velocity_from_stream,
    vorticity,
)

EPS = 1e-12


def trig_scalar(grid, k1=1, k2=2):
    x1, x2 = grid.meshes()
    return ScalarField(grid, np.sin(k1 * x1) * np.cos(k2 * x2))


class TestGrid:
    def test_rejects_bad_sizes(self):
        with pytest.raises(DegenerateInput):
            Grid(7)
        with pytest.raises(DegenerateInput):
            Grid(0)

    def test_meshes_and_cell_area(self, grid32):
        x1, x2 = grid32.meshes()
        assert x1[1, 0] - x1[0, 0] == pytest.approx(2 * math.pi / 32)
        assert x2[0, 1] - x2[0, 0] == pytest.approx(2 * math.pi / 32)
        assert grid32.cell_area * 32**2 == pytest.approx((2 * math.pi) ** 2)

    def test_points_row_major(self, grid32):
        pts = grid32.points()
        assert pts.shape == (32 * 32, 2)
        x1, x2 = grid32.meshes()
        assert np.allclose(pts[:, 0], x1.ravel())
        assert np.allclose(pts[:, 1], x2.ravel())


class TestDerivatives:
    def test_gradient_trig(self, grid64):
        f = trig_scalar(grid64)
        x1, x2 = grid64.meshes()
        g = gradient(f)
        assert np.max(np.abs(g.values[0] - np.cos(x1) * np.cos(2 * x2))) < EPS
        assert np.max(np.abs(g.values[1]
                             + 2 * np.sin(x1) * np.sin(2 * x2))) < EPS

    def test_divergence_and_jacobian(self, grid64):
        x1, x2 = grid64.meshes()
        v = VectorField(grid64, np.stack([np.sin(x1) * np.cos(x2),
                                          np.cos(x1) * np.sin(x2)]))
        div = divergence(v)
        assert np.max(np.abs(div.values - 2 * np.cos(x1) * np.cos(x2))) < EPS
        jac = jacobian(v)
        # rows index the component, columns the derivative direction
        assert np.max(np.abs(jac.values[0, 1]
                             + np.sin(x1) * np.sin(x2))) < EPS
        assert np.max(np.abs(jac.values[1, 0]
                             + np.sin(x1) * np.sin(x2))) < EPS

    def test_laplacian_matches_eigenvalue(self, grid64):
        f = trig_scalar(grid64, 1, 2)
        lap = laplacian(f)
        assert np.max(np.abs(lap.values + 5.0 * f.values)) < 1e-11

    def test_vector_laplacian(self, grid64):
        x1, x2 = grid64.meshes()
        v = VectorField(grid64, np.stack([np.sin(x1 + x2), np.cos(2 * x1)]))
        lap = vector_laplacian(v)
        assert np.max(np.abs(lap.values[0] + 2 * np.sin(x1 + x2))) < EPS
        assert np.max(np.abs(lap.values[1] + 4 * np.cos(2 * x1))) < EPS

    def test_inverse_laplacian_round_trip(self, grid64, rng):
        f = random_scalar(grid64, 6, rng)
        u = inverse_laplacian(f)
        assert mean(u) == pytest.approx(0.0, abs=EPS)
        back = laplacian(u)
        assert np.max(np.abs(back.values - f.values)) < 1e-10

    def test_inverse_laplacian_reports_mean(self, grid64):
        f = ScalarField(grid64, np.full((64, 64), 3.5))
        u = inverse_laplacian(f)
        assert u.meta["subtracted_mean"] == pytest.approx(3.5)
        assert np.max(np.abs(u.values)) < EPS


class TestLeray:
    def test_kills_gradients(self, grid64, rng):
        phi = random_scalar(grid64, 5, rng)
        g = gradient(phi)
        proj = leray_project(g)
        assert l2_norm(proj) < 1e-12 * max(l2_norm(g), 1.0)

    def test_fixes_divergence_free(self, grid64, rng):
        v = random_divergence_free(grid64, 5, rng)
        proj = leray_project(v)
        assert np.max(np.abs(proj.values - v.values)) < EPS
        assert proj.divergence_free

    def test_idempotent_and_self_adjoint(self, grid64, rng):
        v = random_vector(grid64, 5, rng)
        w = random_vector(grid64, 5, rng)
        pv = leray_project(v)
        assert np.max(np.abs(leray_project(pv).values - pv.values)) < EPS
        assert inner_l2(pv, w) == pytest.approx(inner_l2(v, leray_project(w)),
                                                rel=1e-10, abs=1e-10)

    def test_divergence_residual_monitor(self, grid64, rng):
        v = random_divergence_free(grid64, 5, rng)
        assert divergence_residual(v) < 1e-12
        g = gradient(random_scalar(grid64, 3, rng))
        assert divergence_residual(g) > 1e-2


class TestStreamAndVorticity:
    def test_stream_velocity_is_divergence_free(self, grid64, rng):
        psi = random_scalar(grid64, 6, rng)
        v = velocity_from_stream(psi)
        assert divergence_residual(v) < 1e-12

    def test_vorticity_of_stream_flow(self, grid64):
        psi = trig_scalar(grid64, 2, 1)
        v = velocity_from_stream(psi)
        # vorticity of a stream-function flow is -laplacian(psi)
        w = vorticity(v)
        assert np.max(np.abs(w.values + laplacian(psi).values)) < 1e-11


class TestProductsAndDealias:
    def test_multiply_dealiases(self, grid32):
        x1, _ = grid32.meshes()
        k_high = 11  # 2 * 11 = 22 > 2n/3 with n = 32
        f = ScalarField(grid32, np.sin(k_high * x1))
        prod = multiply(f, f)
        spec = np.fft.fft2(prod.values)
        cutoff_mask = ~grid32.dealias_mask
        assert np.max(np.abs(spec[cutoff_mask])) < 1e-9

    def test_apply_matrix_and_matmul(self, grid32, rng):
        a = random_scalar(grid32, 3, rng)
        vals = np.zeros((2, 2, 32, 32))
        vals[0, 0] = 1.0 + 0.1 * a.values
        vals[1, 1] = 1.0
        vals[0, 1] = 0.2
        M = MatrixField(grid32, vals)
        v = random_vector(grid32, 3, rng)
        mv = apply_matrix(M, v, dealias_result=False)
        expect = np.einsum("ijab,jab->iab", vals, v.values)
        assert np.max(np.abs(mv.values - expect)) < EPS
        mm = matmul_fields(M, transpose_field(M))
        expect2 = np.einsum("ikab,jkab->ijab", vals, vals)
        assert np.max(np.abs(mm.values - expect2)) < EPS

    def test_advection_oracle(self, grid64):
        x1, x2 = grid64.meshes()
        v = VectorField(grid64, np.stack([np.sin(x2), np.zeros_like(x2)]))
        w = VectorField(grid64, np.stack([np.sin(x1), np.cos(x1)]))
        adv = advection_term(v, w)
        assert np.max(np.abs(adv.values[0]
                             - np.sin(x2) * np.cos(x1))) < 1e-11
        assert np.max(np.abs(adv.values[1]
                             + np.sin(x2) * np.sin(x1))) < 1e-11


class TestNorms:
    def test_l2_of_sine(self, grid64):
        f = ScalarField(grid64, np.sin(grid64.meshes()[0]))
        # integral of sin^2 over the torus is 2 pi^2
        assert l2_norm(f) == pytest.approx(math.sqrt(2 * math.pi**2),
                                           rel=1e-12)

    def test_lp_norm_sine(self, grid64):
        f = ScalarField(grid64, np.sin(grid64.meshes()[0]))
        # integral of sin^4 is (3/8) * (2 pi) * (2 pi)
        expect = (0.375 * (2 * math.pi) ** 2) ** 0.25
        assert lp_norm(f, 4) == pytest.approx(expect, rel=1e-12)

    def test_linf_and_magnitude(self, grid64):
        x1, x2 = grid64.meshes()
        v = VectorField(grid64, np.stack([3 * np.cos(x1), 4 * np.cos(x1)]))
        assert linf_norm(v) == pytest.approx(5.0, rel=1e-12)
        mag = pointwise_magnitude(v)
        assert mag.shape == (64, 64)

    def test_matrix_spectral_norm_closed_form(self, grid32):
        # [[0, c], [0, 0]] has spectral norm |c|; rotations have norm 1
        vals = np.zeros((2, 2, 32, 32))
        vals[0, 1] = 0.7
        assert np.max(np.abs(matrix_pointwise_norm(
            MatrixField(grid32, vals)) - 0.7)) < EPS
        theta = 0.3
        rot = np.zeros((2, 2, 32, 32))
        rot[0, 0] = math.cos(theta)
        rot[0, 1] = -math.sin(theta)
        rot[1, 0] = math.sin(theta)
        rot[1, 1] = math.cos(theta)
        assert np.max(np.abs(matrix_pointwise_norm(
            MatrixField(grid32, rot)) - 1.0)) < EPS

    def test_symmetric_matrix_norm_is_max_eigenvalue(self, grid32):
        vals = np.zeros((2, 2, 32, 32))
        vals[0, 0] = 2.0
        vals[1, 1] = -3.0
        assert np.max(np.abs(matrix_pointwise_norm(
            MatrixField(grid32, vals)) - 3.0)) < EPS

    def test_relative_error(self, grid32):
        f = trig_scalar(grid32)
        g = ScalarField(grid32, 1.01 * f.values)
        assert relative_l2_error(g, f) == pytest.approx(0.01, rel=1e-10)


class TestRandomFields:
    def test_band_limited(self, grid64, rng):
        f = random_scalar(grid64, 4, rng)
        spec = np.fft.fft2(f.values)
        k = np.fft.fftfreq(64, d=1.0 / 64)
        outside = (np.abs(k)[:, None] > 4) | (np.abs(k)[None, :] > 4)
        assert np.max(np.abs(spec[outside])) < 1e-9
        assert abs(mean(f)) < EPS

    def test_divergence_free_sampler(self, grid64, rng):
        v = random_divergence_free(grid64, 4, rng)
        assert divergence_residual(v) < 1e-12

    def test_seeded_reproducibility(self, grid32):
        a = random_vector(grid32, 3, np.random.default_rng(5))
        b = random_vector(grid32, 3, np.random.default_rng(5))
        assert np.array_equal(a.values, b.values)


class TestBilinearSample:
    def test_exact_on_grid_points(self, grid32, rng):
        f = random_scalar(grid32, 3, rng)
        pts = grid32.points()
        vals = bilinear_sample(grid32, f.values, pts)
        assert np.max(np.abs(vals - f.values.ravel())) < EPS

    def test_linear_interpolation_midpoint(self, grid32):
        f = np.arange(32 * 32, dtype=float).reshape(32, 32)
        h = grid32.h
        pts = np.array([[0.5 * h, 0.0]])
        got = bilinear_sample(grid32, f, pts)
        assert got[0] == pytest.approx(0.5 * (f[0, 0] + f[1, 0]))

    def test_periodic_wrap(self, grid32, rng):
        f = random_scalar(grid32, 3, rng)
        pts = np.array([[2 * math.pi + 0.1, -0.2]])
        wrapped = np.array([[0.1, 2 * math.pi - 0.2]])
        a = bilinear_sample(grid32, f.values, pts)
        b = bilinear_sample(grid32, f.values, wrapped)
        assert a == pytest.approx(b, rel=1e-12)


class TestFieldIO:
    def test_round_trip_all_kinds(self, grid32, rng, tmp_path):
        fields = [random_scalar(grid32, 3, rng),
                  random_vector(grid32, 3, rng)]
        vals = np.random.default_rng(1).normal(size=(2, 2, 32, 32))
        fields.append(MatrixField(grid32, vals))
        for i, f in enumerate(fields):
            path = tmp_path / f"field_{i}.txt"
            save_field(path, f)
            back = load_field(path)
            assert type(back) is type(f)
            assert back.grid.n == 32
            assert np.array_equal(back.values, f.values)

    def test_malformed_header_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("grid n=banana L=6.28 kind=scalar\n1.0\n")
        with pytest.raises(DegenerateInput):
            load_field(path)
