"""Transported piecewise-constant density and interface markers."""

import math

import numpy as np
import pytest

from lagflow.density import (
    InterfaceMarkers,
    PiecewiseConstantDensity,
    SmoothDensity,
    advect_markers,
    circle_markers,
    density_at_time,
    density_bounds,
    disk_density,
    enclosed_area,
    jump_ratio,
    mask_density,
    rectangle_density,
)
from lagflow.errors import DegenerateInput, SelfIntersection
from lagflow.fields import Grid, ScalarField, VectorField
from lagflow.flow_map import FlowMap, new_flow_map


def translation_flow(grid, shift):
    """Flow map of a rigid translation by `shift`."""
    base = new_flow_map(grid)
    ones = np.ones((grid.n, grid.n))
    disp = VectorField(grid, np.stack([shift[0] * ones, shift[1] * ones]))
    return FlowMap(grid=grid, time=1.0, displacement=disp,
                   jacobian_integral=base.jacobian_integral,
                   du_linf_integral=0.0,
                   last_velocity=base.last_velocity,
                   last_gradient=base.last_gradient)


class TestPiecewiseConstant:
    def test_two_exact_values(self, grid64, rng):
        rho = disk_density(1.0, 0.1, (math.pi, math.pi), 1.0)
        pts = rng.uniform(0, 2 * math.pi, size=(5000, 2))
        vals = rho.values_at(pts)
        assert set(np.unique(vals)) <= {1.0, 1.1}
        assert density_bounds(rho) == (1.0, 1.1)
        assert jump_ratio(rho) == pytest.approx(0.1)

    def test_rejects_bad_parameters(self):
        with pytest.raises(DegenerateInput):
            PiecewiseConstantDensity(base=0.0, jump=0.1,
                                     indicator=lambda p: p[..., 0] > 0)
        with pytest.raises(DegenerateInput):
            PiecewiseConstantDensity(base=1.0, jump=-0.5,
                                     indicator=lambda p: p[..., 0] > 0)

    def test_disk_indicator_geometry(self):
        rho = disk_density(1.0, 0.5, (1.0, 1.0), 0.5)
        inside = np.array([[1.0, 1.0], [1.3, 1.0]])
        outside = np.array([[1.6, 1.0], [0.0, 0.0]])
        assert np.all(rho.values_at(inside) == 1.5)
        assert np.all(rho.values_at(outside) == 1.0)

    def test_disk_wraps_periodically(self):
        rho = disk_density(1.0, 1.0, (0.1, 0.1), 0.4)
        # the disk near the origin is visible from across the seam
        wrapped = np.array([[2 * math.pi - 0.1, 0.0],
                            [0.0, 2 * math.pi - 0.1]])
        assert np.all(rho.values_at(wrapped) == 2.0)

    def test_rectangle_indicator(self):
        rho = rectangle_density(1.0, 1.0, (1.0, 2.0), (2.0, 3.0))
        assert rho.values_at(np.array([[1.5, 2.5]]))[0] == 2.0
        assert rho.values_at(np.array([[0.5, 2.5]]))[0] == 1.0

    def test_rectangle_wraps_across_seam(self):
        rho = rectangle_density(1.0, 1.0, (6.0, 1.0), (0.5, 2.0))
        assert rho.values_at(np.array([[6.2, 1.5]]))[0] == 2.0
        assert rho.values_at(np.array([[0.2, 1.5]]))[0] == 2.0
        assert rho.values_at(np.array([[1.0, 1.5]]))[0] == 1.0

    def test_mask_density_nearest_gridpoint(self, grid32):
        mask = np.zeros((32, 32), dtype=bool)
        mask[3, 5] = True
        rho = mask_density(1.0, 2.0, mask, grid32.length)
        h = grid32.h
        near = np.array([[3 * h + 0.2 * h, 5 * h - 0.3 * h]])
        far = np.array([[10 * h, 10 * h]])
        assert rho.values_at(near)[0] == 3.0
        assert rho.values_at(far)[0] == 1.0


class TestSmoothDensity:
    def test_bilinear_profile_lookup(self, grid32):
        x1, _ = grid32.meshes()
        profile = ScalarField(grid32, 1.0 + 0.25 * np.sin(x1))
        rho = SmoothDensity(profile)
        pts = grid32.points()
        assert np.allclose(rho.values_at(pts),
                           profile.values.ravel(), atol=1e-12)
        assert rho.base == pytest.approx(float(np.min(profile.values)))

    def test_rejects_nonpositive_profile(self, grid32):
        profile = ScalarField(grid32, np.full((32, 32), -1.0))
        with pytest.raises(DegenerateInput):
            SmoothDensity(profile)


class TestTransport:
    def test_identity_flow_returns_initial(self, grid64):
        rho0 = disk_density(1.0, 0.1, (math.pi, math.pi), 0.8)
        flow = new_flow_map(grid64)
        rho = density_at_time(rho0, flow)
        pts = grid64.points()
        assert np.array_equal(rho.values.ravel(), rho0.values_at(pts))

    def test_translation_transports_exactly(self, grid64):
        rho0 = disk_density(1.0, 0.1, (math.pi, math.pi), 0.8)
        shift = (0.37, -0.21)
        flow = translation_flow(grid64, shift)
        rho = density_at_time(rho0, flow)
        # transported density at x equals the initial density at x - shift
        pts = grid64.points()
        back = pts - np.array(shift)
        assert np.array_equal(rho.values.ravel(), rho0.values_at(back))
        vals = set(np.unique(rho.values))
        assert vals == {1.0, 1.1}


class TestMarkers:
    def test_minimum_count_enforced(self):
        with pytest.raises(DegenerateInput):
            InterfaceMarkers(np.zeros((4, 2)))

    def test_circle_area_matches_inscribed_polygon(self):
        r, count = 0.8, 64
        markers = circle_markers((math.pi, math.pi), r, count)
        # shoelace area of the inscribed regular polygon
        expect = 0.5 * count * r * r * math.sin(2 * math.pi / count)
        assert enclosed_area(markers) == pytest.approx(expect, rel=1e-12)

    def test_translation_advection_is_exact(self, grid32):
        ones = np.ones((32, 32))
        v = VectorField(grid32, np.stack([0.3 * ones, -0.1 * ones]))
        markers = circle_markers((math.pi, math.pi), 0.5, 32)
        moved = advect_markers(markers, v, 0.5)
        assert np.allclose(moved.points,
                           markers.points + np.array([0.15, -0.05]),
                           atol=1e-12)
        assert enclosed_area(moved) == pytest.approx(enclosed_area(markers),
                                                     rel=1e-12)

    def test_midpoint_rule_on_linear_velocity(self, grid64):
        # v = (x2 - pi, 0): the midpoint rule is exact through second order;
        # compare one step against the hand-computed update
        x1, x2 = grid64.meshes()
        v = VectorField(grid64, np.stack([x2 - math.pi,
                                          np.zeros_like(x2)]))
        markers = circle_markers((math.pi, math.pi), 0.5, 24)
        dt = 0.2
        moved = advect_markers(markers, v, dt)
        p = markers.points
        # midpoint scheme: x += dt * v(x + dt/2 * v(x)); second component of
        # v is zero so v at the midpoint equals v at the start
        expect = p.copy()
        expect[:, 0] += dt * (p[:, 1] - math.pi)
        assert np.max(np.abs(moved.points - expect)) < 2e-3  # bilinear

    def test_self_intersection_rejected(self):
        # figure-eight ordering of an otherwise valid square
        pts = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
        ring = np.concatenate([pts, pts + 3.0, pts + np.array([3.0, 0.0]),
                               pts + np.array([0.0, 3.0])])
        bowtie = InterfaceMarkers(ring)
        with pytest.raises(SelfIntersection):
            enclosed_area(bowtie)
