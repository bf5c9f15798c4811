"""Transported density descriptors and interface tracking.

Density is advected by a measure-preserving flow, so its value set and its
extrema are conserved exactly.  Rather than discretizing the transport
equation (which would smear a sharp interface), the density at time t is
evaluated by pulling gridpoints back along the flow and reading the initial
profile there — piecewise-constant profiles therefore stay exactly two-valued.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from shapely.geometry import Polygon

from .errors import DegenerateInput, SelfIntersection
from .fields import Grid, ScalarField, bilinear_sample
from .flow_map import FlowMap, inverse_map

MIN_MARKERS = 16


@dataclass(frozen=True)
class PiecewiseConstantDensity:
    """Two-valued profile: `base` outside the marked region, base + jump inside.

    base is the infimum (must be positive); jump is the contrast (>= 0).
    The indicator takes an (..., 2) array of points and returns booleans.
    """

    base: float
    jump: float
    indicator: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if self.base <= 0:
            raise DegenerateInput("density infimum must be positive")
        if self.jump < 0:
            raise DegenerateInput("density contrast must be nonnegative")

    def values_at(self, points: np.ndarray) -> np.ndarray:
        inside = np.asarray(self.indicator(np.asarray(points, dtype=float)))
        return self.base + self.jump * inside.astype(float)


@dataclass(frozen=True)
class SmoothDensity:
    """Grid-sampled profile, evaluated off-grid by periodic bilinear sampling."""

    profile: ScalarField

    def __post_init__(self):
        low = float(np.min(self.profile.values))
        if low <= 0:
            raise DegenerateInput("density profile must be strictly positive")

    @property
    def base(self) -> float:
        return float(np.min(self.profile.values))

    @property
    def jump(self) -> float:
        return float(np.max(self.profile.values)) - self.base

    def values_at(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, 2)
        vals = bilinear_sample(self.profile.grid, self.profile.values, flat)
        return vals.reshape(pts.shape[:-1])


Density = PiecewiseConstantDensity | SmoothDensity


def density_bounds(rho: Density) -> tuple[float, float]:
    return rho.base, rho.base + rho.jump


def jump_ratio(rho: Density) -> float:
    """Relative contrast (sup - inf) / inf, the contraction budget of the
    variable-coefficient splitting."""
    return rho.jump / rho.base


def disk_density(base: float, jump: float, center: tuple[float, float],
                 radius: float, length: float = 2.0 * np.pi) -> PiecewiseConstantDensity:
    """Heavy (or light) disk on the periodic square, via minimal-image distance."""
    if radius <= 0 or radius >= 0.5 * length:
        raise DegenerateInput("disk radius must sit inside the periodic cell")
    cx, cy = float(center[0]), float(center[1])

    def indicator(points: np.ndarray) -> np.ndarray:
        d1 = points[..., 0] - cx
        d2 = points[..., 1] - cy
        d1 -= length * np.round(d1 / length)
        d2 -= length * np.round(d2 / length)
        return d1 * d1 + d2 * d2 <= radius * radius

    return PiecewiseConstantDensity(base=base, jump=jump, indicator=indicator)


def rectangle_density(base: float, jump: float, lo: tuple[float, float],
                      hi: tuple[float, float],
                      length: float = 2.0 * np.pi) -> PiecewiseConstantDensity:
    """Axis-aligned patch [lo1, hi1] x [lo2, hi2], periodically wrapped."""

    def axis_inside(x, a, b):
        span = (b - a) % length
        offset = (x - a) % length
        return offset <= span

    def indicator(points: np.ndarray) -> np.ndarray:
        return axis_inside(points[..., 0], lo[0], hi[0]) & axis_inside(
            points[..., 1], lo[1], hi[1])

    return PiecewiseConstantDensity(base=base, jump=jump, indicator=indicator)


def mask_density(base: float, jump: float, mask: np.ndarray,
                 grid: Grid) -> PiecewiseConstantDensity:
    """Profile from an arbitrary boolean gridpoint mask (nearest-point lookup)."""
    m = np.asarray(mask, dtype=bool)
    if m.shape != (grid.n, grid.n):
        raise DegenerateInput("mask shape does not match the grid")

    def indicator(points: np.ndarray) -> np.ndarray:
        idx1 = np.round(points[..., 0] / grid.h).astype(int) % grid.n
        idx2 = np.round(points[..., 1] / grid.h).astype(int) % grid.n
        return m[idx1, idx2]

    return PiecewiseConstantDensity(base=base, jump=jump, indicator=indicator)


def density_at_time(rho0: Density, flow: FlowMap,
                    inverse_tol: float = 1e-9) -> ScalarField:
    """Density on the grid at flow.time: rho(t, x) = rho0(Y(t, x)).

    Pulling back through the inverse trajectory keeps the value set of a
    piecewise-constant profile exact — no new values are ever created.
    """
    grid = flow.grid
    pts = grid.points()
    labels = inverse_map(flow, pts, tol=inverse_tol)
    vals = rho0.values_at(labels).reshape(grid.n, grid.n)
    return ScalarField(grid, vals, meta={"time": flow.time})


# -- interface markers ----------------------------------------------------


@dataclass(eq=False)
class InterfaceMarkers:
    """Ordered marker loop tracking a material interface.

    Positions are kept unwrapped (they may drift out of the fundamental
    periodic cell) so the enclosed area is well defined without cut-and-paste
    bookkeeping at the cell boundary.
    """

    points: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DegenerateInput("markers must be an (k, 2) array")
        if pts.shape[0] < MIN_MARKERS:
            raise DegenerateInput(
                f"need at least {MIN_MARKERS} markers, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            raise DegenerateInput("marker positions must be finite")
        self.points = pts


def circle_markers(center: tuple[float, float], radius: float,
                   count: int = 64) -> InterfaceMarkers:
    theta = 2.0 * np.pi * np.arange(count) / count
    pts = np.stack([center[0] + radius * np.cos(theta),
                    center[1] + radius * np.sin(theta)], axis=1)
    return InterfaceMarkers(pts)


def advect_markers(markers: InterfaceMarkers, velocity, dt: float) -> InterfaceMarkers:
    """One midpoint (RK2) step of every marker through `velocity`.

    `velocity` is a VectorField treated as frozen over the step; pass the
    time-centered field for second-order accuracy in time.
    """
    if dt <= 0:
        raise DegenerateInput("time step must be positive")
    grid = velocity.grid
    p = markers.points

    def sample(q):
        return np.moveaxis(bilinear_sample(grid, velocity.values, q), 0, -1)

    k1 = sample(p)
    k2 = sample(p + 0.5 * dt * k1)
    return InterfaceMarkers(p + dt * k2, meta=dict(markers.meta))


def enclosed_area(markers: InterfaceMarkers) -> float:
    """Shoelace area of the marker loop.

    Raises SelfIntersection when the loop crosses itself, since the enclosed
    area of a figure-eight is not the area of a transported region.
    """
    pts = markers.points
    poly = Polygon(pts)
    if not poly.is_valid:
        raise SelfIntersection("marker loop crosses itself")
    x = pts[:, 0]
    y = pts[:, 1]
    area = 0.5 * np.abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
    return float(area)
