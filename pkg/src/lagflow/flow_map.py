"""Lagrangian flow-map accumulator and coordinate-change operators.

The trajectory map X(t, y) = y + integral of the Lagrangian velocity is kept
as a displacement field on the reference grid together with the running
integral C of the Lagrangian velocity gradient, so that the deformation
gradient is exactly Id + C.  All pullback operators act through the inverse
deformation gradient A = (Id + C)^{-1}.

Key guarantees maintained here (checked by the verification suite):

* det(Id + C) stays within tolerance of 1 for divergence-free histories,
* |Id + C| <= exp(I) pointwise, where I is the accumulated sup-norm of the
  Lagrangian velocity gradient,
* |A - Id| <= 2 I pointwise while I <= 1/2,
* the truncated Neumann series for A matches direct inversion to its
  geometric tail bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DegenerateInput, NoConvergence, SeriesDiverged, SingularJacobian
from .fields import (
    Grid,
    MatrixField,
    ScalarField,
    VectorField,
    bilinear_sample,
    divergence,
    gradient,
    jacobian,
    matmul_fields,
    matrix_pointwise_norm,
    apply_matrix,
    dealias,
    save_field,
    load_field,
)

NEUMANN_MAX_TERMS = 30


def _zero_vector(grid: Grid) -> VectorField:
    return VectorField(grid, np.zeros((2, grid.n, grid.n)))


def _zero_matrix(grid: Grid) -> MatrixField:
    return MatrixField(grid, np.zeros((2, 2, grid.n, grid.n)))


def identity_matrix_field(grid: Grid) -> MatrixField:
    vals = np.zeros((2, 2, grid.n, grid.n))
    vals[0, 0] = 1.0
    vals[1, 1] = 1.0
    return MatrixField(grid, vals)


@dataclass(eq=False)
class FlowMap:
    """State of the trajectory map at one instant.

    Attributes
    ----------
    grid : reference grid (Lagrangian coordinates)
    time : current time
    displacement : X(t, y) - y as a vector field over y
    jacobian_integral : running integral C of the Lagrangian velocity gradient
    du_linf_integral : accumulated integral of sup |D u(t, .)| (pointwise
        spectral norm), the smallness quantity all pointwise bounds key off
    last_velocity : Lagrangian velocity sample at `time` (trapezoid partner
        for the next advance)
    last_gradient : its gradient sample
    """

    grid: Grid
    time: float
    displacement: VectorField
    jacobian_integral: MatrixField
    du_linf_integral: float
    last_velocity: VectorField
    last_gradient: MatrixField
    meta: dict = dc_field(default_factory=dict)

    @property
    def last_gradient_max(self) -> float:
        return float(np.max(matrix_pointwise_norm(self.last_gradient.values)))


def new_flow_map(grid: Grid, initial_velocity: VectorField | None = None,
                 initial_gradient: MatrixField | None = None) -> FlowMap:
    """Identity map at time zero, seeded with the initial velocity sample.

    At t = 0 Lagrangian and Eulerian velocities coincide, so the seed is the
    initial Eulerian velocity (zero by default).  The gradient sample is
    computed spectrally when not supplied.
    """
    u0 = initial_velocity if initial_velocity is not None else _zero_vector(grid)
    if u0.grid != grid:
        raise DegenerateInput("initial velocity lives on a different grid")
    g0 = initial_gradient if initial_gradient is not None else jacobian(u0)
    return FlowMap(
        grid=grid,
        time=0.0,
        displacement=_zero_vector(grid),
        jacobian_integral=_zero_matrix(grid),
        du_linf_integral=0.0,
        last_velocity=u0,
        last_gradient=g0,
    )


def advance_flow_map(flow: FlowMap, velocity: VectorField, dt: float,
                     velocity_gradient: MatrixField | None = None) -> FlowMap:
    """Advance the map by one step of trapezoidal quadrature.

    `velocity` is the Lagrangian velocity sample at flow.time + dt, i.e. the
    Eulerian velocity already composed with the updated trajectory.  The
    previous sample stored on `flow` supplies the other quadrature node.  An
    exact gradient sample may be passed in (the solver computes it by chain
    rule); otherwise it is taken spectrally, which is only appropriate when
    the sample is smooth on the reference grid.
    """
    if dt <= 0:
        raise DegenerateInput("time step must be positive")
    if velocity.grid != flow.grid:
        raise DegenerateInput("velocity sample lives on a different grid")
    grad = velocity_gradient if velocity_gradient is not None else jacobian(velocity)
    half = 0.5 * dt
    disp = VectorField(flow.grid,
                       flow.displacement.values
                       + half * (flow.last_velocity.values + velocity.values))
    cmat = MatrixField(flow.grid,
                       flow.jacobian_integral.values
                       + half * (flow.last_gradient.values + grad.values))
    du = flow.du_linf_integral + half * (
        float(np.max(matrix_pointwise_norm(flow.last_gradient.values)))
        + float(np.max(matrix_pointwise_norm(grad.values)))
    )
    return FlowMap(
        grid=flow.grid,
        time=flow.time + dt,
        displacement=disp,
        jacobian_integral=cmat,
        du_linf_integral=du,
        last_velocity=velocity,
        last_gradient=grad,
    )


# -- algebra of the deformation gradient ---------------------------------


def positions(flow: FlowMap) -> np.ndarray:
    """Current particle positions X(t, y) for every reference gridpoint.

    Returns an (n*n, 2) array in row-major gridpoint order; values are left
    unwrapped (they may leave the periodic cell).
    """
    pts = flow.grid.points()
    d = flow.displacement.values
    return pts + np.stack([d[0].ravel(), d[1].ravel()], axis=-1)


def deformation_gradient(flow: FlowMap) -> MatrixField:
    """D_y X = Id + C."""
    vals = flow.jacobian_integral.values.copy()
    vals[0, 0] += 1.0
    vals[1, 1] += 1.0
    return MatrixField(flow.grid, vals)


def jacobian_determinant(flow: FlowMap) -> ScalarField:
    m = deformation_gradient(flow).values
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return ScalarField(flow.grid, det)


def gradient_bound_margin(flow: FlowMap) -> float:
    """exp(I) - sup |Id + C|, which stays nonnegative along exact histories."""
    biggest = float(np.max(matrix_pointwise_norm(deformation_gradient(flow))))
    return float(np.exp(flow.du_linf_integral)) - biggest


def displacement_hessian_max(flow: FlowMap) -> float:
    """sup over components of |second derivatives of the displacement|.

    Logged as a diagnostic for the second-order deformation bound; not gated.
    """
    g = flow.grid
    worst = 0.0
    for i in range(2):
        comp = ScalarField(g, flow.displacement.values[i])
        hess = jacobian(gradient(comp))
        worst = max(worst, float(np.max(np.abs(hess.values))))
    return worst


def inverse_jacobian(flow: FlowMap, method: str = "direct_adjugate",
                     k_max: int = NEUMANN_MAX_TERMS,
                     det_floor: float = 1e-3) -> MatrixField:
    """A = (Id + C)^{-1}, by adjugate (default) or truncated Neumann series.

    The series converges only while the accumulated gradient integral is
    below one; its truncation error is bounded by the geometric tail
    r^(k_max+1) / (1 - r) with r the pointwise norm bound on C.
    """
    if method == "direct_adjugate":
        m = deformation_gradient(flow).values
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if float(np.min(np.abs(det))) < det_floor:
            raise SingularJacobian(
                f"deformation determinant reached {float(np.min(np.abs(det))):.3e}"
            )
        vals = np.empty_like(m)
        vals[0, 0] = m[1, 1] / det
        vals[0, 1] = -m[0, 1] / det
        vals[1, 0] = -m[1, 0] / det
        vals[1, 1] = m[0, 0] / det
        return MatrixField(flow.grid, vals)
    if method == "neumann_series":
        if flow.du_linf_integral >= 1.0:
            raise SeriesDiverged(
                "accumulated gradient integral "
                f"{flow.du_linf_integral:.3f} >= 1; inverse series diverges"
            )
        c = flow.jacobian_integral.values
        term = identity_matrix_field(flow.grid).values.copy()
        acc = term.copy()
        for _ in range(k_max):
            term = -np.einsum("ikab,kjab->ijab", term, c)
            acc += term
        return MatrixField(flow.grid, acc)
    raise DegenerateInput(f"unknown inversion method {method!r}")


def neumann_tail_bound(flow: FlowMap, k_max: int = NEUMANN_MAX_TERMS) -> float:
    """Geometric bound on the truncation error of the inverse series."""
    r = float(np.max(matrix_pointwise_norm(flow.jacobian_integral.values)))
    if r >= 1.0:
        return np.inf
    return r ** (k_max + 1) / (1.0 - r)


def inverse_deviation_margin(flow: FlowMap) -> float:
    """2 I - sup |A - Id|; nonnegative while the smallness integral I <= 1/2."""
    a = inverse_jacobian(flow).values.copy()
    a[0, 0] -= 1.0
    a[1, 1] -= 1.0
    return 2.0 * flow.du_linf_integral - float(np.max(matrix_pointwise_norm(a)))


def inverse_jacobian_rate(flow: FlowMap, velocity_gradient: MatrixField | None = None,
                          k_max: int = NEUMANN_MAX_TERMS) -> MatrixField:
    """Time derivative of the inverse deformation gradient.

    Uses the term-by-term derivative of the inverse series,
    dA/dt = (sum over k >= 0 of (k+1) (-1)^(k+1) C^k) . D_y u,
    which is exact at time zero (where it reduces to -D_y u) and whenever the
    gradient history commutes with itself; otherwise it is the leading-order
    rate in the smallness integral.
    """
    if flow.du_linf_integral >= 1.0:
        raise SeriesDiverged(
            "accumulated gradient integral "
            f"{flow.du_linf_integral:.3f} >= 1; rate series diverges"
        )
    grad = velocity_gradient if velocity_gradient is not None else flow.last_gradient
    c = flow.jacobian_integral.values
    power = identity_matrix_field(flow.grid).values.copy()   # (-C)^k
    series = -power.copy()                                   # k = 0 term
    for k in range(1, k_max + 1):
        power = -np.einsum("ikab,kjab->ijab", power, c)
        series -= (k + 1) * power
    rate = np.einsum("ikab,kjab->ijab", series, grad.values)
    return MatrixField(flow.grid, rate)


# -- frame changes --------------------------------------------------------


def inverse_map(flow: FlowMap, points: np.ndarray, tol: float = 1e-9,
                max_iter: int = 100) -> np.ndarray:
    """Back-to-label map: solve X(t, y) = x for y at each query point.

    Fixed-point iteration y <- x - d(y) with bilinear sampling of the
    displacement; contracts while the displacement gradient is below one.
    """
    x = np.asarray(points, dtype=float)
    y = x.copy()
    d = flow.displacement.values
    if float(np.max(np.abs(d))) == 0.0:
        return y
    for _ in range(max_iter):
        samp = bilinear_sample(flow.grid, d, y.reshape(-1, 2))
        y_new = x - np.moveaxis(samp, 0, -1).reshape(x.shape)
        delta = float(np.max(np.abs(y_new - y)))
        y = y_new
        if delta <= 0.25 * tol:
            break
    samp = bilinear_sample(flow.grid, d, y.reshape(-1, 2))
    residual = float(np.max(np.abs(y + np.moveaxis(samp, 0, -1).reshape(x.shape) - x)))
    if residual > tol:
        raise NoConvergence("inverse trajectory lookup stalled", residual=residual)
    return y


def eulerian_to_lagrangian(v: VectorField, flow: FlowMap) -> VectorField:
    """u(t, y) = v(t, X(t, y)) by periodic bilinear sampling."""
    pts = positions(flow)
    vals = bilinear_sample(flow.grid, v.values, pts)
    n = flow.grid.n
    return VectorField(flow.grid, vals.reshape(2, n, n))


def lagrangian_to_eulerian(u: VectorField, flow: FlowMap,
                           tol: float = 1e-9) -> VectorField:
    """v(t, x) = u(t, Y(t, x)) with Y the back-to-label map."""
    y = inverse_map(flow, flow.grid.points(), tol=tol)
    vals = bilinear_sample(flow.grid, u.values, y)
    n = flow.grid.n
    return VectorField(flow.grid, vals.reshape(2, n, n))


# -- pullback differential operators --------------------------------------


def pullback_gradient(f: ScalarField, inv_jac: MatrixField) -> VectorField:
    """Gradient in flowing coordinates: (transpose A) grad f."""
    g = gradient(f)
    vals = np.einsum("jiab,jab->iab", inv_jac.values, g.values)
    return VectorField(f.grid, dealias(VectorField(f.grid, vals)).values)


def pullback_divergence(h: VectorField, inv_jac: MatrixField) -> ScalarField:
    """Divergence in flowing coordinates: div(A h)."""
    return divergence(apply_matrix(inv_jac, h))


def jacobian_contraction(h: VectorField, inv_jac: MatrixField) -> ScalarField:
    """Full contraction of A with the gradient of h: sum_ij A_ij d_i h_j.

    Equals the pullback divergence when A carries zero divergence row-wise;
    used as the product-rule partner term in weak-form identities.
    """
    dh = jacobian(h)
    vals = np.einsum("ijab,jiab->ab", inv_jac.values, dh.values)
    return dealias(ScalarField(h.grid, vals))


def pullback_laplacian(h: VectorField, inv_jac: MatrixField) -> VectorField:
    """Componentwise div(A (transpose A) grad h_i) in flowing coordinates."""
    out = np.empty_like(h.values)
    for i in range(2):
        comp = ScalarField(h.grid, h.values[i])
        twisted = pullback_gradient(comp, inv_jac)
        out[i] = pullback_divergence(twisted, inv_jac).values
    return VectorField(h.grid, out)


def save_flow_map(flow: FlowMap, directory, prefix: str = "flowmap") -> list:
    """Persist a flow map as four field snapshots plus a JSON sidecar.

    The sidecar records the scalars (time, accumulated gradient integral);
    the snapshots carry displacement, integrated Jacobian, and the latest
    velocity sample pair needed to resume trapezoidal accumulation.
    """
    import json
    import os

    paths = {
        "displacement": os.path.join(directory, f"{prefix}_displacement.txt"),
        "jacobian_integral": os.path.join(
            directory, f"{prefix}_jacobian_integral.txt"),
        "last_velocity": os.path.join(
            directory, f"{prefix}_last_velocity.txt"),
        "last_gradient": os.path.join(
            directory, f"{prefix}_last_gradient.txt"),
    }
    save_field(paths["displacement"], flow.displacement)
    save_field(paths["jacobian_integral"], flow.jacobian_integral)
    save_field(paths["last_velocity"], flow.last_velocity)
    save_field(paths["last_gradient"], flow.last_gradient)
    sidecar = os.path.join(directory, f"{prefix}.json")
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump({"time": flow.time,
                   "du_linf_integral": flow.du_linf_integral,
                   "files": {k: os.path.basename(v)
                             for k, v in paths.items()}}, fh, indent=2)
    return [sidecar, *paths.values()]


def load_flow_map(directory, prefix: str = "flowmap") -> FlowMap:
    """Rebuild a flow map saved by save_flow_map."""
    import json
    import os

    sidecar = os.path.join(directory, f"{prefix}.json")
    with open(sidecar, encoding="utf-8") as fh:
        meta = json.load(fh)
    fields = {key: load_field(os.path.join(directory, name))
              for key, name in meta["files"].items()}
    return FlowMap(grid=fields["displacement"].grid,
                   time=float(meta["time"]),
                   displacement=fields["displacement"],
                   jacobian_integral=fields["jacobian_integral"],
                   du_linf_integral=float(meta["du_linf_integral"]),
                   last_velocity=fields["last_velocity"],
                   last_gradient=fields["last_gradient"])
