"""Viscous solvers: stationary and evolutionary Stokes, and the coupled
variable-density step.

All linear solves happen mode-by-mode in Fourier space where the constant-
coefficient operator m d/dt - nu Laplace diagonalizes; time integration is
Crank-Nicolson.  The variable-coefficient momentum equation is reduced to
that constant-coefficient core by keeping the inertia at the density floor m
and feeding the deviation (m - rho) dv/dt back through Picard iteration —
the iteration contracts at rate close to the relative density contrast.

Advection is handled semi-implicitly: the smooth quadratic factor is
extrapolated to the half step from the two previous time levels, while the
(possibly discontinuous) density multiplying it is evaluated sharply at the
half step by pulling gridpoints back along a half-advanced flow map.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .density import Density, density_at_time
from .errors import (
    CflViolation,
    CompatibilityViolated,
    DegenerateInput,
    PicardNoConvergence,
    SmallnessWarning,
)
from .fields import (
    Grid,
    MatrixField,
    ScalarField,
    VectorField,
    advection_term,
    dealias,
    divergence,
    divergence_residual,
    gradient,
    jacobian,
    l2_norm,
    leray_project,
    lp_norm,
    pointwise_magnitude,
)
from .divergence import solve_divergence
from .flow_map import FlowMap, advance_flow_map, new_flow_map, positions
from .sampling import FieldSampler

DEFAULT_DIV_TOL = 1e-10


# -- spectral helpers ------------------------------------------------------


def _fft_vec(values: np.ndarray) -> np.ndarray:
    return np.stack([np.fft.fft2(values[0]), np.fft.fft2(values[1])])


def _ifft_vec(spec: np.ndarray) -> np.ndarray:
    return np.stack([np.fft.ifft2(spec[0]).real, np.fft.ifft2(spec[1]).real])


def _leray_hat(grid: Grid, spec: np.ndarray) -> np.ndarray:
    k_dot = grid.k1 * spec[0] + grid.k2 * spec[1]
    return np.stack([
        spec[0] - grid.k1 * k_dot * grid.inv_k_sq,
        spec[1] - grid.k2 * k_dot * grid.inv_k_sq,
    ])


def _cn_advance(grid: Grid, v_hat: np.ndarray, rhs_hat: np.ndarray,
                m: float, nu: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """One Crank-Nicolson step of m v_t - nu Lap v + grad Q = rhs.

    Returns the new velocity spectrum and the midpoint pressure-gradient
    spectrum (the gradient part of the right-hand side, mean-free).
    """
    proj = _leray_hat(grid, rhs_hat)
    denom = m / dt + 0.5 * nu * grid.k_sq
    new_hat = ((m / dt - 0.5 * nu * grid.k_sq) * v_hat + proj) / denom
    grad_q_hat = rhs_hat - proj
    grad_q_hat[:, 0, 0] = 0.0
    return new_hat, grad_q_hat


# -- stationary problem ----------------------------------------------------


def solve_stationary_stokes(force: VectorField, nu: float
                            ) -> tuple[VectorField, VectorField]:
    """Mean-free velocity u and pressure gradient with -nu Lap u + grad Q = f.

    The spatial mean of f (which no stationary field can balance) is
    subtracted and recorded on the result's meta.
    """
    if nu <= 0:
        raise DegenerateInput("viscosity must be positive")
    g = force.grid
    f_hat = _fft_vec(force.values)
    mean = f_hat[:, 0, 0].real / g.n**2
    f_hat[:, 0, 0] = 0.0
    proj = _leray_hat(g, f_hat)
    u_hat = proj * g.inv_k_sq / nu
    u = VectorField(g, _ifft_vec(u_hat), divergence_free=True,
                    meta={"subtracted_mean_force": mean.tolist()})
    grad_q = VectorField(g, _ifft_vec(f_hat - proj))
    return u, grad_q


# -- evolutionary problem with prescribed divergence ----------------------


@dataclass(eq=False)
class FieldTrajectory:
    """Time series of full velocity fields plus midpoint pressure gradients.

    velocities has one entry per node time; pressure_gradients one entry per
    step (sampled at half steps).
    """

    grid: Grid
    times: list[float]
    velocities: list[VectorField]
    pressure_gradients: list[VectorField]
    dt: float
    mass_floor: float
    nu: float
    meta: dict = dc_field(default_factory=dict)


def _step_count(t_end: float, dt: float) -> int:
    if dt <= 0 or t_end <= 0:
        raise DegenerateInput("horizon and step must be positive")
    steps = int(round(t_end / dt))
    if steps < 1 or abs(steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise DegenerateInput("horizon must be an integer number of steps")
    return steps


def solve_evolutionary_stokes(initial_velocity: VectorField, nu: float,
                              t_end: float, dt: float, m: float = 1.0,
                              forcing: Callable[[float], VectorField] | None = None,
                              flux: Callable[[float], VectorField] | None = None,
                              div_tol: float = DEFAULT_DIV_TOL) -> FieldTrajectory:
    """Crank-Nicolson solve of m u_t - nu Lap u + grad Q = f, div u = div R.

    `flux` prescribes the divergence through its lift: at each node the
    gradient part w of R(t) is split off and the remaining divergence-free
    part is evolved spectrally.  Initial data must carry the same divergence
    as R(0) (to div_tol, relative), otherwise no continuous-in-time solution
    exists and CompatibilityViolated is raised.
    """
    if m <= 0 or nu <= 0:
        raise DegenerateInput("mass floor and viscosity must be positive")
    g = initial_velocity.grid
    steps = _step_count(t_end, dt)
    times = [i * dt for i in range(steps + 1)]

    if flux is not None:
        lifts = [solve_divergence(flux(t)) for t in times]
    else:
        lifts = [VectorField(g, np.zeros((2, g.n, g.n))) for _ in times]

    scale = max(l2_norm(initial_velocity), 1.0)
    compat = l2_norm(divergence(initial_velocity) - divergence(lifts[0]))
    if compat > div_tol * scale:
        raise CompatibilityViolated(
            f"initial divergence mismatch {compat:.3e} exceeds "
            f"{div_tol:.1e} x data scale")

    w_hats = [_fft_vec(w.values) for w in lifts]
    v_hat = _fft_vec(initial_velocity.values) - w_hats[0]

    velocities = [initial_velocity]
    pressure_gradients: list[VectorField] = []
    for i in range(steps):
        t0, t1 = times[i], times[i + 1]
        rhs_hat = np.zeros_like(v_hat)
        if forcing is not None:
            rhs_hat += 0.5 * (_fft_vec(forcing(t0).values)
                              + _fft_vec(forcing(t1).values))
        dw_hat = w_hats[i + 1] - w_hats[i]
        if flux is not None:
            rhs_hat -= (m / dt) * dw_hat
            rhs_hat -= 0.5 * nu * g.k_sq * (w_hats[i] + w_hats[i + 1])
        v_hat, gq_hat = _cn_advance(g, v_hat, rhs_hat, m, nu, dt)
        u_vals = _ifft_vec(v_hat + w_hats[i + 1])
        velocities.append(VectorField(g, u_vals))
        pressure_gradients.append(VectorField(g, _ifft_vec(gq_hat)))
    return FieldTrajectory(grid=g, times=times, velocities=velocities,
                           pressure_gradients=pressure_gradients, dt=dt,
                           mass_floor=m, nu=nu)


# -- regularity functional -------------------------------------------------


def _second_derivative_l4(v: VectorField) -> float:
    """L4 norm of the full second-derivative stack of a vector field."""
    g = v.grid
    mags = []
    for i in range(2):
        hess = jacobian(gradient(ScalarField(g, v.values[i])))
        mags.append(np.sum(hess.values**2, axis=(0, 1)))
    mag = np.sqrt(mags[0] + mags[1])
    return float((np.sum(mag**4) * g.cell_area) ** 0.25)


def regularity_norm(traj: FieldTrajectory) -> dict:
    """Strength-of-solution functional for a computed trajectory.

    Combines sup-in-time L2 of the velocity's time derivative, the space-time
    L2 of its gradient, and fourth-power space-time norms of (u_t,
    nu x second derivatives, pressure gradient).  Time derivatives are
    central differences at interior nodes, so at least three node samples
    are required.
    """
    n_nodes = len(traj.velocities)
    if n_nodes < 3:
        raise DegenerateInput("regularity norm needs at least three samples")
    dt = traj.dt
    nu = traj.nu
    ut_sup_l2 = 0.0
    grad_ut_sq = 0.0
    ut_l4_quartic = 0.0
    hess_l4_quartic = 0.0
    for i in range(1, n_nodes - 1):
        ut = VectorField(traj.grid, (traj.velocities[i + 1].values
                                     - traj.velocities[i - 1].values) / (2 * dt))
        ut_sup_l2 = max(ut_sup_l2, l2_norm(ut))
        grad_ut_sq += dt * l2_norm(jacobian(ut)) ** 2
        ut_l4_quartic += dt * lp_norm(ut, 4) ** 4
        hess_l4_quartic += dt * (nu * _second_derivative_l4(traj.velocities[i])) ** 4
    gq_l4_quartic = sum(dt * lp_norm(gq, 4) ** 4
                        for gq in traj.pressure_gradients)
    l4_block = (ut_l4_quartic ** 0.25 + hess_l4_quartic ** 0.25
                + gq_l4_quartic ** 0.25)
    total = ut_sup_l2 + grad_ut_sq ** 0.5 + l4_block
    return {
        "ut_sup_l2": ut_sup_l2,
        "grad_ut_l2l2": grad_ut_sq ** 0.5,
        "l4_block": l4_block,
        "total": total,
    }


# -- coupled variable-density stepping ------------------------------------


@dataclass
class SolverConfig:
    """Numerical parameters of the coupled stepper."""

    nu: float
    dt: float
    cfl_factor: float = 0.5
    picard_tol: float = 1e-9
    picard_max_iter: int = 40
    jump_cap: float = 0.5
    smallness_cap: float = 0.5
    div_tol: float = DEFAULT_DIV_TOL
    inverse_map_tol: float = 1e-9
    forcing: Callable[[float], VectorField] | None = None

    def __post_init__(self):
        if self.nu <= 0 or self.dt <= 0:
            raise DegenerateInput("viscosity and time step must be positive")
        if self.picard_max_iter < 1:
            raise DegenerateInput("need at least one Picard sweep")


@dataclass(eq=False)
class SimState:
    """Complete simulation state between steps.

    Invariant: `velocity` is divergence-free to the configured tolerance and
    `flow` carries the Lagrangian history consistent with it.
    """

    time: float
    velocity: VectorField
    pressure_gradient: VectorField | None
    density: Density
    flow: FlowMap
    config: SolverConfig
    prev_advection: VectorField | None = None
    smallness_flagged: bool = False
    picard_iters: int = 0
    picard_ratio: float = 0.0
    div_residual: float = 0.0
    meta: dict = dc_field(default_factory=dict)


def new_sim_state(velocity: VectorField, density: Density,
                  config: SolverConfig) -> SimState:
    """Initial state at time zero; the velocity is projected to its
    divergence-free part (pre-projection residual recorded in meta)."""
    raw_residual = divergence_residual(velocity)
    v0 = leray_project(velocity)
    flow = new_flow_map(v0.grid, v0)
    return SimState(
        time=0.0,
        velocity=v0,
        pressure_gradient=None,
        density=density,
        flow=flow,
        config=config,
        div_residual=divergence_residual(v0),
        meta={"initial_div_residual": raw_residual},
    )


def _scaled_advection(coeff_vals: np.ndarray | float,
                      smooth: VectorField) -> np.ndarray:
    """Dealiased product (coefficient x smooth factor), spectra-consistent."""
    if np.isscalar(coeff_vals):
        return coeff_vals * smooth.values
    prod = VectorField(smooth.grid, coeff_vals[None, :, :] * smooth.values)
    return dealias(prod).values


def _picard_solve(state: SimState, rho_half: ScalarField | None,
                  s_mid: VectorField, t_mid: float
                  ) -> tuple[VectorField, np.ndarray, int, float]:
    """Solve one implicit step, iterating only on the inertia deviation.

    Returns (new velocity, pressure-gradient spectrum, sweeps, mean gap
    contraction ratio).
    """
    cfg = state.config
    g = state.velocity.grid
    m = state.density.base
    dt = cfg.dt
    v_hat = _fft_vec(state.velocity.values)

    if rho_half is None:
        adv_vals = _scaled_advection(m, s_mid)
    else:
        adv_vals = _scaled_advection(rho_half.values, s_mid)
    rhs_base = -_fft_vec(adv_vals)
    if cfg.forcing is not None:
        rhs_base = rhs_base + _fft_vec(cfg.forcing(t_mid).values)

    if rho_half is None:
        w_hat, gq_hat = _cn_advance(g, v_hat, rhs_base, m, cfg.nu, dt)
        return VectorField(g, _ifft_vec(w_hat)), gq_hat, 1, 0.0

    coeff = m - rho_half.values
    scale = max(l2_norm(state.velocity), 1e-300)
    w = state.velocity
    gaps: list[float] = []
    gq_hat = None
    for _ in range(cfg.picard_max_iter):
        rate_vals = (w.values - state.velocity.values) / dt
        pert = dealias(VectorField(g, coeff[None, :, :] * rate_vals))
        rhs_hat = rhs_base + _fft_vec(pert.values)
        w_hat, gq_hat = _cn_advance(g, v_hat, rhs_hat, m, cfg.nu, dt)
        w_new = VectorField(g, _ifft_vec(w_hat))
        gap = l2_norm(w_new - w) / scale
        gaps.append(gap)
        w = w_new
        if gap <= cfg.picard_tol:
            ratios = [gaps[i + 1] / gaps[i]
                      for i in range(1, len(gaps) - 1) if gaps[i] > 0]
            ratio = float(np.mean(ratios)) if ratios else 0.0
            return w, gq_hat, len(gaps), ratio
    raise PicardNoConvergence(
        f"inertia-deviation iteration stalled after {cfg.picard_max_iter} "
        f"sweeps (density contrast {state.density.jump / m:.2f})",
        residual=gaps[-1])


def _advance_flow(state: SimState, v_new: VectorField) -> FlowMap:
    """Advance the trajectory map using near-roundoff composition.

    Positions advance with a midpoint predictor-corrector in the Lagrangian
    velocity; the new gradient sample comes from the chain rule against the
    trapezoid-updated deformation gradient, never from differentiating an
    interpolant.
    """
    flow = state.flow
    g = flow.grid
    dt = state.config.dt
    n = g.n
    pos = positions(flow)
    u_prev = np.stack([flow.last_velocity.values[0].ravel(),
                       flow.last_velocity.values[1].ravel()], axis=-1)
    sampler = FieldSampler(g, v_new.values, with_gradient=True)

    x_pred = pos + dt * u_prev
    vals_pred = sampler.values_at(x_pred)
    x_corr = pos + 0.5 * dt * (u_prev + vals_pred.T)
    vals, grads = sampler.values_and_gradients_at(x_corr)

    flat = (2, 2, n * n)
    g_prev = flow.last_gradient.values.reshape(flat)
    dx_now = flow.jacobian_integral.values.reshape(flat).copy()
    dx_now[0, 0] += 1.0
    dx_now[1, 1] += 1.0
    dxv = grads  # (2, 2, n*n): dxv[i, j] = d_j v_i at x_corr
    g_pred = np.einsum("ikp,kjp->ijp", dxv, dx_now + dt * g_prev)
    dx_corr = dx_now + 0.5 * dt * (g_prev + g_pred)
    g_new = np.einsum("ikp,kjp->ijp", dxv, dx_corr)

    u_new = VectorField(g, vals.reshape(2, n, n))
    grad_new = MatrixField(g, g_new.reshape(2, 2, n, n))
    return advance_flow_map(flow, u_new, dt, velocity_gradient=grad_new)


def step_variable_density(state: SimState) -> SimState:
    """Advance the coupled system by one step.

    Scheme: Crank-Nicolson on the constant-coefficient viscous core at the
    density floor; advection density sampled sharply at the half step from a
    half-advanced copy of the flow map; the smooth advection factor
    extrapolated to the half step from the two previous levels (bootstrapped
    by a predictor-corrector pass on the first step); inertia deviation
    (m - rho) folded in by Picard sweeps.  The flow map then advances through
    composition with the new velocity.
    """
    cfg = state.config
    g = state.velocity.grid
    dt = cfg.dt
    vmax = float(np.max(pointwise_magnitude(state.velocity)))
    if vmax > 0 and dt > cfg.cfl_factor * g.h / vmax:
        raise CflViolation(
            f"dt = {dt:.3e} exceeds the advective bound "
            f"{cfg.cfl_factor * g.h / vmax:.3e}")

    meta = dict(state.meta)
    contrast = state.density.jump / state.density.base
    if contrast > cfg.jump_cap and not meta.get("contrast_warned"):
        warnings.warn(
            f"density contrast {contrast:.2f} exceeds the splitting budget "
            f"{cfg.jump_cap}; iteration may not contract", SmallnessWarning)
        meta["contrast_warned"] = True

    if state.density.jump == 0.0:
        rho_half = None
    else:
        half_flow = advance_flow_map(state.flow, state.flow.last_velocity,
                                     0.5 * dt)
        rho_half = density_at_time(state.density, half_flow,
                                   cfg.inverse_map_tol)

    s_now = advection_term(state.velocity, state.velocity)
    t_mid = state.time + 0.5 * dt
    if state.prev_advection is None:
        w_star, _, _, _ = _picard_solve(state, rho_half, s_now, t_mid)
        v_mid = VectorField(g, 0.5 * (state.velocity.values + w_star.values))
        s_mid = advection_term(v_mid, v_mid)
    else:
        s_mid = VectorField(g, 1.5 * s_now.values
                            - 0.5 * state.prev_advection.values)
    w, gq_hat, iters, ratio = _picard_solve(state, rho_half, s_mid, t_mid)

    v_new = leray_project(w)
    flow_new = _advance_flow(state, v_new)

    smallness_flagged = state.smallness_flagged
    if flow_new.du_linf_integral > cfg.smallness_cap and not smallness_flagged:
        warnings.warn(
            f"accumulated gradient integral {flow_new.du_linf_integral:.3f} "
            f"exceeds the smallness budget {cfg.smallness_cap}; pointwise "
            "deformation bounds are no longer guaranteed", SmallnessWarning)
        smallness_flagged = True

    return SimState(
        time=state.time + dt,
        velocity=v_new,
        pressure_gradient=VectorField(g, _ifft_vec(gq_hat)),
        density=state.density,
        flow=flow_new,
        config=cfg,
        prev_advection=s_now,
        smallness_flagged=smallness_flagged,
        picard_iters=iters,
        picard_ratio=ratio,
        div_residual=divergence_residual(v_new),
        meta=meta,
    )
