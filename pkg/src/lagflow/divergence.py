"""Divergence-prescribing lifts, flat and in flowing coordinates.

`solve_divergence` produces the canonical curl-free field whose divergence
matches that of a given flux — the Helmholtz gradient part.  The twisted
variant solves div(A u) = div R for the inverse deformation gradient A by a
fixed-point iteration whose contraction factor is the pointwise distance of
A from the identity, so it converges geometrically in the smallness regime
the solver maintains.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ContractionViolated, NoConvergence
from .fields import (
    MatrixField,
    VectorField,
    advection_term,
    apply_matrix,
    divergence,
    l2_norm,
    matrix_pointwise_norm,
)

CONTRACTION_THRESHOLD = 0.5


def solve_divergence(flux: VectorField) -> VectorField:
    """Gradient part of `flux`: the unique curl-free, mean-free w with
    div w = div(flux)."""
    g = flux.grid
    f1 = np.fft.fft2(flux.values[0])
    f2 = np.fft.fft2(flux.values[1])
    k_dot = g.k1 * f1 + g.k2 * f2
    w1 = np.fft.ifft2(g.k1 * k_dot * g.inv_k_sq).real
    w2 = np.fft.ifft2(g.k2 * k_dot * g.inv_k_sq).real
    return VectorField(g, np.stack([w1, w2]))


def deviation_norm(inv_jac: MatrixField) -> float:
    """sup-norm of A - Id (pointwise spectral norm): the contraction factor."""
    dev = inv_jac.values.copy()
    dev[0, 0] -= 1.0
    dev[1, 1] -= 1.0
    return float(np.max(matrix_pointwise_norm(dev)))


@dataclass
class TwistedDivergenceProblem:
    """div(A u) = div R, posed on the grid carrying R and A."""

    flux: VectorField
    inv_jac: MatrixField
    tol: float = 1e-10
    max_iter: int = 60
    contraction_threshold: float = CONTRACTION_THRESHOLD
    meta: dict = dc_field(default_factory=dict)


def solve_twisted_divergence(problem: TwistedDivergenceProblem) -> VectorField:
    """Fixed-point solve of div(A u) = div R.

    Iterates u <- B(R + (Id - A) u) where B is the flat divergence lift; each
    sweep multiplies the error by at most |A - Id| in sup norm.  The returned
    field carries the residual history and iteration count in its meta dict.
    Residuals are relative to the L2 size of div R (absolute when that
    vanishes).
    """
    factor = deviation_norm(problem.inv_jac)
    if factor > problem.contraction_threshold:
        raise ContractionViolated(
            f"deformation deviation {factor:.3f} exceeds the contraction "
            f"threshold {problem.contraction_threshold}")
    target = divergence(problem.flux)
    scale = l2_norm(target)
    if scale == 0.0:
        scale = 1.0
    u = solve_divergence(problem.flux)
    residuals = []
    for iteration in range(1, problem.max_iter + 1):
        twisted = apply_matrix(problem.inv_jac, u)
        residual = l2_norm(divergence(twisted) - target) / scale
        residuals.append(residual)
        if residual <= problem.tol:
            u.meta.update(residuals=residuals, iterations=iteration,
                          contraction_norm=factor)
            return u
        defect = problem.flux.values - twisted.values
        u = solve_divergence(u + VectorField(problem.flux.grid, defect))
    raise NoConvergence(
        f"twisted divergence solve stalled after {problem.max_iter} sweeps",
        residual=residuals[-1])


def compatibility_corrector(v0: VectorField) -> VectorField:
    """Initial pressure-consistency lift for an impulsively started flow.

    The gradient part of the initial self-advection (v0 . grad v0): adding its
    negative time-slope to a prescribed flux keeps the evolutionary problem's
    data compatible at time zero.  Vanishes identically for unidirectional
    shear profiles, whose self-advection is divergence-free.
    """
    return solve_divergence(advection_term(v0, v0))
