"""Periodic 2D fields and their pseudo-spectral machinery.

Everything downstream (flow maps, transport, the solver) works with the three
field kinds defined here on a square torus [0, L)^2 sampled on an n x n grid.
Arrays are indexed values[i, j] = f(x1_i, x2_j). Derivatives are exact for
resolved Fourier modes; products are dealiased with the 2/3 rule.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field as dc_field
from typing import Iterator

import numpy as np

from .errors import DegenerateInput

TWO_PI = 2.0 * np.pi


class Grid:
    """Uniform periodic grid with precomputed spectral workspace."""

    def __init__(self, n: int, length: float = TWO_PI):
        if n < 8 or (n & (n - 1)) != 0:
            raise DegenerateInput(f"grid size must be a power of two >= 8, got {n}")
        if not (length > 0):
            raise DegenerateInput(f"domain length must be positive, got {length}")
        self.n = int(n)
        self.length = float(length)
        self.h = self.length / self.n
        self.x = np.arange(self.n) * self.h
        k1d = TWO_PI * np.fft.fftfreq(self.n, d=self.h)
        self.k1 = k1d[:, None]          # broadcast over axis 0
        self.k2 = k1d[None, :]          # broadcast over axis 1
        self.k_sq = self.k1**2 + self.k2**2
        inv = self.k_sq.copy()
        inv[0, 0] = 1.0                 # zero mode handled by the caller
        self.inv_k_sq = 1.0 / inv
        k_cut = (2.0 / 3.0) * np.max(np.abs(k1d))
        self.dealias_mask = (np.abs(self.k1) < k_cut) & (np.abs(self.k2) < k_cut)
        self.cell_area = self.h**2

    def points(self) -> np.ndarray:
        """All gridpoint coordinates, shape (n*n, 2), row-major like values."""
        X1, X2 = np.meshgrid(self.x, self.x, indexing="ij")
        return np.stack([X1.ravel(), X2.ravel()], axis=-1)

    def meshes(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.x, indexing="ij")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Grid)
            and self.n == other.n
            and self.length == other.length
        )

    def __hash__(self) -> int:
        return hash((self.n, self.length))

    def __repr__(self) -> str:
        return f"Grid(n={self.n}, length={self.length})"


def _check_values(grid: Grid, values: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != shape:
        raise DegenerateInput(f"expected values of shape {shape}, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise DegenerateInput("field values must be finite")
    return values


@dataclass(eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.values = _check_values(self.grid, self.values, (self.grid.n, self.grid.n))

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self) -> "ScalarField":
        return ScalarField(self.grid, -self.values)


@dataclass(eq=False)
class VectorField:
    """Two-component field stored as values[c, i, j] for component c."""

    grid: Grid
    values: np.ndarray
    divergence_free: bool = False
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.values = _check_values(self.grid, self.values, (2, self.grid.n, self.grid.n))

    def component(self, c: int) -> ScalarField:
        return ScalarField(self.grid, self.values[c].copy())

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.grid, self.values + other.values)

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "VectorField":
        return VectorField(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self) -> "VectorField":
        return VectorField(self.grid, -self.values)


@dataclass(eq=False)
class MatrixField:
    """2x2 matrix field stored as values[i, j, a, b] = M_ij at gridpoint (a, b)."""

    grid: Grid
    values: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        n = self.grid.n
        self.values = _check_values(self.grid, self.values, (2, 2, n, n))

    def entry(self, i: int, j: int) -> ScalarField:
        return ScalarField(self.grid, self.values[i, j].copy())

    def __add__(self, other: "MatrixField") -> "MatrixField":
        return MatrixField(self.grid, self.values + other.values)

    def __sub__(self, other: "MatrixField") -> "MatrixField":
        return MatrixField(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "MatrixField":
        return MatrixField(self.grid, self.values * float(c))

    __rmul__ = __mul__


Field = ScalarField | VectorField | MatrixField


def identity_matrix_field(grid: Grid) -> MatrixField:
    vals = np.zeros((2, 2, grid.n, grid.n))
    vals[0, 0] = 1.0
    vals[1, 1] = 1.0
    return MatrixField(grid, vals)


# ---------------------------------------------------------------------------
# spectral derivatives


def _fft(values: np.ndarray) -> np.ndarray:
    return np.fft.fft2(values)


def _ifft(spectrum: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(spectrum).real


def gradient(f: ScalarField) -> VectorField:
    """Spectral gradient; exact for resolved modes."""
    g = f.grid
    f_hat = _fft(f.values)
    d1 = _ifft(1j * g.k1 * f_hat)
    d2 = _ifft(1j * g.k2 * f_hat)
    return VectorField(g, np.stack([d1, d2]))


def divergence(v: VectorField) -> ScalarField:
    g = v.grid
    out = _ifft(1j * g.k1 * _fft(v.values[0]) + 1j * g.k2 * _fft(v.values[1]))
    return ScalarField(g, out)


def jacobian(v: VectorField) -> MatrixField:
    """Velocity gradient D with D[i, j] = d v_i / d x_j."""
    g = v.grid
    out = np.empty((2, 2, g.n, g.n))
    for i in range(2):
        v_hat = _fft(v.values[i])
        out[i, 0] = _ifft(1j * g.k1 * v_hat)
        out[i, 1] = _ifft(1j * g.k2 * v_hat)
    return MatrixField(g, out)


def laplacian(f: ScalarField) -> ScalarField:
    g = f.grid
    return ScalarField(g, _ifft(-g.k_sq * _fft(f.values)))


def vector_laplacian(v: VectorField) -> VectorField:
    g = v.grid
    out = np.stack([_ifft(-g.k_sq * _fft(v.values[c])) for c in range(2)])
    return VectorField(g, out)


def inverse_laplacian(f: ScalarField) -> ScalarField:
    """Solve laplacian(u) = f - mean(f); the result has zero mean.

    The subtracted mean is reported in the result's meta dict under
    "subtracted_mean" so callers can detect non-solvable right-hand sides.
    """
    g = f.grid
    f_hat = _fft(f.values)
    subtracted = f_hat[0, 0].real / g.n**2
    f_hat[0, 0] = 0.0
    u_hat = -f_hat * g.inv_k_sq
    out = ScalarField(g, _ifft(u_hat))
    out.meta["subtracted_mean"] = float(subtracted)
    return out


def leray_project(v: VectorField) -> VectorField:
    """Remove the gradient part: P v = v - grad (lap)^-1 div v.

    The constant (zero-wavenumber) mode is divergence-free and is kept.
    """
    g = v.grid
    v1_hat = _fft(v.values[0])
    v2_hat = _fft(v.values[1])
    k_dot_v = g.k1 * v1_hat + g.k2 * v2_hat
    factor = k_dot_v * g.inv_k_sq
    out1 = _ifft(v1_hat - g.k1 * factor)
    out2 = _ifft(v2_hat - g.k2 * factor)
    return VectorField(g, np.stack([out1, out2]), divergence_free=True)


def vorticity(v: VectorField) -> ScalarField:
    g = v.grid
    out = _ifft(1j * g.k1 * _fft(v.values[1]) - 1j * g.k2 * _fft(v.values[0]))
    return ScalarField(g, out)


def velocity_from_stream(psi: ScalarField) -> VectorField:
    """Divergence-free velocity (d2 psi, -d1 psi) from a stream function."""
    g = psi.grid
    psi_hat = _fft(psi.values)
    u1 = _ifft(1j * g.k2 * psi_hat)
    u2 = _ifft(-1j * g.k1 * psi_hat)
    return VectorField(g, np.stack([u1, u2]), divergence_free=True)


# ---------------------------------------------------------------------------
# dealiasing and products


def _dealias_array(grid: Grid, values: np.ndarray) -> np.ndarray:
    return _ifft(_fft(values) * grid.dealias_mask)


def dealias(f: Field) -> Field:
    """Zero all modes beyond the 2/3 cutoff."""
    g = f.grid
    if isinstance(f, ScalarField):
        return ScalarField(g, _dealias_array(g, f.values))
    if isinstance(f, VectorField):
        vals = np.stack([_dealias_array(g, f.values[c]) for c in range(2)])
        return VectorField(g, vals, divergence_free=f.divergence_free)
    vals = np.empty_like(f.values)
    for i in range(2):
        for j in range(2):
            vals[i, j] = _dealias_array(g, f.values[i, j])
    return MatrixField(g, vals)


def multiply(f: ScalarField, g: ScalarField, dealias_result: bool = True) -> ScalarField:
    out = f.values * g.values
    if dealias_result:
        out = _dealias_array(f.grid, out)
    return ScalarField(f.grid, out)


def scale_vector(f: np.ndarray | ScalarField, v: VectorField, dealias_result: bool = True) -> VectorField:
    """Pointwise scalar * vector with optional dealiasing of the product."""
    coeff = f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float)
    out = coeff[None, :, :] * v.values
    if dealias_result:
        out = np.stack([_dealias_array(v.grid, out[c]) for c in range(2)])
    return VectorField(v.grid, out)


def apply_matrix(M: MatrixField, v: VectorField, dealias_result: bool = True) -> VectorField:
    """Pointwise matrix-vector product (M v)_i = M[i, j] v_j."""
    out = np.einsum("ijab,jab->iab", M.values, v.values)
    if dealias_result:
        out = np.stack([_dealias_array(v.grid, out[c]) for c in range(2)])
    return VectorField(v.grid, out)


def matmul_fields(A: MatrixField, B: MatrixField) -> MatrixField:
    """Pointwise matrix-matrix product (no dealiasing; caller decides)."""
    return MatrixField(A.grid, np.einsum("ikab,kjab->ijab", A.values, B.values))


def transpose_field(M: MatrixField) -> MatrixField:
    return MatrixField(M.grid, np.swapaxes(M.values, 0, 1))


def advection_term(v: VectorField, w: VectorField) -> VectorField:
    """(v . grad) w with dealiased products."""
    Dw = jacobian(w)
    out = np.einsum("ijab,jab->iab", Dw.values, v.values)
    out = np.stack([_dealias_array(v.grid, out[c]) for c in range(2)])
    return VectorField(v.grid, out)


# ---------------------------------------------------------------------------
# pointwise magnitudes and norms


def matrix_pointwise_norm(M) -> np.ndarray:
    """Spectral (operator 2-) norm of the 2x2 matrix at every gridpoint.

    Accepts a MatrixField or a raw (2, 2, n, n) array.
    """
    m = M.values if isinstance(M, MatrixField) else np.asarray(M)
    frob_sq = np.einsum("ijab,ijab->ab", m, m)
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    inner = np.clip(frob_sq**2 - 4.0 * det**2, 0.0, None)
    sigma_sq = 0.5 * (frob_sq + np.sqrt(inner))
    return np.sqrt(np.clip(sigma_sq, 0.0, None))


def pointwise_magnitude(f: Field) -> np.ndarray:
    """|f| at each gridpoint: absolute value, Euclidean norm, or spectral norm."""
    if isinstance(f, ScalarField):
        return np.abs(f.values)
    if isinstance(f, VectorField):
        return np.sqrt(f.values[0] ** 2 + f.values[1] ** 2)
    return matrix_pointwise_norm(f)


def _flat_components(f: Field) -> np.ndarray:
    if isinstance(f, ScalarField):
        return f.values[None]
    if isinstance(f, VectorField):
        return f.values
    return f.values.reshape(4, f.grid.n, f.grid.n)


def mean(f: ScalarField) -> float:
    return float(np.mean(f.values))


def l2_norm(f: Field) -> float:
    """sqrt(integral of the squared componentwise magnitude)."""
    comp = _flat_components(f)
    return float(np.sqrt(np.sum(comp**2) * f.grid.cell_area))


def lp_norm(f: Field, p: float) -> float:
    comp = _flat_components(f)
    mag_sq = np.sum(comp**2, axis=0)
    return float((np.sum(mag_sq ** (p / 2.0)) * f.grid.cell_area) ** (1.0 / p))


def linf_norm(f: Field) -> float:
    return float(np.max(pointwise_magnitude(f)))


def inner_l2(f: Field, g: Field) -> float:
    return float(np.sum(_flat_components(f) * _flat_components(g)) * f.grid.cell_area)


def relative_l2_error(f: Field, ref: Field) -> float:
    denom = l2_norm(ref)
    if denom == 0.0:
        return l2_norm(f)
    diff = np.asarray(_flat_components(f)) - np.asarray(_flat_components(ref))
    return float(np.sqrt(np.sum(diff**2) * f.grid.cell_area) / denom)


def divergence_residual(v: VectorField) -> float:
    """||div v||_L2 relative to ||v||_L2 (zero field gives zero)."""
    nv = l2_norm(v)
    if nv == 0.0:
        return 0.0
    return l2_norm(divergence(v)) / nv


# ---------------------------------------------------------------------------
# random band-limited fields


def random_scalar(grid: Grid, k_max_modes: int, rng: np.random.Generator,
                  amplitude: float = 1.0) -> ScalarField:
    """Zero-mean random field supported on integer modes |k_i| <= k_max_modes."""
    spec = np.zeros((grid.n, grid.n), dtype=complex)
    idx = np.fft.fftfreq(grid.n, d=1.0 / grid.n).astype(int)
    keep = np.abs(idx) <= k_max_modes
    mask = keep[:, None] & keep[None, :]
    raw = rng.standard_normal((grid.n, grid.n)) + 1j * rng.standard_normal((grid.n, grid.n))
    spec[mask] = raw[mask]
    spec[0, 0] = 0.0
    vals = _ifft(spec)
    peak = np.max(np.abs(vals))
    if peak > 0:
        vals *= amplitude / peak
    return ScalarField(grid, vals)


def random_vector(grid: Grid, k_max_modes: int, rng: np.random.Generator,
                  amplitude: float = 1.0) -> VectorField:
    a = random_scalar(grid, k_max_modes, rng, amplitude)
    b = random_scalar(grid, k_max_modes, rng, amplitude)
    return VectorField(grid, np.stack([a.values, b.values]))


def random_divergence_free(grid: Grid, k_max_modes: int, rng: np.random.Generator,
                           amplitude: float = 1.0) -> VectorField:
    """Band-limited divergence-free field built from a random stream function."""
    psi = random_scalar(grid, k_max_modes, rng, 1.0)
    v = velocity_from_stream(psi)
    peak = np.max(pointwise_magnitude(v))
    if peak > 0:
        v = VectorField(grid, v.values * (amplitude / peak), divergence_free=True)
    return v


# ---------------------------------------------------------------------------
# bilinear sampling (periodic)


def bilinear_sample(grid: Grid, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Sample a gridded array at arbitrary points with periodic bilinear blending.

    values may carry leading component axes; the last two axes are the grid.
    points has shape (..., 2) in physical coordinates. Returns an array with
    the component axes first and the point shape last.
    """
    pts = np.asarray(points, dtype=float)
    s = pts / grid.h
    i0 = np.floor(s[..., 0]).astype(int)
    j0 = np.floor(s[..., 1]).astype(int)
    fi = s[..., 0] - i0
    fj = s[..., 1] - j0
    i0 %= grid.n
    j0 %= grid.n
    i1 = (i0 + 1) % grid.n
    j1 = (j0 + 1) % grid.n
    v00 = values[..., i0, j0]
    v10 = values[..., i1, j0]
    v01 = values[..., i0, j1]
    v11 = values[..., i1, j1]
    return (
        v00 * (1 - fi) * (1 - fj)
        + v10 * fi * (1 - fj)
        + v01 * (1 - fi) * fj
        + v11 * fi * fj
    )


# ---------------------------------------------------------------------------
# snapshot I/O

_KINDS = {"scalar": 1, "vector": 2, "matrix": 4}
_HEADER_RE = re.compile(
    r"^grid n=(?P<n>\d+) L=(?P<L>[-+0-9.eE]+) kind=(?P<kind>scalar|vector|matrix)$"
)


def _field_kind(f: Field) -> str:
    if isinstance(f, ScalarField):
        return "scalar"
    if isinstance(f, VectorField):
        return "vector"
    return "matrix"


def save_field(path, f: Field) -> None:
    """Write a field snapshot: a one-line header, then one row-major CSV block
    per component, blocks separated by a blank line. Matrix components are
    written in the order (0,0), (0,1), (1,0), (1,1)."""
    comps = _flat_components(f)
    lines = [f"grid n={f.grid.n} L={f.grid.length!r} kind={_field_kind(f)}"]
    for c in range(comps.shape[0]):
        for row in comps[c]:
            lines.append(",".join(repr(float(x)) for x in row))
        lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


def load_field(path) -> Field:
    with open(path) as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines:
        raise DegenerateInput(f"{path}: empty snapshot")
    header = _HEADER_RE.match(lines[0].strip())
    if header is None:
        raise DegenerateInput(f"{path}: malformed snapshot header {lines[0]!r}")
    n = int(header["n"])
    length = float(header["L"])
    kind = header["kind"]
    grid = Grid(n, length)
    blocks: list[np.ndarray] = []
    current: list[list[float]] = []
    for line in lines[1:]:
        if line.strip() == "":
            if current:
                blocks.append(np.array(current))
                current = []
            continue
        current.append([float(tok) for tok in line.split(",")])
    if current:
        blocks.append(np.array(current))
    if len(blocks) != _KINDS[kind]:
        raise DegenerateInput(
            f"{path}: expected {_KINDS[kind]} component blocks, found {len(blocks)}"
        )
    for b in blocks:
        if b.shape != (n, n):
            raise DegenerateInput(f"{path}: component block has shape {b.shape}")
    if kind == "scalar":
        return ScalarField(grid, blocks[0])
    if kind == "vector":
        return VectorField(grid, np.stack(blocks))
    return MatrixField(grid, np.stack(blocks).reshape(2, 2, n, n))


def field_components(f: Field) -> Iterator[np.ndarray]:
    yield from _flat_components(f)
