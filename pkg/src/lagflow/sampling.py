"""Near-roundoff evaluation of band-limited grid fields at arbitrary points.

The flow-map accumulator composes the Eulerian velocity with the deformation
at every step. Low-order local interpolation there would leak O(h^2) noise
into the accumulated Jacobian integral and destroy volume preservation at the
tolerances this package promises, so compositions inside the solver go through
one of two high-accuracy routes:

* sparse exact summation of the Fourier series when few modes matter, or
* zero-padded FFT refinement plus high-order spline evaluation otherwise.

Public frame-change helpers elsewhere use plain bilinear sampling; this module
is the internal precision path.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .fields import Grid


def _pad_spectrum(spec: np.ndarray, n: int, big_n: int) -> np.ndarray:
    """Embed an n x n FFT spectrum into a big_n x big_n spectrum (zero-pad).

    The Nyquist row/column lands in the negative-frequency block; fields fed
    through here are dealiased or band-limited, so those modes are zero.
    """
    half = n // 2
    big = np.zeros((big_n, big_n), dtype=complex)
    big[:half, :half] = spec[:half, :half]
    big[:half, big_n - half:] = spec[:half, half:]
    big[big_n - half:, :half] = spec[half:, :half]
    big[big_n - half:, big_n - half:] = spec[half:, half:]
    return big


class FieldSampler:
    """Evaluates a stack of field components (and their first derivatives)
    at arbitrary points on the torus.

    Parameters
    ----------
    grid : source grid of the components
    components : array (c, n, n)
    with_gradient : also prepare d/dx1, d/dx2 of every component
    rel_tol : sparse-route threshold relative to the spectral peak
    sparse_limit : max significant modes for the exact-summation route
    pad_factor : FFT refinement factor for the spline route
    spline_order : order handed to scipy's spline evaluator
    """

    def __init__(self, grid: Grid, components: np.ndarray, with_gradient: bool = True,
                 rel_tol: float = 1e-12, sparse_limit: int = 192,
                 pad_factor: int = 4, spline_order: int = 5):
        self.grid = grid
        comps = np.asarray(components, dtype=float)
        if comps.ndim == 2:
            comps = comps[None]
        self.n_components = comps.shape[0]
        self.with_gradient = with_gradient
        n = grid.n
        spectra = np.stack([np.fft.fft2(c) for c in comps])
        peak = float(np.max(np.abs(spectra))) if spectra.size else 0.0
        mask = np.any(np.abs(spectra) > rel_tol * peak, axis=0) if peak > 0 else np.zeros((n, n), bool)
        self.n_significant = int(np.count_nonzero(mask))
        self.sparse = self.n_significant <= sparse_limit

        if self.sparse:
            k1 = np.broadcast_to(grid.k1, (n, n))[mask]
            k2 = np.broadcast_to(grid.k2, (n, n))[mask]
            self._modes = np.stack([k1, k2], axis=1)          # (nm, 2)
            base = spectra[:, mask] / n**2                    # (c, nm)
            cols = [base]
            if with_gradient:
                cols.append(1j * k1[None, :] * base)
                cols.append(1j * k2[None, :] * base)
            # column layout: [f_c..., d1 f_c..., d2 f_c...]
            self._coeffs = np.concatenate(cols, axis=0).T     # (nm, ncols)
        else:
            big_n = pad_factor * n
            self._big_n = big_n
            self._big_h = grid.length / big_n
            self._order = spline_order
            scale = (big_n / n) ** 2
            arrays = []
            for c in range(self.n_components):
                arrays.append(spectra[c])
            if with_gradient:
                for c in range(self.n_components):
                    arrays.append(1j * grid.k1 * spectra[c])
                    arrays.append(1j * grid.k2 * spectra[c])
            filtered = []
            for spec in arrays:
                fine = np.fft.ifft2(_pad_spectrum(spec, n, big_n)).real * scale
                filtered.append(ndimage.spline_filter(fine, order=spline_order,
                                                      mode="grid-wrap"))
            self._fine = filtered

    # -- evaluation -----------------------------------------------------

    def _sparse_eval(self, points: np.ndarray) -> np.ndarray:
        phases = points @ self._modes.T                        # (m, nm)
        return (np.exp(1j * phases) @ self._coeffs).real.T     # (ncols, m)

    def _spline_eval(self, points: np.ndarray, arrays) -> np.ndarray:
        coords = np.stack([points[:, 0] / self._big_h, points[:, 1] / self._big_h])
        out = [
            ndimage.map_coordinates(a, coords, order=self._order,
                                    mode="grid-wrap", prefilter=False)
            for a in arrays
        ]
        return np.stack(out)

    def values_at(self, points: np.ndarray) -> np.ndarray:
        """Component values at points (m, 2); returns (c, m)."""
        pts = np.asarray(points, dtype=float)
        if self.sparse:
            return self._sparse_eval(pts)[: self.n_components]
        return self._spline_eval(pts, self._fine[: self.n_components])

    def values_and_gradients_at(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values (c, m) and first derivatives (c, 2, m) at points (m, 2)."""
        if not self.with_gradient:
            raise ValueError("sampler built without gradients")
        pts = np.asarray(points, dtype=float)
        c = self.n_components
        if self.sparse:
            full = self._sparse_eval(pts)
            vals = full[:c]
            grads = np.stack([full[c:2 * c], full[2 * c:3 * c]], axis=1)
        else:
            full = self._spline_eval(pts, self._fine)
            vals = full[:c]
            grads = np.empty((c, 2, pts.shape[0]))
            for i in range(c):
                grads[i, 0] = full[c + 2 * i]
                grads[i, 1] = full[c + 2 * i + 1]
        return vals, grads
