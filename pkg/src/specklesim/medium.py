"""Transverse covariance models of the random medium and screen synthesis.

The medium enters the dynamics only through the transverse covariance rate of
the driving Brownian field: two phase-screen increments accumulated over a
thickness ``step`` at transverse separation r have covariance
``step * cov_at(r)``.  Everything downstream (decay lengths, speckle radius,
moment transport) is a functional of this one curve, so the model classes
expose it together with the derived quantities the rest of the package needs:

* ``cov_at(r)``            -- isotropic covariance rate at separation r;
* ``spectrum_at(k)``       -- its d-dimensional Fourier transform at |k| = k;
* ``spectrum_on(grid)``    -- the same sampled on a grid's k lattice;
* ``structure_line_avg(r)``-- integral over s in [0,1] of cov_at(0)-cov_at(r s),
  the quantity that sets the coherence decay of a point source;
* ``structure_curvature``  -- its small-r curvature: line_avg ~ curv * r^2 / 6.

``IncrementSynthesizer`` draws the screens themselves by spectral filtering of
white noise, which realizes the periodized covariance exactly on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.fft import fftn, fftshift, ifftn, ifftshift
from scipy import integrate, interpolate, special

from .grid import TransverseGrid

__all__ = [
    "GaussianMedium",
    "TabulatedMedium",
    "IncrementSynthesizer",
    "load_covariance_table",
]

# below this value of r/(sqrt(2) lc) the erf expression cancels badly; the
# three-term series is then accurate to ~1e-16 relative
_SERIES_CUT = 0.02


def _check_dim(dim: int) -> int:
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    return int(dim)


@dataclass(frozen=True)
class GaussianMedium:
    """Gaussian-shaped isotropic covariance: cov0 * exp(-r^2 / (2 corr_length^2))."""

    dim: int
    cov0: float
    corr_length: float

    def __post_init__(self) -> None:
        _check_dim(self.dim)
        if not (np.isfinite(self.cov0) and self.cov0 > 0):
            raise ValueError(f"cov0 must be finite and positive, got {self.cov0}")
        if not (np.isfinite(self.corr_length) and self.corr_length > 0):
            raise ValueError(f"corr_length must be finite and positive, got {self.corr_length}")

    def cov_at(self, r):
        r = np.asarray(r, dtype=float)
        out = self.cov0 * np.exp(-(r**2) / (2 * self.corr_length**2))
        return out if out.ndim else float(out)

    def spectrum_at(self, k):
        k = np.asarray(k, dtype=float)
        lc = self.corr_length
        out = self.cov0 * (np.sqrt(2 * np.pi) * lc) ** self.dim * np.exp(-(k**2) * lc**2 / 2)
        return out if out.ndim else float(out)

    def spectrum_on(self, grid: TransverseGrid) -> np.ndarray:
        if grid.dim != self.dim:
            raise ValueError(f"grid dim {grid.dim} != medium dim {self.dim}")
        return self.spectrum_at(np.sqrt(grid.ksq()))

    @property
    def structure_curvature(self) -> float:
        return self.cov0 / self.corr_length**2

    @property
    def tail_radius(self) -> float:
        """Separation beyond which cov_at is numerically negligible (< 1e-31 cov0)."""
        return 12.0 * self.corr_length

    def structure_line_avg(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        a = r / (np.sqrt(2) * self.corr_length)
        small = a < _SERIES_CUT
        a_safe = np.where(small, 1.0, a)
        exact = 1.0 - np.sqrt(np.pi) / (2 * a_safe) * special.erf(a_safe)
        series = a**2 / 3 - a**4 / 10 + a**6 / 42
        out = self.cov0 * np.where(small, series, exact)
        return out if out.ndim else float(out)


class TabulatedMedium:
    """Covariance given as a radial table (r_i, c_i), zero beyond the last radius.

    The table must start at r = 0, have strictly increasing radii, peak at the
    origin, and decay to (numerically) zero by its last entry so that the
    zero extension is continuous.  Interpolation is shape-preserving cubic.
    """

    def __init__(self, dim: int, radii, values) -> None:
        self.dim = _check_dim(dim)
        r = np.asarray(radii, dtype=float)
        c = np.asarray(values, dtype=float)
        if r.ndim != 1 or r.shape != c.shape or r.size < 4:
            raise ValueError("need matching 1-d radius/value arrays with >= 4 rows")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise ValueError("radii must start at 0 and increase strictly")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(c))):
            raise ValueError("table contains non-finite entries")
        if c[0] <= 0:
            raise ValueError("covariance at zero separation must be positive")
        if np.any(np.abs(c[1:]) > c[0]):
            raise ValueError("covariance must peak at zero separation")
        if abs(c[-1]) > 1e-3 * c[0]:
            raise ValueError(
                "last table value must be ~0 (<= 1e-3 of peak); extend the table"
            )
        self._r = r
        self._c = c
        self._interp = interpolate.PchipInterpolator(r, c)
        self._anti = self._interp.antiderivative()
        # curvature from the first tabulated separation; bias O(r_1^2)
        curv = 2.0 * (c[0] - c[1]) / r[1] ** 2
        if curv <= 0:
            raise ValueError("covariance must curve downward at the origin")
        self._curv = float(curv)

    @property
    def cov0(self) -> float:
        return float(self._c[0])

    @property
    def corr_length(self) -> float:
        """Effective correlation length sqrt(cov0 / curvature)."""
        return float(np.sqrt(self.cov0 / self._curv))

    @property
    def structure_curvature(self) -> float:
        return self._curv

    @property
    def tail_radius(self) -> float:
        """Separation beyond which cov_at is exactly zero (end of the table)."""
        return float(self._r[-1])

    def cov_at(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        out = self._interp(np.minimum(r, self._r[-1]))
        out = np.where(r >= self._r[-1], 0.0, out)
        return out if out.ndim else float(out)

    def structure_line_avg(self, r):
        # integral over s in [0,1] of cov0 - cov_at(r s) = cov0 - (1/r) * int_0^r cov;
        # the interpolant integrates exactly via its antiderivative
        r = np.abs(np.asarray(r, dtype=float))
        safe = np.where(r > 0, r, 1.0)
        integ = self._anti(np.minimum(safe, self._r[-1]))
        out = np.where(r > 0, self.cov0 - integ / safe, 0.0)
        return out if out.ndim else float(out)

    def spectrum_at(self, k):
        rmax = self._r[-1]

        def one(kv: float) -> float:
            if self.dim == 1:
                val, _ = integrate.quad(
                    lambda r: float(self.cov_at(r)) * np.cos(kv * r),
                    0.0, rmax, epsabs=1e-12, epsrel=1e-9, limit=400,
                )
                return 2.0 * val
            val, _ = integrate.quad(
                lambda r: float(self.cov_at(r)) * special.j0(kv * r) * r,
                0.0, rmax, epsabs=1e-12, epsrel=1e-9, limit=400,
            )
            return 2.0 * np.pi * val

        k = np.abs(np.asarray(k, dtype=float))
        out = np.vectorize(one)(k)
        return out if out.ndim else float(out)

    def spectrum_on(self, grid: TransverseGrid) -> np.ndarray:
        """DFT of the sampled covariance; tiny negative lobes are clipped."""
        if grid.dim != self.dim:
            raise ValueError(f"grid dim {grid.dim} != medium dim {self.dim}")
        coords = grid.coords()
        rr = np.sqrt(sum(np.asarray(a, dtype=float) ** 2 for a in coords))
        sampled = np.asarray(self.cov_at(rr), dtype=complex)
        spec = (fftshift(fftn(ifftshift(sampled))) * grid.cell()).real
        total = spec[spec > 0].sum()
        clipped = -spec[spec < 0].sum()
        if clipped > 1e-6 * total:
            raise ValueError(
                f"tabulated covariance is not positive definite on this grid "
                f"(negative spectral mass fraction {clipped / total:.2e})"
            )
        return np.maximum(spec, 0.0)


def load_covariance_table(path: str | Path, dim: int) -> TabulatedMedium:
    """Read a two-column CSV (separation, covariance); '#' starts a comment."""
    data = np.loadtxt(Path(path), delimiter=",", comments="#", ndmin=2)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns (separation, covariance)")
    return TabulatedMedium(dim, data[:, 0], data[:, 1])


class IncrementSynthesizer:
    """Draws Brownian screen increments: real fields with covariance step * cov_at.

    Spectral filtering of white noise; the filter is the square root of the
    medium spectrum sampled on the grid's k lattice, so one draw costs two
    FFTs.  The box must be >= 8 correlation lengths or the periodized
    covariance would differ visibly from the intended one.
    """

    def __init__(self, medium, grid: TransverseGrid, step: float) -> None:
        if grid.dim != medium.dim:
            raise ValueError(f"grid dim {grid.dim} != medium dim {medium.dim}")
        if not (np.isfinite(step) and step > 0):
            raise ValueError(f"step must be finite and positive, got {step}")
        if grid.box < 8 * medium.corr_length:
            raise ValueError(
                f"box {grid.box:g} < 8 correlation lengths "
                f"({8 * medium.corr_length:g}); enlarge the grid"
            )
        spec = np.asarray(medium.spectrum_on(grid), dtype=float)
        if spec.min() < 0:
            raise ValueError("medium spectrum is negative on this grid")
        self.grid = grid
        self.step = float(step)
        self._filter = ifftshift(np.sqrt(spec))
        self._norm = np.sqrt(self.step / grid.cell())

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        g = rng.standard_normal(self.grid.shape)
        h = ifftn(self._filter * fftn(g))
        scale = float(np.max(np.abs(h.real))) + 1e-300
        if float(np.max(np.abs(h.imag))) > 1e-10 * scale:
            raise FloatingPointError("screen synthesis lost Hermitian symmetry")
        return h.real * self._norm
