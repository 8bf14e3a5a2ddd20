"""Closed-form moment predictions for a thin random slab.

Deterministic counterparts of the Monte Carlo machinery: characteristic
length scales, the mean-intensity and intensity-covariance laws of the
scintillation regime (general spectral form and the strong-scattering
Gaussian-envelope form), the self-averaged covariance map whose square root
is the mask autocorrelation modulus, the pixel-blur correction, the
spot-dancing limit where the transmitted spot keeps its homogeneous-medium
shape but its centroid wanders, and a regime classifier.

Conventions: the incident mask U lives on a `TransverseGrid`; source shifts
and product lags must be grid-aligned (see `grid.shifted`); observation
points and offsets are unrestricted reals.  All evaluators are pure.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate
from scipy.special import erf

from .grid import ComplexField, TransverseGrid, forward_transform, inverse_transform, shifted
from .medium import GaussianMedium
from .propagator import free_space_propagate, make_incident

__all__ = [
    "QuadratureFailure",
    "RegimeReport",
    "SpotDancingPrediction",
    "beam_spread",
    "blur_radius",
    "blurred_covariance",
    "classify_regime",
    "covariance_scintillation",
    "mask_autocorrelation",
    "mean_intensity_profile",
    "mean_intensity_scintillation",
    "moment_damping_factor",
    "moment_scattering_kernel",
    "predicted_covariance_map",
    "scattering_mean_free_path",
    "speckle_radius",
    "spot_dancing_predictions",
]


class QuadratureFailure(ArithmeticError):
    """Adaptive quadrature could not reach the requested absolute tolerance."""


def _quiet_quad(*args, **kwargs):
    # convergence is judged from the returned error estimate (and surfaced as
    # QuadratureFailure by the caller), so scipy's advisory warning is noise
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return integrate.quad(*args, **kwargs)


# -- length scales ------------------------------------------------------------


def scattering_mean_free_path(cov0: float, k0: float) -> float:
    """Decay length of the coherent (mean) field's squared magnitude."""
    if not (cov0 > 0 and k0 > 0):
        raise ValueError("cov0 and k0 must be positive")
    return 8.0 / (cov0 * k0**2)


def speckle_radius(curvature: float, k0: float, thickness: float) -> float:
    """Transverse correlation radius of the speckle behind the slab."""
    if not (curvature > 0 and k0 > 0 and thickness > 0):
        raise ValueError("curvature, k0, thickness must be positive")
    return 2.0 / math.sqrt(curvature * k0**2 * thickness)


def beam_spread(curvature: float, thickness: float) -> float:
    """Scattering-induced enhancement of the transmitted beam radius."""
    if not (curvature > 0 and thickness > 0):
        raise ValueError("curvature and thickness must be positive")
    return math.sqrt(curvature * thickness**3 / 6.0)


# -- fourth-moment expansion kernels ------------------------------------------


def moment_damping_factor(cov0: float, k0: float, z: float) -> float:
    """Overall damping of the fourth-moment kernel after depth z."""
    if z < 0:
        raise ValueError(f"z must be >= 0, got {z}")
    return math.exp(-(k0**2) * cov0 * z / 2.0)


def _ray_integral(medium, velocity: np.ndarray, offset: np.ndarray, length: float):
    """integral over z in [0, length] of cov_at(|offset + velocity*z|).

    velocity: array (..., d); offset: array (d,).  Gaussian media in closed
    form (vectorized); tabulated media by per-ray adaptive quadrature.
    """
    velocity = np.asarray(velocity, dtype=float)
    offset = np.asarray(offset, dtype=float)
    vsq = np.sum(velocity**2, axis=-1)
    osq = float(np.sum(offset**2))
    if isinstance(medium, GaussianMedium):
        lc2 = medium.corr_length**2
        a = np.atleast_1d(vsq / (2.0 * lc2))
        b = np.atleast_1d(np.sum(velocity * offset, axis=-1) / lc2)
        c = osq / (2.0 * lc2)
        out = np.empty_like(a)
        # straight substitution blows up as a -> 0; there b -> 0 as well
        # (|b| <= 2 sqrt(a c)), so the constant-integrand value is exact
        # to ~1e-12 relative once a*length^2 < 1e-24
        tiny = a * length**2 < 1e-24
        out[tiny] = math.exp(-c) * length
        a_, b_ = a[~tiny], b[~tiny]
        sa = np.sqrt(a_)
        shift = b_ / (2.0 * a_)
        # c - b^2/(4a) is the squared ray-to-origin distance / (2 lc^2), >= 0
        damp = np.exp(-(c - b_**2 / (4.0 * a_)))
        out[~tiny] = damp * (np.sqrt(np.pi) / (2.0 * sa)) * (
            erf(sa * (length + shift)) - erf(sa * shift)
        )
        return (medium.cov0 * out).reshape(np.shape(vsq))
    flat_v = velocity.reshape(-1, velocity.shape[-1])
    vals = np.empty(flat_v.shape[0])
    for i, vel in enumerate(flat_v):
        speed2 = float(np.dot(vel, vel))
        if speed2 * length**2 < 1e-24:
            vals[i] = medium.cov_at(math.sqrt(osq)) * length
            continue
        closest = -float(np.dot(vel, offset)) / speed2
        pts = [closest] if 0.0 < closest < length else None

        def along(z, vel=vel):
            p = offset + vel * z
            return medium.cov_at(math.sqrt(float(np.dot(p, p))))

        val, err = _quiet_quad(
            along, 0.0, length, points=pts, limit=200, epsabs=1e-12, epsrel=1e-10
        )
        if err > 1e-8:
            raise QuadratureFailure(
                f"ray integral reached abs error {err:.2e} > 1e-8 "
                f"(velocity {vel}, offset {offset}, length {length})"
            )
        vals[i] = val
    return vals.reshape(vsq.shape)


def moment_scattering_kernel(xi, zeta, z: float, *, medium, k0: float) -> complex:
    """Fourier kernel of the multiple-scattering correction at depth z.

    Transform (with a (2 pi)^-d prefactor) over x of
    exp((k0^2/4) * integral_0^z cov(x + zeta z'/k0) dz') - 1, evaluated at
    frequency xi by adaptive quadrature, absolute tolerance 1e-8.  Raises
    QuadratureFailure when the integrator cannot certify that tolerance.
    """
    dim = medium.dim
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    if xi.shape != (dim,) or zeta.shape != (dim,):
        raise ValueError(f"xi and zeta must have {dim} components")
    if z < 0:
        raise ValueError(f"z must be >= 0, got {z}")
    if z == 0:
        return 0j
    # integrand support: the ray sweep plus the covariance tail
    reach = float(np.linalg.norm(zeta)) * z / k0 + medium.tail_radius

    if dim == 1:

        def bracket(x: float) -> float:
            ray = float(_ray_integral(medium, zeta / k0, np.array([x]), z))
            return math.exp(k0**2 / 4.0 * ray) - 1.0

        pieces = []
        for weight, wvar in (("cos", float(xi[0])), ("sin", float(xi[0]))):
            val, err = _quiet_quad(
                bracket, -reach, reach, weight=weight, wvar=wvar, limit=400, epsabs=1e-9
            )
            if err > 1e-8:
                raise QuadratureFailure(
                    f"oscillatory transform reached abs error {err:.2e} > 1e-8 "
                    f"(xi={xi}, zeta={zeta}, z={z})"
                )
            pieces.append(val)
        return (pieces[0] - 1j * pieces[1]) / (2.0 * np.pi)

    def bracket2(y: float, x: float) -> float:
        ray = float(_ray_integral(medium, zeta / k0, np.array([x, y]), z))
        return math.exp(k0**2 / 4.0 * ray) - 1.0

    out = 0j
    for part in (np.cos, np.sin):

        def integrand(y, x, part=part):
            return bracket2(y, x) * part(-(xi[0] * x + xi[1] * y))

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.dblquad(
                integrand, -reach, reach, -reach, reach, epsabs=1e-9, epsrel=1e-9
            )
        if err > 1e-8:
            raise QuadratureFailure(
                f"2-d transform reached abs error {err:.2e} > 1e-8 "
                f"(xi={xi}, zeta={zeta}, z={z})"
            )
        out = out + val if part is np.cos else out + 1j * val
    return complex(out / (2.0 * np.pi) ** 2)


# -- scintillation-regime moment laws -----------------------------------------


def _spectral_sum(values: np.ndarray, grid: TransverseGrid, point: np.ndarray) -> complex:
    """(2 pi)^-d sum of values(k) exp(i k . point) dk^d over the k lattice."""
    kc = grid.kcoords()
    phase = kc[0] * point[0]
    for axis in range(1, grid.dim):
        phase = phase + kc[axis] * point[axis]
    return complex(np.sum(values * np.exp(1j * phase)) * (grid.dk / (2.0 * np.pi)) ** grid.dim)


def _line_averaged_kernel(medium, k0: float, thickness: float, grid: TransverseGrid) -> np.ndarray:
    """Spectral damping exp(-(k0^2 L/4) * line-averaged structure function)."""
    kmag = np.sqrt(grid.ksq())
    return np.exp(-(k0**2) * thickness / 4.0 * medium.structure_line_avg(kmag * thickness / k0))


def _as_point(grid: TransverseGrid, value, name: str) -> np.ndarray:
    out = np.atleast_1d(np.asarray(value, dtype=float))
    if out.shape != (grid.dim,):
        raise ValueError(f"{name} needs {grid.dim} components, got shape {out.shape}")
    return out


def mean_intensity_profile(mask: ComplexField, source_shift, *, medium, k0: float, thickness: float) -> np.ndarray:
    """Ensemble-mean transmitted intensity on the mask grid (scintillation law)."""
    inc = make_incident(mask, source_shift)
    spec = forward_transform(ComplexField(mask.grid, inc.intensity()))
    kern = _line_averaged_kernel(medium, k0, thickness, mask.grid)
    out = inverse_transform(ComplexField(mask.grid, spec.values * kern, kind="spectrum"))
    return out.values.real


def mean_intensity_scintillation(
    mask: ComplexField, source_shift, obs_point, *, medium, k0: float, thickness: float
) -> float:
    """Ensemble-mean transmitted intensity at one (possibly off-grid) point."""
    grid = mask.grid
    point = _as_point(grid, obs_point, "obs_point")
    inc = make_incident(mask, source_shift)
    spec = forward_transform(ComplexField(grid, inc.intensity()))
    kern = _line_averaged_kernel(medium, k0, thickness, grid)
    return _spectral_sum(spec.values * kern, grid, point).real


def covariance_scintillation(
    mask: ComplexField,
    shift_a,
    shift_b,
    obs_mid,
    obs_offset,
    *,
    medium,
    k0: float,
    thickness: float,
    form: str = "general",
) -> float:
    """Covariance of transmitted intensities for two source shifts.

    The two intensities are observed at obs_mid +/- obs_offset/2.  The
    "general" form evaluates the full spectral law; "strong" uses the
    strong-scattering Gaussian-envelope reduction (nonnegative by
    construction).  shift_b - shift_a must be grid-aligned.
    """
    if form not in ("general", "strong"):
        raise ValueError(f"form must be 'general' or 'strong', got {form!r}")
    grid = mask.grid
    a = _as_point(grid, shift_a, "shift_a")
    b = _as_point(grid, shift_b, "shift_b")
    mid = _as_point(grid, obs_mid, "obs_mid")
    off = _as_point(grid, obs_offset, "obs_offset")
    delta = b - a
    # product at half the lag, via U(X + d/2) conj(U(X - d/2)) = G(X + d/2)
    # with G(X) = U(X) conj(U(X - d)); only the integer lag d touches the grid
    prod = mask.values * np.conj(shifted(mask, tuple(delta)).values)
    center = mid - (a + b) / 2.0

    if form == "general":
        spec = forward_transform(ComplexField(grid, prod))
        point = center + delta / 2.0
        kvecs = np.stack(grid.kcoords(), axis=-1)
        ray = _ray_integral(medium, kvecs / k0, -off, thickness)
        kern = np.exp(k0**2 / 4.0 * (ray - medium.cov0 * thickness))
        bright = _spectral_sum(spec.values * kern, grid, point)
        dark = _spectral_sum(spec.values, grid, point) * math.exp(
            -(k0**2) * medium.cov0 * thickness / 4.0
        )
        return abs(bright) ** 2 - abs(dark) ** 2

    curv = medium.structure_curvature
    spread_sq = curv * thickness**3  # 6 * (beam spread)^2
    coords = grid.coords()
    wsq = 0.0
    ydotw = 0.0
    for axis in range(grid.dim):
        w = coords[axis] - (delta[axis] / 2.0 + center[axis])
        wsq = wsq + w**2
        ydotw = ydotw + off[axis] * w
    envelope = np.exp(-6.0 * wsq / spread_sq - 1j * (3.0 * k0 / (2.0 * thickness)) * ydotw)
    integral = np.sum(prod * envelope) * grid.cell()
    pref = (6.0 / (np.pi * spread_sq)) ** grid.dim
    decorr = math.exp(-curv * k0**2 * thickness * float(off @ off) / 16.0)
    return float(pref * abs(integral) ** 2 * decorr)


# -- self-averaged covariance map ----------------------------------------------


def mask_autocorrelation(mask: ComplexField, lag) -> complex:
    """integral of U(X) conj(U(X - lag)) dX for a grid-aligned lag."""
    prod = mask.values * np.conj(shifted(mask, lag).values)
    return complex(np.sum(prod) * mask.grid.cell())


def _pixel_factor(pixel_radius: float, rho: float, dim: int) -> float:
    if pixel_radius < 0:
        raise ValueError(f"pixel_radius must be >= 0, got {pixel_radius}")
    return (1.0 + (pixel_radius / rho) ** 2) ** (-dim / 2.0)


def predicted_covariance_map(
    mask: ComplexField, delta_r, *, pixel_radius: float, medium, k0: float, thickness: float
) -> float:
    """Self-averaged intensity covariance at source-shift separation delta_r.

    Valid when the beam-spread radius dominates every transverse scale in
    play; the value is |mask autocorrelation|^2 times a contrast factor set
    by the pixel-to-speckle size ratio.
    """
    curv = medium.structure_curvature
    rho = speckle_radius(curv, k0, thickness)
    scale = (6.0 / (np.pi * curv * thickness**3)) ** mask.grid.dim
    scale *= _pixel_factor(pixel_radius, rho, mask.grid.dim)
    return scale * abs(mask_autocorrelation(mask, delta_r)) ** 2


def blur_radius(pixel_radius: float, *, medium, k0: float, thickness: float) -> float:
    """Gaussian blur radius of the covariance map outside the flat-map regime."""
    curv = medium.structure_curvature
    rho = speckle_radius(curv, k0, thickness)
    x = (pixel_radius / rho) ** 2
    return math.sqrt(curv * thickness**3 / 6.0 * (1.0 + x) / (1.0 + 4.0 * x))


def blurred_covariance(
    mask: ComplexField, delta_r, *, pixel_radius: float, medium, k0: float, thickness: float
) -> float:
    """Observation-midpoint-integrated covariance for a wide mask.

    Double mask integral against a Gaussian of radius blur_radius; reduces
    to predicted_covariance_map's shape when the mask fits under the blur.
    """
    grid = mask.grid
    curv = medium.structure_curvature
    rho = speckle_radius(curv, k0, thickness)
    x = (pixel_radius / rho) ** 2
    prod = mask.values * np.conj(shifted(mask, delta_r).values)
    spec = forward_transform(ComplexField(grid, prod))
    rl_sq = blur_radius(pixel_radius, medium=medium, k0=k0, thickness=thickness) ** 2
    gauss = (2.0 * np.pi * rl_sq) ** (grid.dim / 2.0) * np.exp(-rl_sq * grid.ksq() / 2.0)
    quad_form = np.sum(np.abs(spec.values) ** 2 * gauss) * (grid.dk / (2.0 * np.pi)) ** grid.dim
    pref = (3.0 / (np.pi * curv * thickness**3 * (1.0 + x))) ** (grid.dim / 2.0)
    return float(pref * quad_form)


# -- spot-dancing limit ---------------------------------------------------------


@dataclass(frozen=True)
class SpotDancingPrediction:
    """Transmitted-field statistics when the medium wanders the whole spot.

    field is the homogeneous-medium transmitted field; the random centroid
    is Gaussian with per-axis variance centroid_variance at the back face
    and covariance centroid_covariance(z, zp) inside the slab.  phase_scale
    is the coupling of the centroid wander to the carried phase; it never
    touches intensities and is reported for completeness only.
    """

    field: ComplexField
    curvature: float
    thickness: float
    k0: float
    aperture_radius: float | None = None

    @property
    def centroid_variance(self) -> float:
        return self.curvature * self.thickness**3 / 12.0

    @property
    def phase_scale(self) -> float:
        return self.k0 * math.sqrt(self.curvature) / 2.0

    def centroid_covariance(self, z: float, zp: float) -> float:
        if z < 0 or zp < 0:
            raise ValueError("depths must be >= 0")
        return self.curvature * min(z, zp) ** 3 / 12.0

    def _window(self) -> np.ndarray:
        grid = self.field.grid
        if self.aperture_radius is None:
            return np.ones(grid.shape)
        rsq = 0.0
        for c in grid.coords():
            rsq = rsq + c**2
        return (rsq <= self.aperture_radius**2).astype(float)

    def covariance_at(self, lag) -> float:
        """Aperture-averaged intensity covariance at source-shift lag."""
        grid = self.field.grid
        offs = np.atleast_1d(np.asarray(lag, dtype=float))
        cells = np.rint(offs / grid.dx).astype(int)
        if np.any(np.abs(offs / grid.dx - cells) > 1e-9):
            raise ValueError(f"lag {lag} is not an integer multiple of dx={grid.dx}")
        inten = self.field.intensity()
        rolled = np.roll(inten, tuple(cells), axis=tuple(range(grid.dim)))
        w = self._window()
        norm = w.sum()
        m1 = float((w * inten).sum() / norm)
        m2 = float((w * rolled).sum() / norm)
        return float((w * inten * rolled).sum() / norm - m1 * m2)


def spot_dancing_predictions(
    mask: ComplexField, *, k0: float, thickness: float, curvature: float, aperture_radius: float | None = None
) -> SpotDancingPrediction:
    """Package the spot-dancing-regime predictions for a mask and slab."""
    if curvature <= 0:
        raise ValueError(f"curvature must be positive, got {curvature}")
    field = free_space_propagate(mask, k0=k0, distance=thickness)
    return SpotDancingPrediction(
        field=field,
        curvature=curvature,
        thickness=thickness,
        k0=k0,
        aperture_radius=aperture_radius,
    )


# -- regime classification -------------------------------------------------------


@dataclass(frozen=True)
class RegimeReport:
    """Length scales, dimensionless ratios, and a coarse regime label."""

    ell_sca: float
    rho_speckle: float
    beam_spread: float
    thickness_to_mean_free_path: float
    mask_to_corr_length: float
    camera_to_speckle: float
    mask_to_spread: float
    camera_to_spread: float
    shift_to_spread: float
    self_averaging: bool
    classification: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def classify_regime(
    *,
    medium,
    k0: float,
    thickness: float,
    mask_radius: float,
    camera_radius: float,
    pixel_radius: float = 0.0,
    max_shift: float = 0.0,
) -> RegimeReport:
    """Classify an experiment into the regime the moment laws assume.

    Thresholds: spot-dancing below mask/correlation ratio 1/3, scintillation
    above 3, strong scattering from 10 mean free paths, and self-averaging
    once the camera exceeds 10x the smoothed speckle size.  The cutoffs are
    reporting conventions, not sharp physical boundaries.
    """
    if mask_radius <= 0 or camera_radius <= 0:
        raise ValueError("mask_radius and camera_radius must be positive")
    if pixel_radius < 0 or max_shift < 0:
        raise ValueError("pixel_radius and max_shift must be >= 0")
    lsca = scattering_mean_free_path(medium.cov0, k0)
    curv = medium.structure_curvature
    rho = speckle_radius(curv, k0, thickness)
    spread = beam_spread(curv, thickness)
    depth_ratio = thickness / lsca
    mask_ratio = mask_radius / medium.corr_length
    if mask_ratio < 1.0 / 3.0:
        label = "spot-dancing"
    elif mask_ratio > 3.0:
        label = "scintillation-strong" if depth_ratio >= 10.0 else "scintillation-weak"
    else:
        label = "intermediate"
    return RegimeReport(
        ell_sca=lsca,
        rho_speckle=rho,
        beam_spread=spread,
        thickness_to_mean_free_path=depth_ratio,
        mask_to_corr_length=mask_ratio,
        camera_to_speckle=camera_radius / rho,
        mask_to_spread=mask_radius / spread,
        camera_to_spread=camera_radius / spread,
        shift_to_spread=max_shift / spread,
        self_averaging=bool(camera_radius >= 10.0 * math.hypot(pixel_radius, rho)),
        classification=label,
    )
