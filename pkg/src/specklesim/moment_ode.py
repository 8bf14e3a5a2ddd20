"""Spectral transport solver for the intensity second moment.

Independent cross-check for the split-step simulator: instead of averaging
over medium realizations, the deterministic transport equation for the
Fourier transform of the fourth field moment is integrated directly and
``E[I(a) I(b)]`` is read off by quadrature.

Layout conventions:

* one transverse dimension only; the rank-4 value array lives on a centered
  lattice with ``m`` points per axis, coordinate ``(i - m//2) * step``;
* axes 0-1 are conjugate to the intra-pair separations of the four field
  points; axes 2-3 are conjugate to the sum and difference of the two
  observation points (the reconstruction phases act on axes 2-3 only);
* ``MomentLattice.values`` always stores the physical moment spectrum.
  ``evolve`` removes the stiff transport phase internally (interaction
  picture), advances the bounded coupling by classic RK4, and restores the
  phase, so a transparent medium is propagated exactly for any step count;
* the coupling's wavenumber integral is discretized as a weighted sum over
  lattice shifts with periodic wrap.  Phase factors use the wrapped node
  coordinates, which keeps the discrete conservation law of the
  zero-frequency slice exact;
* the compiled backend parallelizes the coupling sweep across lattice rows;
  integration in depth is sequential.  See ``_moment_kernels``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import integrate

from . import _moment_kernels
from .grid import ComplexField

__all__ = [
    "MomentLattice",
    "SpectralMeasure",
    "ReconstructionError",
    "init_lattice",
    "sampled_measure",
    "diffusion_measure",
    "evolve",
    "reconstruct_second_moment",
    "spot_dancing_kernel",
    "spot_dancing_moment_solution",
    "save_lattice",
    "load_lattice",
]

_MAX_NODES = 2**20


class ReconstructionError(ArithmeticError):
    """Imaginary residue of a lattice reconstruction exceeded its tolerance."""


def _lattice_axis(m: int, step: float) -> np.ndarray:
    return (np.arange(m) - m // 2) * step


@dataclass
class MomentLattice:
    """Fourth-moment spectrum sampled on a rank-4 centered lattice.

    ``sep_step`` is the spacing of the separation-frequency axes (0-1),
    ``probe_step`` that of the observation-frequency axes (2-3).  ``shift``
    is the transverse offset between the two incident fields whose
    intensities are being correlated; ``depth`` is the propagation distance
    the values correspond to.
    """

    m: int
    sep_step: float
    probe_step: float
    shift: float
    depth: float
    values: np.ndarray

    def __post_init__(self) -> None:
        if not isinstance(self.m, (int, np.integer)) or not (8 <= int(self.m) <= 32):
            raise ValueError(f"m must be an integer in [8, 32], got {self.m}")
        self.m = int(self.m)
        if self.m**4 > _MAX_NODES:
            raise ValueError(f"lattice of {self.m**4} nodes exceeds the {_MAX_NODES} cap")
        for name in ("sep_step", "probe_step"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v}")
        v = np.ascontiguousarray(self.values, dtype=np.complex128)
        if v.shape != (self.m,) * 4:
            raise ValueError(f"values shape {v.shape} != {(self.m,) * 4}")
        self.values = v
        self.shift = float(self.shift)
        self.depth = float(self.depth)

    @property
    def sep_axis(self) -> np.ndarray:
        return _lattice_axis(self.m, self.sep_step)

    @property
    def probe_axis(self) -> np.ndarray:
        return _lattice_axis(self.m, self.probe_step)

    def copy(self) -> "MomentLattice":
        return MomentLattice(
            self.m, self.sep_step, self.probe_step, self.shift, self.depth, self.values.copy()
        )


class SpectralMeasure(NamedTuple):
    """Discrete stand-in for the medium-spectrum weight of the coupling integral."""

    wavenumbers: np.ndarray
    weights: np.ndarray


def _transform_at(mask: ComplexField, wavenumbers: np.ndarray) -> np.ndarray:
    # continuous-convention transform evaluated off the dual lattice
    x = mask.grid.axis
    return (np.exp(-1j * np.outer(wavenumbers, x)) @ mask.values) * mask.grid.dx


def _as_shift(shift) -> float:
    arr = np.atleast_1d(np.asarray(shift, dtype=float))
    if arr.shape != (1,):
        raise ValueError(f"shift must be a scalar for a 1-d lattice, got shape {arr.shape}")
    return float(arr[0])


def init_lattice(mask: ComplexField, shift, *, m: int, step: float) -> MomentLattice:
    """Fill a lattice with the zero-depth moment spectrum of two shifted beams.

    One incident field is the mask itself, the other the mask translated by
    ``shift`` (any real offset; no grid alignment is required because the
    mask spectrum is evaluated directly).  Each node value is the four-fold
    product of mask-spectrum samples at half-sum arguments times the shift
    phase on the observation-difference axis.
    """
    if mask.grid.dim != 1:
        raise ValueError(f"moment lattices are 1-d only, got mask dim {mask.grid.dim}")
    if mask.kind != "field":
        raise ValueError("init_lattice expects a spatial mask, not a spectrum")
    offset = _as_shift(shift)

    # all four spectrum arguments are half-integer combinations of lattice
    # coordinates, so one table on the half-step lattice covers them
    table = _transform_at(mask, np.arange(-2 * m, 2 * m + 1) * (step / 2.0))
    tconj = np.conj(table)

    r1 = (np.arange(m) - m // 2).reshape(m, 1, 1, 1)
    r2 = r1.reshape(1, m, 1, 1)
    r3 = r1.reshape(1, 1, m, 1)
    r4 = r1.reshape(1, 1, 1, m)
    base = 2 * m
    values = (
        table[base + r1 + r2 + r3 + r4]
        * tconj[base + r1 + r2 - r3 - r4]
        * table[base + r1 - r2 + r3 - r4]
        * tconj[base + r1 - r2 - r3 + r4]
    )
    zaxis = _lattice_axis(m, step)
    values = values * np.exp(1j * offset * (zaxis[None, None, None, :] - zaxis[None, None, :, None]))
    return MomentLattice(m, step, step, offset, 0.0, values)


def sampled_measure(medium, *, m: int, step: float) -> SpectralMeasure:
    """Medium spectrum sampled on the lattice shifts, symmetrically truncated.

    Keeping only paired shifts (no lone edge node) preserves the parity of
    the coupling.  Raises if the spectrum mass beyond the covered band
    exceeds 1e-6 of the total, since the wrap would then alias real
    scattering weight.
    """
    if medium.dim != 1:
        raise ValueError(f"moment lattices are 1-d only, got medium dim {medium.dim}")
    half = (m - 1) // 2
    k = np.arange(-half, half + 1) * step
    weights = np.asarray(medium.spectrum_at(np.abs(k)), dtype=float) * step

    total = 2.0 * np.pi * medium.cov0
    band = (half + 0.5) * step
    inside, _ = integrate.quad(lambda q: float(medium.spectrum_at(q)), 0.0, band, limit=200)
    outside = max(0.0, 1.0 - 2.0 * inside / total)
    if outside > 1e-6:
        raise ValueError(
            f"medium spectrum leaves {outside:.2e} of its mass beyond the lattice "
            f"band |k| <= {band:.4g}; widen the lattice or the spacing"
        )
    return SpectralMeasure(k, weights)


def diffusion_measure(*, cov0: float, curvature: float, step: float) -> SpectralMeasure:
    """Three-node measure matching the total mass and curvature of a spectrum.

    This is the coupling a quadratic covariance profile induces: to second
    order in the shift it reproduces pure diffusion of the leading
    separation-frequency axis at rate ``k0^2 * curvature / 2``.
    """
    if cov0 <= 0 or curvature <= 0 or step <= 0:
        raise ValueError("cov0, curvature and step must all be positive")
    w1 = np.pi * curvature / step**2
    w0 = 2.0 * np.pi * cov0 - 2.0 * w1
    if w0 < 0:
        raise ValueError(
            f"step {step:.4g} is too fine to carry the total mass; "
            f"need step >= {math.sqrt(curvature / cov0):.4g}"
        )
    return SpectralMeasure(np.array([-step, 0.0, step]), np.array([w1, w0, w1]))


def _phase_factors(axis: np.ndarray, s: int, theta: float):
    """Per-term transport-phase matrices for one wrapped lattice shift.

    Each coupling term multiplies the translated value by the phase
    difference between the target node and the wrapped node it pulls from;
    the difference always factors into one matrix over axes (0, 2) and one
    over axes (1, 3).
    """
    m = axis.size
    idx = np.arange(m)
    pull_minus = axis[(idx - s) % m]
    pull_plus = axis[(idx + s) % m]
    dminus = axis - pull_minus
    dplus = axis - pull_plus
    m1 = np.exp(1j * theta * np.outer(dminus, axis))
    m3 = np.exp(1j * theta * np.outer(dplus, axis))
    b2 = np.exp(1j * theta * np.outer(axis, dminus))
    c6 = np.exp(1j * theta * (np.outer(axis, axis) - np.outer(pull_minus, pull_minus)))
    c7 = np.exp(1j * theta * (np.outer(axis, axis) - np.outer(pull_plus, pull_minus)))
    return m1, m3, b2, c6, c7


def _coupling_rhs(nu, z, axis, shifts, weights, k0):
    out = np.zeros_like(nu)
    theta = z / k0
    for s, w in zip(shifts, weights):
        m1, m3, b2, c6, c7 = _phase_factors(axis, int(s), theta)
        _moment_kernels.apply_coupling(nu, out, int(s), m1, m3, b2, c6, c7, float(w))
    out *= k0 * k0 / (8.0 * np.pi)
    return out


def evolve(
    lat: MomentLattice,
    medium,
    k0: float,
    thickness: float,
    nz: int,
    *,
    measure: SpectralMeasure | None = None,
) -> MomentLattice:
    """Advance a moment lattice through a scattering slab.

    ``measure`` overrides the default spectrum sampling (``medium`` is then
    ignored and may be None).  Returns a new lattice at increased depth.
    """
    if not (np.isfinite(k0) and k0 > 0):
        raise ValueError(f"k0 must be finite and positive, got {k0}")
    if not (np.isfinite(thickness) and thickness > 0):
        raise ValueError(f"thickness must be finite and positive, got {thickness}")
    if not isinstance(nz, (int, np.integer)) or nz < 1:
        raise ValueError(f"nz must be a positive integer, got {nz}")
    if lat.sep_step != lat.probe_step:
        raise ValueError("coupling shifts must land on both lattices; steps must match")
    if measure is None:
        measure = sampled_measure(medium, m=lat.m, step=lat.probe_step)

    k = np.asarray(measure.wavenumbers, dtype=float)
    weights = np.asarray(measure.weights, dtype=float)
    if k.shape != weights.shape or k.ndim != 1:
        raise ValueError("measure wavenumbers and weights must be matching 1-d arrays")
    shifts_f = k / lat.probe_step
    shifts = np.rint(shifts_f).astype(int)
    if np.max(np.abs(shifts_f - shifts), initial=0.0) > 1e-9:
        raise ValueError("measure wavenumbers must be integer multiples of the lattice step")
    if np.max(np.abs(shifts), initial=0) > lat.m // 2:
        raise ValueError("measure wavenumbers reach beyond the lattice band")

    # crude RK4 stability bound: the coupling norm is at most
    # k0^2/(8 pi) * 8 * sum|w|, and |lambda| dz must stay below ~2.8
    rate = k0 * k0 * float(np.sum(np.abs(weights))) / np.pi
    dz = thickness / int(nz)
    if dz * rate > 2.5:
        raise ValueError(
            f"nz={nz} is too coarse for this coupling strength; "
            f"need at least {math.ceil(thickness * rate / 2.5)} steps"
        )

    axis = lat.probe_axis
    phi = (
        axis[:, None, None, None] * axis[None, None, :, None]
        + axis[None, :, None, None] * axis[None, None, None, :]
    )
    z0 = lat.depth
    nu = lat.values * np.exp(1j * (z0 / k0) * phi)
    z = z0
    for _ in range(int(nz)):
        k1 = _coupling_rhs(nu, z, axis, shifts, weights, k0)
        k2 = _coupling_rhs(nu + (0.5 * dz) * k1, z + 0.5 * dz, axis, shifts, weights, k0)
        k3 = _coupling_rhs(nu + (0.5 * dz) * k2, z + 0.5 * dz, axis, shifts, weights, k0)
        k4 = _coupling_rhs(nu + dz * k3, z + dz, axis, shifts, weights, k0)
        nu = nu + (dz / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        z += dz
    z1 = z0 + thickness
    values = nu * np.exp(-1j * (z1 / k0) * phi)
    return MomentLattice(lat.m, lat.sep_step, lat.probe_step, lat.shift, z1, values)


def reconstruct_second_moment(
    lat: MomentLattice, probe_a: float, probe_b: float, *, residue_tol: float = 1e-8
) -> float:
    """Mean product of the two beam intensities at a pair of camera points.

    Sums the lattice against the reconstruction phases on the observation
    axes.  The result of a well-resolved lattice is real; the imaginary
    residue is checked against ``residue_tol`` (relative to the summed
    magnitude) and a violation raises ReconstructionError.
    """
    a = float(probe_a)
    b = float(probe_b)
    # separation axes carry no probe phase; contract them first
    inner = lat.values.sum(axis=(0, 1)) * lat.sep_step**2
    zaxis = lat.probe_axis
    e1 = np.exp(1j * zaxis * (a + b))
    e2 = np.exp(1j * zaxis * (a - b))
    norm = lat.probe_step**2 / (2.0 * np.pi) ** 4
    value = (e1 @ inner @ e2) * norm
    scale = float(np.sum(np.abs(inner))) * norm
    residue = abs(value.imag) / max(scale, np.finfo(float).tiny)
    if residue > residue_tol:
        raise ReconstructionError(
            f"imaginary residue {residue:.3e} exceeds {residue_tol:.1e}; "
            "the lattice is too coarse or too narrow for this configuration"
        )
    return float(value.real)


def spot_dancing_kernel(freq_offset, probe_freq: float, depth: float, *, k0: float, curvature: float):
    """Heat-kernel-with-drift propagator of the strong-deflection limit.

    Gaussian of variance ``k0^2 * curvature * depth`` in the frequency
    offset, damped in the probe frequency at rate ``curvature * depth^3 / 24``
    and carrying the mixed drift phase.  At zero probe frequency it is a
    plain heat kernel.
    """
    if depth <= 0 or curvature <= 0 or k0 <= 0:
        raise ValueError("depth, curvature and k0 must all be positive")
    var = k0 * k0 * curvature * depth
    xi = np.asarray(freq_offset, dtype=float)
    out = np.exp(
        -(xi**2) / (2.0 * var)
        - 0.5j * (depth / k0) * xi * probe_freq
        - curvature * depth**3 * probe_freq**2 / 24.0
    ) / np.sqrt(2.0 * np.pi * var)
    return out if out.ndim else complex(out)


def spot_dancing_moment_solution(
    mask: ComplexField,
    shift,
    *,
    m: int,
    step: float,
    k0: float,
    curvature: float,
    depth: float,
    refine: int = 8,
    reach: float = 6.0,
) -> MomentLattice:
    """Closed-form moment lattice in the strong-deflection limit.

    Convolves the phase-advanced zero-depth spectrum with
    ``spot_dancing_kernel`` along the leading separation-frequency axis, by
    direct quadrature on a lattice refined by ``refine`` and extended by
    ``reach`` kernel widths.  Serves as the oracle for ``evolve`` with a
    ``diffusion_measure``.
    """
    if depth < 0:
        raise ValueError(f"depth must be nonnegative, got {depth}")
    if depth == 0:
        return init_lattice(mask, shift, m=m, step=step)
    if not isinstance(refine, (int, np.integer)) or refine < 2:
        raise ValueError(f"refine must be an integer >= 2, got {refine}")
    if mask.grid.dim != 1:
        raise ValueError(f"moment lattices are 1-d only, got mask dim {mask.grid.dim}")
    offset = _as_shift(shift)

    sigma = k0 * math.sqrt(curvature * depth)
    fine = step / refine
    if sigma < 3.0 * fine:
        raise ValueError(
            f"kernel width {sigma:.3g} is unresolved at refinement {refine}; increase refine"
        )
    pad = math.ceil(reach * sigma / fine)
    half = m // 2
    iq = np.arange(-half * refine - pad, (m - 1 - half) * refine + pad + 1)
    xiq = iq * fine

    # one mask-spectrum table on the half-fine lattice covers every argument
    pmin = iq[0] - 3 * refine * half
    pmax = iq[-1] + 3 * refine * half
    table = _transform_at(mask, np.arange(pmin, pmax + 1) * (fine / 2.0))
    tconj = np.conj(table)

    axis = _lattice_axis(m, step)
    ridx = np.arange(m) - half
    rb = (refine * ridx).reshape(1, m, 1)
    rd = (refine * ridx).reshape(1, 1, m)
    fq = iq.reshape(-1, 1, 1)

    adv_sep = np.exp(-1j * (depth / k0) * axis[None, :, None] * axis[None, None, :])
    adv_sep = adv_sep * np.exp(1j * offset * (axis[None, None, :] - 0.0))
    values = np.empty((m, m, m, m), dtype=np.complex128)
    for j1 in range(m):
        z1 = axis[j1]
        rj1 = refine * ridx[j1]
        blk = (
            table[fq + rb + rj1 + rd - pmin]
            * tconj[fq + rb - rj1 - rd - pmin]
            * table[fq - rb + rj1 - rd - pmin]
            * tconj[fq - rb - rj1 + rd - pmin]
        )
        blk = blk * (np.exp(-1j * (depth / k0) * z1 * xiq).reshape(-1, 1, 1) * adv_sep)
        blk = blk * np.exp(-1j * offset * z1)
        psi = spot_dancing_kernel(
            axis[:, None] - xiq[None, :], z1, depth, k0=k0, curvature=curvature
        ) * fine
        values[:, :, j1, :] = (psi @ blk.reshape(iq.size, m * m)).reshape(m, m, m)
    return MomentLattice(m, step, step, offset, float(depth), values)


def save_lattice(lat: MomentLattice, path: str | Path) -> None:
    """Dump a lattice in the field-dump framing with a 4-axis header."""
    path = Path(path)
    header = {
        "axes": 4,
        "m": lat.m,
        "sep_step": lat.sep_step,
        "probe_step": lat.probe_step,
        "shift": lat.shift,
        "depth": lat.depth,
    }
    flat = lat.values.ravel(order="C")
    raw = np.empty(2 * flat.size, dtype="<f8")
    raw[0::2] = flat.real
    raw[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("ascii") + b"\n")
        fh.write(raw.tobytes())


def load_lattice(path: str | Path) -> MomentLattice:
    path = Path(path)
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("ascii"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: malformed dump header") from exc
        for key in ("axes", "m", "sep_step", "probe_step", "shift", "depth"):
            if key not in header:
                raise ValueError(f"{path}: dump header missing '{key}'")
        if header["axes"] != 4:
            raise ValueError(f"{path}: expected a 4-axis dump, got {header['axes']}")
        m = int(header["m"])
        count = 2 * m**4
        data = fh.read()
        if len(data) != 8 * count:
            raise ValueError(
                f"{path}: truncated or oversized dump ({len(data)} bytes, want {8 * count})"
            )
        raw = np.frombuffer(data, dtype="<f8")
    values = (raw[0::2] + 1j * raw[1::2]).reshape((m,) * 4)
    return MomentLattice(
        m, float(header["sep_step"]), float(header["probe_step"]),
        float(header["shift"]), float(header["depth"]), values,
    )
