"""Split-step spectral solver for paraxial propagation through random media.

One z-step of thickness h applies, in the Strang arrangement,

    half diffraction -> phase screen -> half diffraction,

where diffraction multiplies the spectrum by exp(-i |k|^2 t / (2 k0)) and the
screen multiplies the field by exp(i (k0/2) dB(x)) with dB a Brownian
increment of covariance h * cov_at (see medium.IncrementSynthesizer).  Both
multipliers are unimodular, so every step is exactly unitary, and the
symmetric screen placement realizes the Stratonovich product of the
white-noise model without any drift correction.  Consecutive half steps are
fused, so a full run costs two FFTs per step and per stacked field.

The carrier phase exp(i k0 z) is dropped throughout; only intensities and
relative coherences are ever observed.

Screens come from a callable ``step -> array``; `BrownianScreens` is the
production implementation (counter-keyed, reproducible under any scheduling),
and `split_screens` refines a given sequence to a finer step by equal
division, which keeps the same driving path and is what the convergence-order
tests exercise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft
from numpy.fft import ifftshift

from .grid import ComplexField, TransverseGrid, energy, shifted
from .medium import IncrementSynthesizer
from .rng import PURPOSE_MEDIUM, stream

__all__ = [
    "ParaxialSanityWarning",
    "PropagationPlan",
    "BrownianScreens",
    "split_screens",
    "make_incident",
    "free_space_propagate",
    "propagate",
    "propagate_stack",
]

_WORKERS = -1  # scipy.fft thread budget for stacked transforms


class ParaxialSanityWarning(UserWarning):
    """Grid Nyquist wavevector is large relative to the carrier wavenumber."""


@dataclass(frozen=True)
class PropagationPlan:
    """Discretization of one propagation problem: carrier, distance, steps."""

    k0: float
    thickness: float
    nz: int
    splitting: str = "strang"
    medium: object | None = None

    def __post_init__(self) -> None:
        if not (np.isfinite(self.k0) and self.k0 > 0):
            raise ValueError(f"k0 must be finite and positive, got {self.k0}")
        if not (np.isfinite(self.thickness) and self.thickness > 0):
            raise ValueError(f"thickness must be finite and positive, got {self.thickness}")
        if not isinstance(self.nz, (int, np.integer)) or self.nz < 1:
            raise ValueError(f"nz must be a positive integer, got {self.nz}")
        if self.splitting not in ("strang", "lie"):
            raise ValueError(f"splitting must be 'strang' or 'lie', got {self.splitting!r}")
        object.__setattr__(self, "nz", int(self.nz))
        if self.medium is not None:
            lc = self.medium.corr_length
            bound = lc * min(1.0, self.k0 * lc) / 4.0
            if self.dz > bound * (1 + 1e-12):
                raise ValueError(
                    f"dz = {self.dz:g} exceeds the step bound {bound:g} "
                    f"(need nz >= {int(np.ceil(self.thickness / bound))})"
                )

    @property
    def dz(self) -> float:
        return self.thickness / self.nz


class BrownianScreens:
    """Screen increments of one medium realization, keyed (seed, realization, step)."""

    def __init__(
        self,
        plan: PropagationPlan,
        grid: TransverseGrid,
        master_seed: int,
        realization: int,
    ) -> None:
        if plan.medium is None:
            raise ValueError("plan has no medium; screens are undefined")
        self.nz = plan.nz
        self.master_seed = int(master_seed)
        self.realization = int(realization)
        self._synth = IncrementSynthesizer(plan.medium, grid, plan.dz)

    def __call__(self, step: int) -> np.ndarray:
        if not 0 <= step < self.nz:
            raise IndexError(f"step {step} outside [0, {self.nz})")
        rng = stream(self.master_seed, PURPOSE_MEDIUM, self.realization, step)
        return self._synth.draw(rng)


def split_screens(screens: Callable[[int], np.ndarray], factor: int):
    """Same driving path on a factor-times-finer step lattice (equal division)."""
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor}")

    def fine(step: int) -> np.ndarray:
        return screens(step // factor) / factor

    return fine


def make_incident(mask: ComplexField, r) -> ComplexField:
    """Incident field behind a transmission mask displaced by r (grid-aligned)."""
    return shifted(mask, r)


def free_space_propagate(f: ComplexField, k0: float, distance: float) -> ComplexField:
    """Exact homogeneous propagation over the given distance (spectral phase)."""
    if f.kind != "field":
        raise ValueError("free_space_propagate expects a spatial field")
    if not (np.isfinite(k0) and k0 > 0):
        raise ValueError(f"k0 must be finite and positive, got {k0}")
    if not (np.isfinite(distance) and distance >= 0):
        raise ValueError(f"distance must be non-negative, got {distance}")
    if distance == 0:
        return f.copy()
    phase = np.exp(-0.5j * f.grid.ksq() * distance / k0)
    spec = np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(f.values)))
    out = np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(phase * spec)))
    return ComplexField(f.grid, out, kind="field")


def _check_paraxial(grid: TransverseGrid, k0: float) -> None:
    nyquist = np.pi / grid.dx
    if nyquist > 0.5 * k0:
        warnings.warn(
            f"grid Nyquist wavevector {nyquist:g} exceeds 0.5*k0 = {0.5 * k0:g}; "
            "sub-wavelength grid content is unphysical in this model",
            ParaxialSanityWarning,
            stacklevel=3,
        )


def _run_split_step(
    values: np.ndarray,
    grid: TransverseGrid,
    plan: PropagationPlan,
    screens: Callable[[int], np.ndarray],
) -> np.ndarray:
    axes = tuple(range(values.ndim - grid.dim, values.ndim))
    ksq = ifftshift(grid.ksq())
    full = np.exp(-0.5j * plan.dz * ksq / plan.k0)
    spec = sfft.fftn(values, axes=axes, workers=_WORKERS)
    if plan.splitting == "strang":
        half = np.exp(-0.25j * plan.dz * ksq / plan.k0)
        spec *= half
        for j in range(plan.nz):
            vals = sfft.ifftn(spec, axes=axes, workers=_WORKERS, overwrite_x=True)
            vals *= np.exp(0.5j * plan.k0 * screens(j))
            spec = sfft.fftn(vals, axes=axes, workers=_WORKERS, overwrite_x=True)
            spec *= full if j < plan.nz - 1 else half
        return sfft.ifftn(spec, axes=axes, workers=_WORKERS, overwrite_x=True)
    for j in range(plan.nz):
        spec *= full
        vals = sfft.ifftn(spec, axes=axes, workers=_WORKERS, overwrite_x=True)
        vals *= np.exp(0.5j * plan.k0 * screens(j))
        if j < plan.nz - 1:
            spec = sfft.fftn(vals, axes=axes, workers=_WORKERS, overwrite_x=True)
    return vals


def _guard_unitarity(before: float, after: float) -> None:
    if abs(after - before) > 1e-9 * before:
        raise FloatingPointError(
            f"propagation lost unitarity: energy {before:g} -> {after:g}"
        )


def propagate(
    f: ComplexField,
    plan: PropagationPlan,
    screens: Callable[[int], np.ndarray] | None = None,
) -> ComplexField:
    """One realization of the transmitted field after the plan's full thickness."""
    if f.kind != "field":
        raise ValueError("propagate expects a spatial field")
    _check_paraxial(f.grid, plan.k0)
    if plan.medium is None:
        return free_space_propagate(f, plan.k0, plan.thickness)
    if screens is None:
        raise ValueError("plan has a medium; pass a screens source (e.g. BrownianScreens)")
    out = _run_split_step(f.values.copy(), f.grid, plan, screens)
    result = ComplexField(f.grid, out, kind="field")
    _guard_unitarity(energy(f), energy(result))
    return result


def propagate_stack(
    fields: Sequence[ComplexField],
    plan: PropagationPlan,
    screens: Callable[[int], np.ndarray] | None = None,
) -> list[ComplexField]:
    """Propagate many fields through the same screens in lockstep (batched FFTs)."""
    if not fields:
        return []
    grid = fields[0].grid
    for f in fields:
        if f.grid != grid:
            raise ValueError("all stacked fields must share one grid")
        if f.kind != "field":
            raise ValueError("propagate_stack expects spatial fields")
    _check_paraxial(grid, plan.k0)
    stack = np.stack([f.values for f in fields])
    if plan.medium is None:
        return [free_space_propagate(f, plan.k0, plan.thickness) for f in fields]
    if screens is None:
        raise ValueError("plan has a medium; pass a screens source (e.g. BrownianScreens)")
    before = float(np.sum(np.abs(stack) ** 2))
    out = _run_split_step(stack, grid, plan, screens)
    _guard_unitarity(before, float(np.sum(np.abs(out) ** 2)))
    return [ComplexField(grid, out[i], kind="field") for i in range(out.shape[0])]
