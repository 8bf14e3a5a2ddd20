"""Transverse grids, complex fields, spectral transforms, and field dumps.

Conventions fixed here and used everywhere else:

* coordinates are centered: x_j = (j - n/2) * dx, j = 0..n-1, so the axis
  spans [-n*dx/2, n*dx/2);
* the spectral axis is centered the same way with dk = 2*pi/(n*dx);
* `forward_transform` approximates the continuous Fourier transform
  F(k) = integral f(x) exp(-i k.x) dx  as  dx^d * DFT on the centered grid;
* `inverse_transform` carries the (2*pi)^-d measure, so it inverts
  `forward_transform` exactly (to round-off);
* `energy` of a spatial field is sum |f|^2 dx^d; of a spectrum it is
  (2*pi)^-d sum |F|^2 dk^d, so the two agree (Parseval).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.fft import fftn, fftshift, ifftn, ifftshift

__all__ = [
    "TransverseGrid",
    "ComplexField",
    "forward_transform",
    "inverse_transform",
    "energy",
    "write_field",
    "read_field",
]


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TransverseGrid:
    """Square periodic grid in d in {1, 2} transverse dimensions."""

    dim: int
    n: int
    dx: float

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not isinstance(self.n, (int, np.integer)) or not _is_power_of_two(int(self.n)) or self.n < 8:
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not (np.isfinite(self.dx) and self.dx > 0):
            raise ValueError(f"dx must be finite and positive, got {self.dx}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "dx", float(self.dx))

    # -- geometry -----------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def box(self) -> float:
        """Side length of the periodic box."""
        return self.n * self.dx

    @property
    def dk(self) -> float:
        return 2.0 * np.pi / self.box

    @property
    def axis(self) -> np.ndarray:
        """Centered coordinates along one axis."""
        return (np.arange(self.n) - self.n // 2) * self.dx

    @property
    def kaxis(self) -> np.ndarray:
        """Centered spectral coordinates along one axis."""
        return (np.arange(self.n) - self.n // 2) * self.dk

    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays broadcast to the grid shape (ij indexing)."""
        if self.dim == 1:
            return (self.axis,)
        return tuple(np.meshgrid(self.axis, self.axis, indexing="ij"))

    def kcoords(self) -> tuple[np.ndarray, ...]:
        if self.dim == 1:
            return (self.kaxis,)
        return tuple(np.meshgrid(self.kaxis, self.kaxis, indexing="ij"))

    def ksq(self) -> np.ndarray:
        """|k|^2 on the grid."""
        kc = self.kcoords()
        out = kc[0] ** 2
        for a in kc[1:]:
            out = out + a**2
        return out

    def cell(self) -> float:
        """Volume (d=2) / length (d=1) of one grid cell."""
        return self.dx**self.dim

    def radius_in_cells(self, r: float) -> int:
        return int(round(r / self.dx))


@dataclass
class ComplexField:
    """Complex values on a TransverseGrid.

    kind is "field" for spatial samples, "spectrum" for forward-transformed
    samples on the dual (k) lattice; dumps carry it so files are
    self-describing.
    """

    grid: TransverseGrid
    values: np.ndarray
    kind: str = "field"

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        self.values = v

    def copy(self) -> "ComplexField":
        return ComplexField(self.grid, self.values.copy(), self.kind)

    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2


def forward_transform(f: ComplexField) -> ComplexField:
    """Continuous-convention forward transform onto the centered k lattice."""
    if f.kind != "field":
        raise ValueError("forward_transform expects a spatial field")
    v = fftshift(fftn(ifftshift(f.values))) * f.grid.cell()
    return ComplexField(f.grid, v, kind="spectrum")


def inverse_transform(s: ComplexField) -> ComplexField:
    """Inverse of forward_transform (includes the (2*pi)^-d measure)."""
    if s.kind != "spectrum":
        raise ValueError("inverse_transform expects a spectrum")
    v = fftshift(ifftn(ifftshift(s.values))) / s.grid.cell()
    return ComplexField(s.grid, v, kind="field")


def energy(f: ComplexField) -> float:
    """L2 mass of the field under the convention-matched measure."""
    if f.kind == "spectrum":
        w = (f.grid.dk / (2.0 * np.pi)) ** f.grid.dim
    else:
        w = f.grid.cell()
    return float(np.sum(np.abs(f.values) ** 2) * w)


# -- dump format ------------------------------------------------------------
#
# One JSON header line {"dim":..,"n":..,"dx":..,"kind":..} + "\n", then the
# samples as little-endian float64, interleaved (re, im), row-major.


def write_field(f: ComplexField, path: str | Path) -> None:
    path = Path(path)
    header = {"dim": f.grid.dim, "n": f.grid.n, "dx": f.grid.dx, "kind": f.kind}
    flat = f.values.ravel(order="C")
    raw = np.empty(2 * flat.size, dtype="<f8")
    raw[0::2] = flat.real
    raw[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("ascii") + b"\n")
        fh.write(raw.tobytes())


def read_field(path: str | Path) -> ComplexField:
    path = Path(path)
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("ascii"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: malformed dump header") from exc
        for key in ("dim", "n", "dx", "kind"):
            if key not in header:
                raise ValueError(f"{path}: dump header missing '{key}'")
        grid = TransverseGrid(header["dim"], header["n"], header["dx"])
        count = 2 * grid.n**grid.dim
        data = fh.read()
        if len(data) != 8 * count:
            raise ValueError(
                f"{path}: truncated or oversized dump ({len(data)} bytes, want {8 * count})"
            )
        raw = np.frombuffer(data, dtype="<f8")
    values = (raw[0::2] + 1j * raw[1::2]).reshape(grid.shape)
    return ComplexField(grid, values, kind=header["kind"])


def shifted(f: ComplexField, offset: tuple[float, ...] | float) -> ComplexField:
    """Circularly shift a spatial field by a grid-aligned offset (length units).

    Offsets must be integer multiples of dx (tolerance 1e-9*dx); sub-cell
    shifts are rejected rather than silently interpolated.
    """
    if f.kind != "field":
        raise ValueError("shifted expects a spatial field")
    offs = np.atleast_1d(np.asarray(offset, dtype=float))
    if offs.size != f.grid.dim:
        raise ValueError(f"offset needs {f.grid.dim} components, got {offs.size}")
    cells = offs / f.grid.dx
    rounded = np.rint(cells)
    if np.any(np.abs(cells - rounded) > 1e-9):
        raise ValueError(f"offset {offset} is not an integer multiple of dx={f.grid.dx}")
    out = np.roll(f.values, tuple(int(c) for c in rounded), axis=tuple(range(f.grid.dim)))
    return ComplexField(f.grid, out, kind="field")


__all__.append("shifted")
