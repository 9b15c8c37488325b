"""Discrete fields on the periodic-in-x, layered-in-z grid.

Fields are stored as ``(nx, nz)`` arrays: axis 0 is ``x`` (uniform, periodic),
axis 1 is ``z`` (layer-wise uniform, interfaces are nodes).  Fourier
coefficients use the convention ``f_n(z) = (1/L) int f(x, z) exp(-i k_n x) dx``
so the zero mode is the x-average.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .domain import LayerStack

QUANTITIES = ("psi", "p", "u_x", "u_z", "phi", "N")


@dataclass(frozen=True)
class Grid:
    nx: int
    z: np.ndarray
    period: float
    depth: float

    def __post_init__(self):
        if self.nx <= 0 or self.nx % 2:
            raise ValueError(f"nx must be a positive even integer, got {self.nx}")
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 1 or len(z) < 3 or np.any(np.diff(z) <= 0):
            raise ValueError("z nodes must be strictly increasing with at least 3 nodes")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def nz(self) -> int:
        return len(self.z)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.nz)

    @property
    def dx(self) -> float:
        return self.period / self.nx

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    @property
    def h(self) -> np.ndarray:
        """Spacing of each cell between consecutive nodes (length nz-1)."""
        return np.diff(self.z)

    @property
    def z_mid(self) -> np.ndarray:
        return 0.5 * (self.z[1:] + self.z[:-1])

    @property
    def widths(self) -> np.ndarray:
        """Control-volume (trapezoid) widths of the nodes; boundary nodes get half cells."""
        h = self.h
        w = np.zeros(self.nz)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        return w

    @property
    def h_max(self) -> float:
        return float(max(self.h.max(), self.dx))

    @property
    def wavenumbers(self) -> np.ndarray:
        """``k_n = 2 pi n / L`` for the half spectrum ``n = 0 .. nx/2``."""
        return 2 * np.pi * np.arange(self.nx // 2 + 1) / self.period

    @property
    def mode_weights(self) -> np.ndarray:
        """Multiplicity of each half-spectrum mode in the full symmetric spectrum."""
        w = np.full(self.nx // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w

    def cell_values(self, stack: LayerStack, values: Sequence[float]) -> np.ndarray:
        """Per-layer material values on each cell between nodes.

        Every cell lies inside one layer because interfaces are nodes, so the
        harmonic mean across a cell reduces to the layer value.
        """
        return np.asarray(values, dtype=float)[stack.layer_of(self.z_mid)]

    def node_average(self, cell: np.ndarray) -> np.ndarray:
        """Control-volume average of a per-cell quantity at each node."""
        h = self.h
        acc = np.zeros(self.nz)
        acc[:-1] += 0.5 * h * cell
        acc[1:] += 0.5 * h * cell
        return acc / self.widths

    def layer_slices(self, stack: LayerStack) -> list[slice]:
        """Node slices of every layer, both bounding nodes included."""
        out = []
        edges = stack.edges
        for lo, hi in zip(edges[:-1], edges[1:]):
            i0 = int(np.argmin(np.abs(self.z - lo)))
            i1 = int(np.argmin(np.abs(self.z - hi)))
            out.append(slice(i0, i1 + 1))
        return out


def make_grid(stack: LayerStack, nx: int, nz_per_layer: Union[int, Sequence[int]]) -> Grid:
    """Layer-uniform grid with every interface as a node.

    ``nz_per_layer`` is the number of cells in each layer (one int for all).
    """
    if isinstance(nz_per_layer, (int, np.integer)):
        counts = [int(nz_per_layer)] * stack.n_layers
    else:
        counts = [int(c) for c in nz_per_layer]
    if len(counts) != stack.n_layers or min(counts) < 1:
        raise ValueError("need a positive cell count for every layer")
    edges = stack.edges
    pieces = [np.linspace(lo, hi, n + 1)[:-1] for lo, hi, n in zip(edges[:-1], edges[1:], counts)]
    z = np.concatenate(pieces + [[0.0]])
    return Grid(int(nx), z, stack.horizontal_period, stack.depth)


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray
    tag: str = "psi"
    time: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if self.tag not in QUANTITIES:
            raise ValueError(f"unknown quantity tag {self.tag!r}")

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.tag, self.time, self.epsilon)


@dataclass
class ModeCoefficients:
    """Full symmetric spectrum: row ``n`` in numpy FFT order, wavenumber ``2 pi n / L``."""

    coeffs: np.ndarray
    period: float
    grid: Grid | None = field(default=None, repr=False)

    @property
    def n(self) -> np.ndarray:
        return np.fft.fftfreq(self.coeffs.shape[0], 1.0 / self.coeffs.shape[0]).astype(int)

    @property
    def wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * self.n / self.period

    def mode(self, n: int) -> np.ndarray:
        return self.coeffs[n % self.coeffs.shape[0]]


def to_modes(f: Union[ScalarField, np.ndarray], period: float | None = None) -> ModeCoefficients:
    if isinstance(f, ScalarField):
        values, period, grid = f.values, f.grid.period, f.grid
    else:
        values, grid = np.asarray(f, dtype=float), None
        if period is None:
            raise ValueError("period required for raw arrays")
    return ModeCoefficients(np.fft.fft(values, axis=0) / values.shape[0], float(period), grid)


def from_modes(m: ModeCoefficients, tag: str = "psi", rtol: float = 1e-10) -> Union[ScalarField, np.ndarray]:
    """Inverse of :func:`to_modes`; refuses spectra that would give a complex field."""
    c = m.coeffs
    nx = c.shape[0]
    mirrored = np.conj(c[(-np.arange(nx)) % nx])
    scale = max(np.abs(c).max(), 1e-300)
    if np.abs(c - mirrored).max() > rtol * scale:
        raise ValueError("coefficients are not conjugate-symmetric")
    values = np.fft.ifft(c * nx, axis=0).real
    if m.grid is None:
        return values
    return ScalarField(m.grid, values, tag)


def split_zero_mode(m: ModeCoefficients) -> tuple[np.ndarray, ModeCoefficients]:
    zero = m.coeffs[0].real.copy()
    rest = m.coeffs.copy()
    rest[0] = 0.0
    return zero, ModeCoefficients(rest, m.period, m.grid)


# -- half-spectrum helpers used by the solvers --------------------------------

def rfft(values: np.ndarray) -> np.ndarray:
    return np.fft.rfft(values, axis=0) / values.shape[0]


def irfft(coeffs: np.ndarray, nx: int) -> np.ndarray:
    return np.fft.irfft(coeffs * nx, n=nx, axis=0)


def dealias_mask(nx: int) -> np.ndarray:
    """Half-spectrum mask of the 2/3 rule: keep ``|n| <= nx/3``."""
    n = np.arange(nx // 2 + 1)
    return n <= nx // 3


def ddx(values: np.ndarray, period: float) -> np.ndarray:
    """Spectral x-derivative; the Nyquist mode is dropped."""
    nx = values.shape[0]
    c = rfft(values)
    k = 2 * np.pi * np.arange(nx // 2 + 1) / period
    c = 1j * k[:, None] * c
    c[-1] = 0.0
    return irfft(c, nx)


def ddz(values: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Second-order z-derivative on a non-uniform grid (one-sided at the ends)."""
    return np.gradient(values, z, axis=-1, edge_order=2)


# -- serialization -------------------------------------------------------------

_MAGIC = b"DLFIELD1"
_HEAD = struct.Struct("<8sII8sdd")


def save_field(f: ScalarField, path: Union[str, Path]) -> None:
    """Write a snapshot; ``.csv`` gives the text layout, anything else the binary one.

    Both layouts round-trip bit-exactly.
    """
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, "w") as fh:
            fh.write(f"# nx={f.grid.nx} tag={f.tag} time={f.time!r} epsilon={f.epsilon!r}\n")
            fh.write(f"# period={f.grid.period!r} depth={f.grid.depth!r}\n")
            fh.write("# z=" + ",".join(repr(float(v)) for v in f.grid.z) + "\n")
            for row in f.values:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        return
    buf = io.BytesIO()
    buf.write(_HEAD.pack(_MAGIC, f.grid.nx, f.grid.nz, f.tag.encode().ljust(8, b"\0"), f.time, f.epsilon))
    buf.write(struct.pack("<dd", f.grid.period, f.grid.depth))
    buf.write(np.asarray(f.grid.z, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    path.write_bytes(buf.getvalue())


def load_field(path: Union[str, Path]) -> ScalarField:
    path = Path(path)
    if path.suffix == ".csv":
        meta = {}
        rows = []
        with open(path) as fh:
            for line in fh:
                if line.startswith("# z="):
                    z = np.array([float(v) for v in line[4:].split(",")])
                elif line.startswith("#"):
                    for tok in line[1:].split():
                        key, val = tok.split("=", 1)
                        meta[key] = val
                elif line.strip():
                    rows.append([float(v) for v in line.split(",")])
        grid = Grid(int(meta["nx"]), z, float(meta["period"]), float(meta["depth"]))
        return ScalarField(grid, np.array(rows), meta["tag"], float(meta["time"]), float(meta["epsilon"]))

    raw = path.read_bytes()
    magic, nx, nz, tag, time, eps = _HEAD.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise ValueError(f"{path} is not a field snapshot")
    off = _HEAD.size
    period, depth = struct.unpack_from("<dd", raw, off)
    off += 16
    z = np.frombuffer(raw, dtype="<f8", count=nz, offset=off).copy()
    off += 8 * nz
    values = np.frombuffer(raw, dtype="<f8", count=nx * nz, offset=off).reshape(nx, nz).copy()
    grid = Grid(nx, z, period, depth)
    return ScalarField(grid, values, tag.rstrip(b"\0").decode(), time, eps)
