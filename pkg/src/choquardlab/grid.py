"""Uniform periodic Cartesian grids and real scalar fields.

The computational domain is the box [-L, L)^N, N in {1, 2, 3}, sampled at M
points per axis (M a power of two so FFT padding is cheap and dx * M == 2L
holds exactly in IEEE arithmetic).  The periodic box stands in for R^N:
every field of interest decays well inside the boundary, and integrals are
plain midpoint sums, which coincide with the periodic trapezoid rule and
are therefore second order (spectrally accurate for decayed smooth fields).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [-half_width, half_width)^dim, points_per_axis per axis."""

    dim: int
    points_per_axis: int
    half_width: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        m = self.points_per_axis
        if m < 8 or (m & (m - 1)) != 0:
            raise ValueError(f"points_per_axis must be a power of two >= 8, got {m}")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    @property
    def spacing(self) -> float:
        # M is a power of two, so 2L/M is exact and spacing * M == 2L exactly.
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def axis_coords(self) -> np.ndarray:
        """Sample points of one axis: -L + j*dx, j = 0..M-1 (0 is included)."""
        return -self.half_width + self.spacing * np.arange(self.points_per_axis)

    def coords(self) -> tuple:
        """dim arrays of shape `self.shape` with the coordinates of each cell."""
        x = self.axis_coords()
        return np.meshgrid(*([x] * self.dim), indexing="ij")

    def radius_sq(self) -> np.ndarray:
        r2 = np.zeros(self.shape)
        for c in self.coords():
            r2 += c * c
        return r2

    def wavenumbers(self) -> list:
        """Angular wavenumbers (2*pi*fftfreq) of each axis, FFT ordering."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.points_per_axis, d=self.spacing)
        return [k] * self.dim

    def wavenumber_sq(self) -> np.ndarray:
        ks = self.wavenumbers()
        k2 = np.zeros(self.shape)
        for axis, k in enumerate(ks):
            shape = [1] * self.dim
            shape[axis] = self.points_per_axis
            k2 = k2 + (k**2).reshape(shape)
        return k2


@dataclass
class Field:
    """Real samples over a Grid, stored flat in axis-major (C) order."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if v.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite entries")
        self.values = v

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        """Sample ``fn(*coords)`` on the grid."""
        return cls(grid, np.asarray(fn(*grid.coords()), dtype=np.float64).ravel())

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)

    def reshaped(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


def integrate(f: Field) -> float:
    """Midpoint quadrature of f over the box: dx^N * sum of samples."""
    return float(f.grid.cell_volume * np.sum(f.values))


def mass(f: Field) -> float:
    """Squared L2 norm: integral of f^2 (the conserved mass)."""
    return float(f.grid.cell_volume * np.sum(f.values * f.values))


def lp_norm(f: Field, r: float) -> float:
    """L^r norm, r >= 1."""
    if r < 1:
        raise ValueError(f"lp_norm requires r >= 1, got {r}")
    return float((f.grid.cell_volume * np.sum(np.abs(f.values) ** r)) ** (1.0 / r))


def grad_norm_sq(f: Field) -> float:
    """Integral of |grad f|^2 via the spectral derivative on the periodic box."""
    u_hat = np.fft.fftn(f.reshaped())
    k2 = f.grid.wavenumber_sq()
    # Parseval: sum |f|^2 dx^N  ==  dx^N / M^N * sum |f_hat|^2
    w = f.grid.cell_volume / f.grid.size
    return float(w * np.sum(k2 * np.abs(u_hat) ** 2))


def laplacian(f: Field) -> Field:
    """Spectral Laplacian on the periodic box."""
    u_hat = np.fft.fftn(f.reshaped())
    out = np.fft.ifftn(-f.grid.wavenumber_sq() * u_hat).real
    return Field(f.grid, out.ravel())


def shift(f: Field, offset) -> Field:
    """Circular shift by whole cells; a pure permutation of the samples."""
    off = np.atleast_1d(np.asarray(offset))
    if off.size != f.grid.dim:
        raise ValueError(f"offset must have {f.grid.dim} components")
    if not np.all(off == np.round(off)):
        raise ValueError("offset components must be integers")
    rolled = np.roll(f.reshaped(), tuple(int(o) for o in off), axis=tuple(range(f.grid.dim)))
    return Field(f.grid, rolled.ravel())


def dilate(f: Field, tau: float) -> Field:
    """Mass-preserving dilation tau^{N/2} f(tau x) by multilinear interpolation.

    Samples outside the box read as zero, so the result is approximate for
    fields with visible tails; mass is preserved to interpolation error only.
    """
    if not tau > 0:
        raise ValueError(f"dilate requires tau > 0, got {tau}")
    if tau == 1.0:
        return Field(f.grid, f.values.copy())
    g = f.grid
    x = g.axis_coords()
    # fractional index of the source position tau*x on the original grid
    idx = (tau * x + g.half_width) / g.spacing
    mesh = np.meshgrid(*([idx] * g.dim), indexing="ij")
    out = ndimage.map_coordinates(
        f.reshaped(), np.stack([m.ravel() for m in mesh]), order=1, mode="constant", cval=0.0
    )
    return Field(g, tau ** (g.dim / 2.0) * out)


def boundary_mass_fraction(f: Field, shell: float = 0.875) -> float:
    """Fraction of the mass sitting at sup-norm radius >= shell * half_width."""
    m = mass(f)
    if m == 0.0:
        return 0.0
    coords = f.grid.coords()
    rinf = np.max(np.abs(np.stack(coords)), axis=0).ravel()
    outer = rinf >= shell * f.grid.half_width
    return float(f.grid.cell_volume * np.sum(f.values[outer] ** 2) / m)


def embed_double(f: Field) -> Field:
    """Embed a field into the grid with doubled half-width and doubled M.

    The spacing is unchanged, so old samples land exactly on new points and
    the embedding is exact (zero extension outside the old box).
    """
    g = f.grid
    big = Grid(g.dim, 2 * g.points_per_axis, 2.0 * g.half_width)
    out = np.zeros(big.shape)
    m = g.points_per_axis
    sl = tuple(slice(m // 2, m // 2 + m) for _ in range(g.dim))
    out[sl] = f.reshaped()
    return Field(big, out.ravel())


def gaussian_field(grid: Grid, width: float, center=None, amplitude: float = 1.0) -> Field:
    """Gaussian bump exp(-|x - center|^2 / (2 width^2))."""
    coords = grid.coords()
    if center is None:
        center = np.zeros(grid.dim)
    center = np.atleast_1d(np.asarray(center, dtype=float))
    r2 = np.zeros(grid.shape)
    for c, c0 in zip(coords, center):
        r2 += (c - c0) ** 2
    return Field(grid, (amplitude * np.exp(-r2 / (2.0 * width**2))).ravel())


def random_smooth_field(grid: Grid, rng: np.random.Generator, cutoff_modes: float = 8.0,
                        decay_width: float | None = None) -> Field:
    """Low-pass filtered white noise under a Gaussian envelope, sup norm 1.

    cutoff_modes sets the spectral cutoff in units of the box fundamental
    pi/L; the envelope keeps the field decayed at the boundary so the box
    faithfully represents a whole-space profile.
    """
    noise = rng.standard_normal(grid.shape)
    kc = cutoff_modes * np.pi / grid.half_width
    filt = np.exp(-grid.wavenumber_sq() / kc**2)
    v = np.fft.ifftn(np.fft.fftn(noise) * filt).real
    if decay_width is None:
        decay_width = grid.half_width / 4.0
    v = v * np.exp(-grid.radius_sq() / (2.0 * decay_width**2))
    peak = np.max(np.abs(v))
    if peak > 0:
        v = v / peak
    return Field(grid, v.ravel())


@lru_cache(maxsize=32)
def _radial_order(grid: Grid) -> np.ndarray:
    """Flat cell indices sorted by distance from the origin, lexicographic ties."""
    r2 = grid.radius_sq().ravel()
    idx = np.unravel_index(np.arange(grid.size), grid.shape)
    # lexsort: last key is primary
    keys = tuple(reversed(idx)) + (r2,)
    return np.lexsort(keys)


# ---------------------------------------------------------------------------
# serialization: flat little-endian float64 payload behind a one-line JSON header
# ---------------------------------------------------------------------------

def save_field(f: Field, path) -> None:
    header = {
        "dim": f.grid.dim,
        "points_per_axis": f.grid.points_per_axis,
        "half_width": f.grid.half_width,
        "dtype": "<f8",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_field(path) -> Field:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        raw = fh.read()
    grid = Grid(int(header["dim"]), int(header["points_per_axis"]), float(header["half_width"]))
    values = np.frombuffer(raw, dtype="<f8")
    return Field(grid, values.copy())


def export_slice_csv(f: Field, path, axis: int = 0) -> None:
    """Write the 1D slice through the origin along `axis` as (x, value) rows."""
    if not 0 <= axis < f.grid.dim:
        raise ValueError(f"axis {axis} out of range for dim {f.grid.dim}")
    m = f.grid.points_per_axis
    arr = f.reshaped()
    index = [m // 2] * f.grid.dim  # the origin lies at index M/2 on each axis
    index[axis] = slice(None)
    line = arr[tuple(index)]
    x = f.grid.axis_coords()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "value"])
        for xi, vi in zip(x, line):
            writer.writerow([repr(float(xi)), repr(float(vi))])
