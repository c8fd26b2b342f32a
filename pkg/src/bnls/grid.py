"""Periodic Cartesian grids, complex fields, and Fourier-multiplier operators.

The whole space R^N is modeled by the periodic box [-L, L)^dim; all
computations assume fields decay below round-off at the box boundary.
Transforms use the unscaled forward / cell-count-scaled inverse convention
of numpy.fft.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

BOUNDARY_AMPLITUDE_WARN = 1e-10


class GridError(ValueError):
    """Structural problem with a grid or a field/grid pairing."""


class PoisonedFieldError(FloatingPointError):
    """A field contains NaN/Inf; usually the numerical signature of collapse."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [-L, L)^dim with FFT wavenumber tables.

    points_per_axis must be a power of two; spacing * points_per_axis
    equals 2 * half_width exactly.
    """

    dim: int
    points_per_axis: int
    half_width: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise GridError(f"dim must be 1, 2 or 3 (got {self.dim})")
        n = self.points_per_axis
        if n < 2 or (n & (n - 1)) != 0:
            raise GridError(f"points_per_axis must be a power of two >= 2 (got {n})")
        if not self.half_width > 0:
            raise GridError(f"half_width must be > 0 (got {self.half_width})")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def cell_count(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @cached_property
    def axis_coords(self) -> np.ndarray:
        """Grid coordinates along one axis: -L, -L+h, ..., L-h."""
        return -self.half_width + self.spacing * np.arange(self.points_per_axis)

    @cached_property
    def axis_wavenumbers(self) -> np.ndarray:
        """k_m = pi m / L in standard FFT ordering (conjugate-symmetric)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.points_per_axis, d=self.spacing)

    def coord_mesh(self, axis: int) -> np.ndarray:
        """Coordinate of one axis broadcast over the full lattice."""
        shape = [1] * self.dim
        shape[axis] = self.points_per_axis
        return self.axis_coords.reshape(shape)

    def wavenumber_mesh(self, axis: int) -> np.ndarray:
        shape = [1] * self.dim
        shape[axis] = self.points_per_axis
        return self.axis_wavenumbers.reshape(shape)

    @cached_property
    def radius(self) -> np.ndarray:
        """|x| on the lattice."""
        r_sq = np.zeros(self.shape)
        for a in range(self.dim):
            r_sq = r_sq + self.coord_mesh(a) ** 2
        return np.sqrt(r_sq)

    @cached_property
    def k_sq(self) -> np.ndarray:
        """|k|^2 multiplier lattice (the symbol of -Laplacian)."""
        out = np.zeros(self.shape)
        for a in range(self.dim):
            out = out + self.wavenumber_mesh(a) ** 2
        return out

    @cached_property
    def k_fourth(self) -> np.ndarray:
        """|k|^4 multiplier lattice (the symbol of Laplacian^2)."""
        return self.k_sq**2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: True on the retained low-wavenumber modes."""
        k_cut = (2.0 / 3.0) * np.pi / self.spacing
        keep = np.ones(self.shape, dtype=bool)
        for a in range(self.dim):
            keep &= np.abs(self.wavenumber_mesh(a)) <= k_cut + 1e-12
        return keep


@dataclass(frozen=True)
class Field:
    """Complex-valued state sampled on a Grid.

    profile, when set, is the analytic radial profile r -> value the field
    was sampled from; rescale() uses it for exact resampling.
    """

    grid: Grid
    values: np.ndarray
    profile: object = field(default=None, compare=False)

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise GridError(
                f"field shape {self.values.shape} does not match grid shape {self.grid.shape}"
            )

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.values).all())

    def require_finite(self):
        if not self.is_finite():
            raise PoisonedFieldError("field contains NaN or Inf")

    def copy_with(self, values: np.ndarray, keep_profile: bool = False) -> "Field":
        return Field(self.grid, values, self.profile if keep_profile else None)


def field_from_values(grid: Grid, values: np.ndarray) -> Field:
    return Field(grid, np.asarray(values, dtype=complex))


def radial_field(grid: Grid, profile, dtype=complex) -> Field:
    """Sample an analytic radial profile r -> value onto the grid."""
    vals = np.asarray(profile(grid.radius), dtype=dtype)
    return Field(grid, vals.astype(complex), profile=profile)


def gaussian_field(grid: Grid, amplitude: float = 1.0, width: float = 1.0) -> Field:
    """amplitude * exp(-|x|^2 / (2 width^2)), the standard analytic test profile."""
    w2 = 2.0 * width * width
    return radial_field(grid, lambda r: amplitude * np.exp(-(r**2) / w2))


def forward_transform(f: Field) -> np.ndarray:
    """Unscaled discrete Fourier transform of the field values."""
    return np.fft.fftn(f.values)


def inverse_transform(grid: Grid, spectrum: np.ndarray) -> Field:
    """Inverse transform (divides by cell count), returning a Field."""
    if spectrum.shape != grid.shape:
        raise GridError(f"spectrum shape {spectrum.shape} does not match grid {grid.shape}")
    return Field(grid, np.fft.ifftn(spectrum))


def apply_multiplier(f: Field, weights: np.ndarray) -> Field:
    """inverse(weights * forward(f)): diagonal operator in Fourier space."""
    if weights.shape != f.grid.shape:
        raise GridError("multiplier shape does not match grid")
    return Field(f.grid, np.fft.ifftn(weights * np.fft.fftn(f.values)))


def laplacian(f: Field) -> Field:
    return apply_multiplier(f, -f.grid.k_sq)


def bilaplacian(f: Field) -> Field:
    return apply_multiplier(f, f.grid.k_fourth)


def integrate(f: Field) -> float:
    """Lattice-sum quadrature of a real field (trapezoid on a periodic grid)."""
    return float(np.real(np.sum(f.values)) * f.grid.cell_volume)


def integrate_values(grid: Grid, values: np.ndarray) -> float:
    return float(np.real(np.sum(values)) * grid.cell_volume)


def norm_sq(f: Field) -> float:
    """Discrete L2 norm squared, integral of |f|^2."""
    return float(np.sum(np.abs(f.values) ** 2) * f.grid.cell_volume)


def spectral_moment(f: Field, weights: np.ndarray, spectrum: np.ndarray | None = None) -> float:
    """Integral of weights(k) |f_hat(k)|^2 under the Parseval normalization.

    With weights = |k|^2 this is the gradient norm squared, with |k|^4 the
    Laplacian norm squared.
    """
    if spectrum is None:
        spectrum = np.fft.fftn(f.values)
    scale = f.grid.cell_volume / f.grid.cell_count
    return float(np.sum(weights * np.abs(spectrum) ** 2) * scale)


def gradient(f: Field, spectrum: np.ndarray | None = None) -> list[np.ndarray]:
    """Spectral partial derivatives of the field, one array per axis."""
    if spectrum is None:
        spectrum = np.fft.fftn(f.values)
    return [
        np.fft.ifftn(1j * f.grid.wavenumber_mesh(a) * spectrum)
        for a in range(f.grid.dim)
    ]


def boundary_amplitude(f: Field) -> float:
    """max |f| over the boundary faces, relative to max |f| overall."""
    mags = np.abs(f.values)
    peak = float(mags.max())
    if peak == 0.0:
        return 0.0
    worst = 0.0
    for a in range(f.grid.dim):
        face = np.take(mags, 0, axis=a)
        worst = max(worst, float(np.max(face)))
    return worst / peak


def warn_if_boundary_loaded(f: Field, context: str = "field"):
    amp = boundary_amplitude(f)
    if amp > BOUNDARY_AMPLITUDE_WARN:
        warnings.warn(
            f"{context}: boundary amplitude {amp:.3e} exceeds {BOUNDARY_AMPLITUDE_WARN:.0e} "
            f"of the peak; the periodic box is too small for this state",
            RuntimeWarning,
            stacklevel=2,
        )
