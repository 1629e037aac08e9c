"""Periodic grids, Fourier bookkeeping and field snapshots.

Internally every routine works with Fourier-series coefficients in numpy's
FFT ordering, ``u(x) = sum_k ut[k] exp(i k x)``.  The public ``coeffs``
attribute of :class:`SpectralField` uses the unitary normalization
``sqrt(length) * ut`` in increasing-frequency order, so that Parseval reads
``sum |coeffs|^2 == dx * sum |values|^2``.

Grid nodes are ``x_j = -length/2 + j*dx`` so the box is centred at 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "PeriodicGrid",
    "SpectralField",
    "make_grid",
    "to_spectral",
    "to_physical",
    "derivative",
    "mode_numbers",
    "embed_series",
    "series_to_values",
    "values_to_series",
]


def mode_numbers(n: int) -> np.ndarray:
    """Integer mode numbers in FFT order, ``[0, 1, ..., n/2-1, -n/2, ..., -1]``."""
    return np.fft.fftfreq(n, 1.0 / n).round().astype(np.int64)


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on a torus of circumference ``length``."""

    n_points: int
    length: float

    def __post_init__(self):
        n = self.n_points
        if not isinstance(n, (int, np.integer)) or n < 8 or (n & (n - 1)) != 0:
            raise ValueError(f"n_points must be a power of two >= 8, got {n!r}")
        if not np.isfinite(self.length) or self.length <= 0:
            raise ValueError(f"length must be positive, got {self.length!r}")

    @property
    def dx(self) -> float:
        return self.length / self.n_points

    @property
    def dk(self) -> float:
        """Frequency spacing ``2*pi/length``."""
        return 2.0 * np.pi / self.length

    @cached_property
    def x(self) -> np.ndarray:
        return -0.5 * self.length + self.dx * np.arange(self.n_points)

    @cached_property
    def modes(self) -> np.ndarray:
        return mode_numbers(self.n_points)

    @cached_property
    def k(self) -> np.ndarray:
        """Wavenumbers in FFT order."""
        return self.dk * self.modes

    @cached_property
    def frequencies(self) -> np.ndarray:
        """Wavenumbers in increasing order, ``2*pi*j/length`` for ``-n/2 <= j < n/2``."""
        return np.fft.fftshift(self.k)

    @property
    def max_frequency(self) -> float:
        return self.dk * (self.n_points // 2)

    def refined(self, factor: int) -> "PeriodicGrid":
        """Same box, ``factor`` times more points (used for exact padded products)."""
        return PeriodicGrid(self.n_points * factor, self.length)

    def _phase(self, modes: np.ndarray) -> np.ndarray:
        # accounts for the first node sitting at -length/2
        return np.where(modes % 2 == 0, 1.0, -1.0)


def values_to_series(grid: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    """Physical samples to Fourier-series coefficients (FFT order)."""
    values = np.asarray(values)
    if values.shape[-1] != grid.n_points:
        raise ValueError(f"expected {grid.n_points} samples, got {values.shape[-1]}")
    return np.fft.fft(values, axis=-1) / grid.n_points * grid._phase(grid.modes)


def series_to_values(grid: PeriodicGrid, series: np.ndarray) -> np.ndarray:
    """Fourier-series coefficients (FFT order) to physical samples."""
    series = np.asarray(series)
    if series.shape[-1] != grid.n_points:
        raise ValueError(f"expected {grid.n_points} coefficients, got {series.shape[-1]}")
    return np.fft.ifft(series * grid._phase(grid.modes), axis=-1) * grid.n_points


def embed_series(series: np.ndarray, n_target: int) -> np.ndarray:
    """Copy coefficients into a larger (or smaller) FFT-ordered array by mode number.

    Modes that do not exist in the target are dropped, missing ones are zero.
    The Nyquist mode ``-n/2`` is treated as a genuine negative frequency.
    """
    series = np.asarray(series)
    n_src = series.shape[-1]
    src_modes = mode_numbers(n_src)
    keep = (src_modes >= -(n_target // 2)) & (src_modes < n_target // 2)
    out = np.zeros(series.shape[:-1] + (n_target,), dtype=complex)
    out[..., src_modes[keep] % n_target] = series[..., keep]
    return out


class SpectralField:
    """Immutable complex field on a :class:`PeriodicGrid`.

    Build with :meth:`from_values`, :meth:`from_coeffs` or :meth:`from_series`;
    both representations are kept consistent and read-only.
    """

    __slots__ = ("grid", "_series", "__dict__")

    def __init__(self, grid: PeriodicGrid, series: np.ndarray):
        series = np.array(series, dtype=complex)
        if series.shape != (grid.n_points,):
            raise ValueError(f"expected {grid.n_points} coefficients, got shape {series.shape}")
        series.setflags(write=False)
        self.grid = grid
        self._series = series

    @classmethod
    def from_values(cls, grid: PeriodicGrid, values) -> "SpectralField":
        values = np.asarray(values, dtype=complex)
        if values.shape != (grid.n_points,):
            raise ValueError(f"expected {grid.n_points} samples, got shape {values.shape}")
        return cls(grid, values_to_series(grid, values))

    @classmethod
    def from_coeffs(cls, grid: PeriodicGrid, coeffs) -> "SpectralField":
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (grid.n_points,):
            raise ValueError(f"expected {grid.n_points} coefficients, got shape {coeffs.shape}")
        return cls(grid, np.fft.ifftshift(coeffs) / np.sqrt(grid.length))

    @classmethod
    def from_series(cls, grid: PeriodicGrid, series) -> "SpectralField":
        return cls(grid, series)

    @property
    def series(self) -> np.ndarray:
        """Fourier-series coefficients in FFT order (read-only)."""
        return self._series

    @cached_property
    def values(self) -> np.ndarray:
        v = series_to_values(self.grid, self._series)
        v.setflags(write=False)
        return v

    @cached_property
    def coeffs(self) -> np.ndarray:
        c = np.fft.fftshift(self._series) * np.sqrt(self.grid.length)
        c.setflags(write=False)
        return c

    # arithmetic -------------------------------------------------------
    def _check(self, other: "SpectralField"):
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.grid, self._series + other._series)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.grid, self._series - other._series)

    def __mul__(self, scalar) -> "SpectralField":
        return SpectralField(self.grid, self._series * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self._series)

    def conj(self) -> "SpectralField":
        """Complex conjugate field."""
        return SpectralField(self.grid, np.conj(self._series[(-self.grid.modes) % self.grid.n_points]))

    def multiplier(self, symbol: np.ndarray) -> "SpectralField":
        """Apply a Fourier multiplier given as values on ``grid.k`` (FFT order)."""
        return SpectralField(self.grid, self._series * symbol)

    def shift(self, x0: float) -> "SpectralField":
        """Translate: returns ``u(x - x0)``."""
        return SpectralField(self.grid, self._series * np.exp(-1j * self.grid.k * x0))

    def norm(self) -> float:
        """L^2 norm on the torus."""
        return float(np.sqrt(self.grid.length * np.sum(np.abs(self._series) ** 2)))

    def mass(self) -> float:
        return self.norm() ** 2

    def sobolev_norm(self, s: float) -> float:
        """Inhomogeneous H^s norm with weight <k>^s."""
        w = (1.0 + self.grid.k**2) ** (0.5 * s)
        return float(np.sqrt(self.grid.length * np.sum((w * np.abs(self._series)) ** 2)))

    def mass_outside_center(self) -> float:
        """Fraction of mass outside the central half of the box (wrap guard)."""
        dens = np.abs(self.values) ** 2
        outside = np.abs(self.grid.x) >= 0.25 * self.grid.length
        total = dens.sum()
        return float(dens[outside].sum() / total) if total > 0 else 0.0

    def __repr__(self) -> str:
        return f"SpectralField(n={self.grid.n_points}, length={self.grid.length:g}, norm={self.norm():.3e})"


def make_grid(n_points: int, length: float) -> PeriodicGrid:
    """Build a periodic grid; ``n_points`` must be a power of two at least 8."""
    return PeriodicGrid(int(n_points) if float(n_points).is_integer() else n_points, float(length))


def to_spectral(field: SpectralField) -> np.ndarray:
    """Unitary coefficients in increasing-frequency order."""
    return field.coeffs


def to_physical(field: SpectralField) -> np.ndarray:
    """Physical samples."""
    return field.values


def derivative(field: SpectralField, order: int = 1) -> SpectralField:
    """``d^order/dx^order`` as the multiplier ``(ik)^order``; Nyquist zeroed for odd orders."""
    if order < 0:
        raise ValueError("order must be nonnegative")
    sym = (1j * field.grid.k) ** order
    if order % 2 == 1:
        sym = sym.copy()
        sym[field.grid.n_points // 2] = 0.0
    return field.multiplier(sym)
