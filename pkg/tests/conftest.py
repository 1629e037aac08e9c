import numpy as np
import pytest

from dispersive_lab.spectral_field import SpectralField, make_grid


def random_field(grid, rng, lo=None, hi=None, amplitude=1.0):
    """Random trigonometric polynomial on modes ``lo..hi`` (all modes by default)."""
    m = np.fft.fftfreq(grid.n_points, 1.0 / grid.n_points)
    keep = np.ones_like(m, dtype=bool)
    if lo is not None:
        keep &= np.abs(m) >= lo
    if hi is not None:
        keep &= np.abs(m) <= hi
    keep &= np.abs(m) < grid.n_points // 2
    series = (rng.standard_normal(m.size) + 1j * rng.standard_normal(m.size)) * keep
    u = SpectralField.from_series(grid, series)
    return u * (amplitude / np.max(np.abs(u.values)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240)


@pytest.fixture
def grid32():
    return make_grid(32, 2 * np.pi)
