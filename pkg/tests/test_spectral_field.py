import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dispersive_lab.spectral_field import (
    SpectralField, derivative, make_grid, to_physical, to_spectral,
)
from conftest import random_field


def test_grid_frequencies_small():
    g = make_grid(8, 2 * np.pi)
    assert sorted(g.frequencies.tolist()) == [-4, -3, -2, -1, 0, 1, 2, 3]


def test_grid_max_frequency():
    assert make_grid(16, np.pi).max_frequency == pytest.approx(16.0)


def test_odd_grid_rejected():
    with pytest.raises(ValueError):
        make_grid(7, 1.0)


def test_constant_field_is_zero_mode(grid32):
    u = SpectralField.from_values(grid32, np.ones(32))
    coeffs = to_spectral(u)
    assert np.count_nonzero(np.abs(coeffs) > 1e-12) == 1
    assert np.abs(u.series[0]) > 0


def test_plane_wave_single_coefficient(grid32):
    u = SpectralField.from_values(grid32, np.exp(3j * grid32.x))
    assert np.count_nonzero(np.abs(to_spectral(u)) > 1e-12) == 1


def test_round_trip(grid32, rng):
    vals = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    u = SpectralField.from_values(grid32, vals)
    back = SpectralField.from_coeffs(grid32, to_spectral(u))
    assert np.allclose(to_physical(back), vals, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.sampled_from([8, 16, 64, 128]),
       length=st.floats(0.5, 100.0))
def test_parseval(seed, n, length):
    grid = make_grid(n, length)
    vals = np.random.default_rng(seed).standard_normal(n) * (1 + 0j)
    u = SpectralField.from_values(grid, vals)
    direct = np.sqrt(np.sum(np.abs(vals) ** 2) * grid.dx)
    assert u.norm() == pytest.approx(direct, rel=1e-12)


def test_derivative_of_sine(grid32):
    u = SpectralField.from_values(grid32, np.sin(grid32.x))
    assert np.allclose(derivative(u).values, np.cos(grid32.x), atol=1e-12)


@pytest.mark.parametrize("order", [1, 2, 5])
def test_derivative_of_constant(grid32, order):
    u = SpectralField.from_values(grid32, 3.0 * np.ones(32))
    assert np.max(np.abs(derivative(u, order).values)) < 1e-12


def test_second_derivative_plane_wave(grid32):
    u = SpectralField.from_values(grid32, np.exp(2j * grid32.x))
    assert np.allclose(derivative(u, 2).values, -4 * np.exp(2j * grid32.x), atol=1e-12)


def test_negative_order_rejected(grid32):
    with pytest.raises(ValueError):
        derivative(SpectralField.from_values(grid32, np.ones(32)), -1)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), shift=st.integers(-16, 16), order=st.integers(0, 3))
def test_derivative_commutes_with_grid_shift(seed, shift, order):
    grid = make_grid(32, 2 * np.pi)
    u = random_field(grid, np.random.default_rng(seed))
    x0 = shift * grid.dx
    a = derivative(u.shift(x0), order).series
    b = derivative(u, order).shift(x0).series
    assert np.allclose(a, b, atol=1e-12 * np.max(np.abs(b)) + 1e-14)


def test_grid_shift_is_roll(grid32, rng):
    u = random_field(grid32, rng)
    assert np.allclose(u.shift(3 * grid32.dx).values, np.roll(u.values, 3), atol=1e-12)


def test_mismatched_grids_rejected(grid32):
    u = SpectralField.from_values(grid32, np.ones(32))
    v = SpectralField.from_values(make_grid(32, np.pi), np.ones(32))
    with pytest.raises(ValueError):
        u + v
