import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dispersive_lab.densities import (
    DomainError, c4_localized_symbol, linear_flux_residual, localize, make_family, momentum_symbol,
    nonlinear_flux_residual,
)
from dispersive_lab.dispersion import galilean_shift, make_canonical, make_named
from dispersive_lab.division import to_xi
from dispersive_lab.forms import constant_symbol
from dispersive_lab.paley import build_frame
from dispersive_lab.spectral_field import SpectralField, make_grid
from conftest import random_field


@pytest.fixture(scope="module")
def torus():
    grid = make_grid(256, 16 * np.pi)
    return grid, build_frame(grid, 1.2)


@pytest.fixture(scope="module")
def smooth(torus):
    grid, _ = torus
    rng = np.random.default_rng(5)
    ser = (rng.normal(size=256) + 1j * rng.normal(size=256)) * np.exp(-(grid.k / 12.0) ** 2)
    return SpectralField.from_series(grid, ser)


def test_nls_momentum_values():
    d = make_named("nls")
    assert momentum_symbol(d, 1.0, 2.0) == pytest.approx(-3.0)
    xi = np.linspace(-5, 5, 11)
    assert np.allclose(momentum_symbol(d, xi, xi), -d.a1(xi))


@settings(max_examples=20, deadline=None)
@given(xi=st.floats(-30, 30), gamma=st.sampled_from([0.0, 1.0, -3.0, -2.5]))
def test_momentum_on_diagonal_is_minus_group_speed(xi, gamma):
    d = make_canonical(gamma)
    assert momentum_symbol(d, xi, xi) == pytest.approx(-d.a1(xi), rel=1e-10, abs=1e-12)


def test_half_wave_momentum_value():
    d = make_named("kleingordon_half_wave")
    assert momentum_symbol(d, 0.0, 1.0) == pytest.approx(1 - np.sqrt(2), abs=1e-12)


def test_reverse_momentum_needs_nonzero_momentum():
    fam = make_family(make_named("nls"))
    assert fam.p_check(np.array([5.0]), np.array([6.0]))[0] == pytest.approx(-1 / 11)
    with pytest.raises(DomainError):
        fam.p_check(np.array([1.0]), np.array([-1.0]))


def test_relative_momentum_never_vanishes_for_half_wave():
    fam = make_family(make_canonical(-3))
    r = np.linspace(-60, 60, 481)
    X, Y = np.meshgrid(r, r)
    for sign in (1, -1):
        assert np.min(np.abs(fam.p(X, Y, sign))) > 0
        fam.p_check(X, Y, sign)


def test_relative_densities_need_finite_speed():
    with pytest.raises(DomainError):
        make_family(make_named("nls")).speed(1)


@pytest.mark.parametrize("which", ["mass", "momentum"])
def test_nls_global_laws_exact(smooth, which):
    fam = make_family(make_named("nls"), smooth.grid)
    assert linear_flux_residual(fam, smooth, which)["relative"] < 1e-10


@pytest.mark.parametrize("which", ["mass", "momentum", "reverse"])
@pytest.mark.parametrize("sign", [None, 1, -1])
def test_half_wave_localized_laws(torus, smooth, which, sign):
    grid, frame = torus
    fam = make_family(make_named("kleingordon_half_wave"), grid)
    block = (1 if sign is None else sign, 9)
    assert linear_flux_residual(fam, smooth, which, block, frame, sign)["relative"] < 1e-10


def test_reverse_rejected_on_low_block(torus):
    grid, frame = torus
    fam = make_family(make_canonical(0), grid)
    with pytest.raises(DomainError):
        localize(fam, "p_check", (0, 0), frame)


@settings(max_examples=10, deadline=None)
@given(v=st.floats(-2, 2))
def test_galilean_covariance(v):
    grid = make_grid(256, 16 * np.pi)
    frame = build_frame(grid, 1.3)
    u = random_field(grid, np.random.default_rng(1), hi=30)
    d = make_canonical(-3)
    fam0, fam1 = make_family(d, grid), make_family(galilean_shift(d, v), grid)
    r = np.linspace(2, 20, 31)
    X, Y = np.meshgrid(r, r)
    assert np.allclose(fam1.p(X, Y), fam0.p(X, Y) + v * fam0.m(X, Y), atol=1e-12)
    a = linear_flux_residual(fam0, u, "mass", (1, 8), frame)["relative"]
    b = linear_flux_residual(fam1, u, "mass", (1, 8), frame)["relative"]
    assert a < 1e-10 and b < 1e-10


def test_quartic_source_vanishes_on_diagonal():
    grid = make_grid(64, 2 * np.pi)
    frame = build_frame(grid, 1.5, low_cut=5.1)
    fam = make_family(make_named("nls"), grid)
    sym = c4_localized_symbol(constant_symbol(1.0), fam, "mass", (1, 5), frame)
    xs = np.linspace(5, 11, 13)
    assert np.max(np.abs(sym(xs, xs, xs, xs))) < 1e-14
    h = 1e-4
    z = np.zeros_like(xs)
    for e in ((h, 0.0), (0.0, h)):
        plus, minus = to_xi(z + e[0], z + e[1], z, xs), to_xi(z - e[0], z - e[1], z, xs)
        grad = np.abs(sym(*plus) - sym(*minus)) / (2 * h)
        assert np.max(grad) < 1e-8


def test_quartic_source_support():
    grid = make_grid(64, 2 * np.pi)
    frame = build_frame(grid, 1.5, low_cut=5.1)
    fam = make_family(make_named("nls"), grid)
    sym = c4_localized_symbol(constant_symbol(1.0), fam, "mass", (1, 5), frame)
    lo, hi = frame.support((1, 5))
    pts = np.random.default_rng(0).uniform(hi + 0.1, 30, (3, 200))
    x4 = pts[0] - pts[1] + pts[2]
    far = (x4 > hi) | (x4 < lo)
    assert np.max(np.abs(sym(pts[0][far], pts[1][far], pts[2][far], x4[far]))) == 0.0


@pytest.mark.parametrize("which", ["mass", "momentum", "reverse"])
def test_cubic_nls_localized_law(which, rng):
    grid = make_grid(64, 2 * np.pi)
    frame = build_frame(grid, 1.5, low_cut=5.1)
    fam = make_family(make_named("nls"), grid)
    u = random_field(grid, rng, lo=3, hi=14, amplitude=0.1)
    r = nonlinear_flux_residual(constant_symbol(1.0), fam, u, which, (1, 6), frame)
    assert r["relative"] < 1e-8
    assert r["source_l2"] > 0


def test_zero_cubic_reduces_to_linear(rng):
    grid = make_grid(64, 2 * np.pi)
    frame = build_frame(grid, 1.5, low_cut=5.1)
    fam = make_family(make_named("nls"), grid)
    u = random_field(grid, rng, lo=3, hi=14)
    r = nonlinear_flux_residual(constant_symbol(0.0), fam, u, "mass", (1, 6), frame)
    lin = linear_flux_residual(fam, u, "mass", (1, 6), frame)
    assert r["source_l2"] == 0.0
    assert r["relative"] < 1e-10 and lin["relative"] < 1e-10


@pytest.mark.parametrize("sign", [1, -1])
def test_half_wave_relative_nonlinear_law(sign, rng):
    grid = make_grid(64, 2 * np.pi)
    frame = build_frame(grid, 1.5, low_cut=5.1)
    fam = make_family(make_canonical(-3), grid)
    u = random_field(grid, rng, hi=14, amplitude=0.1)
    r = nonlinear_flux_residual(constant_symbol(1.0), fam, u, "mass", (sign, 6), frame, sign)
    assert r["relative"] < 1e-8
