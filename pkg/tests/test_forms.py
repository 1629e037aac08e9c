import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dispersive_lab.forms import (
    CubicSymbol, SymbolGrid, classify_interaction, constant_symbol, eval_bilinear, eval_quartic,
    eval_trilinear, functional, hermitian_defect, split_balanced, symmetrize4,
)
from dispersive_lab.paley import build_frame
from dispersive_lab.spectral_field import SpectralField, derivative, make_grid
from conftest import random_field


def _sep_bilinear(rng, rank=2):
    fs = []
    for _ in range(rank):
        a, b = rng.standard_normal(2)
        fs.append((lambda x, a=a: np.cos(a * x) + 1j * np.sin(0.1 * x),
                   lambda x, b=b: np.exp(-0.01 * b * b * x * x) + 0j))
    def func(x, y):
        return sum(f(x) * np.conj(g(y)) for f, g in fs)
    return SymbolGrid(2, func, separable=tuple(fs))


def test_unit_bilinear_is_pointwise_product(grid32, rng):
    u, v = random_field(grid32, rng, hi=10), random_field(grid32, rng, hi=10)
    out = eval_bilinear(SymbolGrid(2, lambda x, y: np.ones(np.broadcast(x, y).shape)), u, v)
    assert np.allclose(out.values[::2], u.values * np.conj(v.values), atol=1e-12)


def test_derivative_symbol(grid32, rng):
    u, v = random_field(grid32, rng, hi=10), random_field(grid32, rng, hi=10)
    out = eval_bilinear(SymbolGrid(2, lambda x, y: 1j * (x - y)), u, v)
    ref = eval_bilinear(SymbolGrid(2, lambda x, y: np.ones(np.broadcast(x, y).shape)), u, v)
    assert np.allclose(out.series, derivative(ref).series, atol=1e-10)


@pytest.mark.parametrize("n", [16, 32, 64])
def test_bilinear_fast_equals_naive(n, rng):
    grid = make_grid(n, 2 * np.pi)
    b = _sep_bilinear(rng)
    u, v = random_field(grid, rng), random_field(grid, rng)
    fast = eval_bilinear(b, u, v, fast=True).series
    naive = eval_bilinear(b, u, v, fast=False).series
    assert np.max(np.abs(fast - naive)) <= 1e-10 * np.max(np.abs(naive))


def test_single_mode_cubic(grid32):
    u = SpectralField.from_values(grid32, (0.5 + 0.2j) * np.exp(3j * grid32.x))
    out = eval_trilinear(constant_symbol(1.0), u)
    assert np.allclose(out.values, abs(0.5 + 0.2j) ** 2 * u.values, atol=1e-13)


@pytest.mark.parametrize("n", [16, 32, 64])
def test_trilinear_fast_equals_naive(n, rng):
    grid = make_grid(n, 2 * np.pi)
    u = random_field(grid, rng)
    c = constant_symbol(1.0)
    fast = eval_trilinear(c, u, fast=True).series
    naive = eval_trilinear(c, u, fast=False).series
    assert np.max(np.abs(fast - naive)) <= 1e-10 * np.max(np.abs(naive))


def test_output_frequency_symbol(grid32, rng):
    u = random_field(grid32, rng, hi=6)
    c = CubicSymbol(lambda a, b, d: a - b + d)
    out = eval_trilinear(c, u, truncate=False)
    ref = eval_trilinear(constant_symbol(1.0), u, truncate=False)
    assert np.allclose(out.series, (-1j * derivative(ref)).series, atol=1e-10)


def test_mass_functional(grid32, rng):
    u = random_field(grid32, rng)
    val = functional(SymbolGrid(2, lambda x, y: np.ones(np.broadcast(x, y).shape)), u, u)
    assert val.real == pytest.approx(u.norm() ** 2, rel=1e-12)


def test_quartic_functional_is_l4(grid32, rng):
    u = random_field(grid32, rng, hi=7)
    one = SymbolGrid(4, lambda *x: np.ones(np.broadcast(*x).shape))
    val = functional(one, u, u, u, u)
    fine = grid32.refined(4)
    w = SpectralField.from_series(grid32, u.series)
    from dispersive_lab.spectral_field import embed_series, series_to_values
    vals = series_to_values(fine, embed_series(w.series, fine.n_points))
    assert val.real == pytest.approx(np.sum(np.abs(vals) ** 4) * fine.dx, rel=1e-12)
    assert abs(val.imag) < 1e-12 * abs(val)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_real_symmetric_symbol_gives_real_functional(seed):
    grid = make_grid(16, 2 * np.pi)
    rng = np.random.default_rng(seed)
    u = random_field(grid, rng)
    b = SymbolGrid(4, lambda a, b, c, d: np.cos(a - d) * np.cos(b - c) + (a * b + c * d) * 0.01)
    assert hermitian_defect(b, [rng.standard_normal(20) for _ in range(4)]) < 1e-12
    val = functional(b, u, u, u, u)
    assert abs(val.imag) <= 1e-12 * max(1.0, abs(val))


def test_symmetrize_fixed_point():
    b = SymbolGrid(4, lambda a, b, c, d: np.ones(np.broadcast(a, b, c, d).shape))
    s = symmetrize4(b)
    pts = np.random.default_rng(1).standard_normal((4, 50))
    assert np.allclose(s(*pts), 1.0)


def test_symmetrize_first_coordinate():
    s = symmetrize4(SymbolGrid(4, lambda a, b, c, d: a + 0 * b))
    pts = np.random.default_rng(2).standard_normal((4, 50))
    assert np.allclose(s(*pts), pts.sum(axis=0) / 4)


def test_symmetrize_preserves_functional(rng):
    grid = make_grid(16, 2 * np.pi)
    u = random_field(grid, rng)
    f = lambda a, b, c, d: a * b - c * d + a ** 2 + b ** 2
    b = SymbolGrid(4, f)
    s = symmetrize4(b)
    assert functional(s, u, u, u, u).real == pytest.approx(functional(b, u, u, u, u).real, rel=1e-12)


def test_quartic_density_integrates_to_functional(rng):
    grid = make_grid(16, 2 * np.pi)
    u = random_field(grid, rng)
    b = SymbolGrid(4, lambda a, b, c, d: 1 + a * d)
    dens = eval_quartic(b, u, u, u, u)
    assert dens.series[0] * grid.length / np.sqrt(1) == pytest.approx(functional(b, u, u, u, u) * 1.0, rel=1e-10) \
        or np.mean(dens.values) * grid.length == pytest.approx(functional(b, u, u, u, u), rel=1e-10)


def test_classification():
    grid = make_grid(4096, 16 * np.pi)
    f = build_frame(grid, 1.2)
    lam = f.lam(10)
    assert classify_interaction(lam, lam, lam, lam, f) == ("balanced", True)
    mu = lam * 1.2 ** 5
    assert classify_interaction(lam, lam, mu, mu, f)[0] == "semi_balanced"
    assert classify_interaction(2.0, 2.0, 600.0, 600.0, f)[0] == "unbalanced"
    with pytest.raises(ValueError):
        classify_interaction(1.0, 2.0, 3.0, 7.0, f)


def test_split_balanced():
    f = build_frame(make_grid(1024, 16 * np.pi), 1.2)
    c = CubicSymbol(lambda a, b, d: 1.0 + 0.1 * a * 0 + 0 * b + 0 * d)
    cbal, ctr = split_balanced(c, f)
    assert cbal(50.0, 50.0, 50.0) == pytest.approx(1.0)
    assert ctr(50.0, 50.0, 50.0) == pytest.approx(0.0)
    assert cbal(5.0, 300.0, -200.0) == pytest.approx(0.0)
    pts = np.random.default_rng(3).uniform(-400, 400, (3, 500))
    assert np.allclose(cbal(*pts) + ctr(*pts), c(*pts), atol=1e-15)
