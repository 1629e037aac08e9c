import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dispersive_lab.dispersion import make_canonical, make_named
from dispersive_lab.forms import SymbolGrid, constant_symbol, eval_bilinear
from dispersive_lab.morawetz import (
    MorawetzError, balanced_identity, half_plane_pairing, semibalanced_identity, translation_family_data,
    unbalanced_identity,
)
from dispersive_lab.morawetz import balanced_setup
from dispersive_lab.paley import build_frame, project
from dispersive_lab.spectral_field import SpectralField, derivative, make_grid


def _bump(grid, centre, width=0.5):
    return SpectralField.from_values(grid, np.exp(-((grid.x - centre) / width) ** 2) + 0j)


@pytest.fixture(scope="module")
def grid():
    return make_grid(256, 16 * np.pi)


def test_pairing_right_of(grid):
    f, g = _bump(grid, 5.0), _bump(grid, -5.0)
    If, Ig = f.series[0] * grid.length, g.series[0] * grid.length
    assert half_plane_pairing(f, g).real == pytest.approx((If * Ig).real, rel=1e-10)


def test_pairing_left_of(grid):
    f, g = _bump(grid, -5.0), _bump(grid, 5.0)
    assert abs(half_plane_pairing(f, g)) < 1e-10


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-15, 15), b=st.floats(-15, 15), w=st.floats(0.6, 2.0))
def test_pairing_antisymmetry(a, b, w):
    grid = make_grid(256, 16 * np.pi)
    f, g = _bump(grid, a, w), _bump(grid, b, w)
    total = f.series[0] * g.series[0] * grid.length ** 2
    s = half_plane_pairing(f, g) + half_plane_pairing(g, f)
    # the only defect is the boundary value at the box edge, which is negligible here
    assert abs(s - total) < 1e-8 * abs(total)


def test_pairing_needs_length():
    with pytest.raises(ValueError):
        half_plane_pairing(np.ones(4), np.ones(4))


@pytest.fixture(scope="module")
def wide():
    g = make_grid(512, 64 * np.pi)
    return build_frame(g, 1.5)


@pytest.mark.parametrize("name", ["nls", "canonical:1", "kleingordon_half_wave"])
def test_balanced_linear_identity(wide, name):
    d = make_named(name) if ":" not in name else make_canonical(float(name.split(":")[1]))
    x0 = wide.grid.length / 8
    u0 = translation_family_data(d, wide, [(1, 2)], x0, 2.0)
    acc = balanced_identity(d, None, u0, wide, (1, 2), x0=x0, t_end=2.0, n_panels=4)
    assert acc.identity_residual < 1e-6
    assert acc.monotone
    assert np.all(np.diff(acc.I_sharp_series) >= -1e-12 * max(abs(v) for v in acc.I_sharp_series))


def test_nls_principal_term_is_four_times_product_derivative(wide):
    d = make_named("nls")
    u0 = translation_family_data(d, wide, [(1, 2)], 3.0, 1.0)
    v0 = u0.shift(3.0)
    setup = balanced_setup(d, wide, (1, 2), None, corrected=False)
    ul, vl = project(wide, u0, 1, 2), project(wide, v0, 1, 2)
    one = SymbolGrid(2, lambda x, y: np.ones(np.broadcast(x, y).shape))
    ref = 4 * derivative(eval_bilinear(one, ul, vl)).norm() ** 2
    assert setup.principal(u0, v0) == pytest.approx(ref, rel=1e-10)


def test_semibalanced_linear_identity(wide):
    d = make_canonical(0)
    u0 = translation_family_data(d, wide, [(1, 4), (1, 1)], 0.0, 2.0)
    acc = semibalanced_identity(d, None, u0, wide, (1, 4), (1, 1), t_end=2.0, n_panels=4)
    assert acc.identity_residual < 1e-6 and acc.monotone


def test_semibalanced_swapped_blocks_rejected(wide):
    d = make_canonical(0)
    u0 = translation_family_data(d, wide, [(1, 4), (1, 1)], 0.0, 2.0)
    with pytest.raises(MorawetzError):
        semibalanced_identity(d, None, u0, wide, (1, 1), (1, 4), t_end=1.0)


def test_semibalanced_mismatched_signs_rejected(wide):
    d = make_canonical(-3)
    u0 = translation_family_data(d, wide, [(1, 4), (-1, 1)], 0.0, 2.0)
    with pytest.raises(MorawetzError):
        semibalanced_identity(d, None, u0, wide, (1, 4), (-1, 1), t_end=1.0)


@pytest.fixture(scope="module")
def ladder():
    return build_frame(make_grid(8192, 128 * np.pi), 1.2, low_cut=1.5)


@pytest.mark.parametrize("gamma", [0.0, -3.0])
def test_unbalanced_smallness(ladder, gamma):
    d = make_canonical(gamma)
    lam, mu = ladder.lam(19), ladder.lam(4)
    assert lam == pytest.approx(32, rel=0.01) and mu == pytest.approx(2, rel=0.05)
    u0 = translation_family_data(d, ladder, [(1, 19), (1, 4)], 0.0, 1.0)
    acc = unbalanced_identity(d, None, u0, ladder, (1, 19), (1, 4), t_end=1.0, n_panels=2)
    assert acc.identity_residual < 1e-6
    bound = (mu / lam) ** (gamma + 1) if gamma > -1 else (lam / mu) ** (gamma + 1)
    assert acc.smallness["ratio"] <= 4 * bound


def test_mismatched_prefactor(ladder):
    d = make_named("kleingordon_half_wave")
    u0 = translation_family_data(d, ladder, [(1, 15), (-1, 15)], 0.0, 1.0)
    acc = unbalanced_identity(d, None, u0, ladder, (1, 15), (-1, 15), t_end=1.0, n_panels=2)
    assert acc.regime == "gkg_mismatched"
    assert acc.principal_prefactor == pytest.approx(2.0, abs=1e-10)
    assert acc.identity_residual < 1e-6 and acc.monotone


def test_unbalanced_needs_separation(ladder):
    d = make_canonical(0)
    u0 = translation_family_data(d, ladder, [(1, 8), (1, 4)], 0.0, 1.0)
    with pytest.raises(MorawetzError):
        unbalanced_identity(d, None, u0, ladder, (1, 8), (1, 4), t_end=1.0)


def test_block_outside_frame_rejected(wide):
    d = make_named("nls")
    u0 = translation_family_data(d, wide, [(1, 2)], 0.0, 1.0)
    with pytest.raises(MorawetzError):
        balanced_identity(d, None, u0, wide, (1, 99), t_end=1.0)


def test_six_linear_terms_refused_on_large_grids(wide):
    d = make_named("nls")
    u0 = translation_family_data(d, wide, [(1, 2)], 0.0, 1.0, amplitude=0.01)
    with pytest.raises(MorawetzError):
        balanced_identity(d, constant_symbol(1.0), u0, wide, (1, 2), t_end=0.1)
