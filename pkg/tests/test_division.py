import numpy as np
import pytest

from dispersive_lab.densities import make_family
from dispersive_lab.dispersion import make_canonical, make_named
from dispersive_lab.division import (
    DivisionError, build_sharp, divide_balanced, divide_morawetz_balanced, divide_morawetz_semibalanced,
    invert_q, reconstruct_product, resonance_bracket, sharp_flux_residual, to_xi,
)
from dispersive_lab.forms import SymbolGrid, constant_symbol, eval_bilinear
from dispersive_lab.paley import build_frame
from dispersive_lab.spectral_field import derivative, make_grid
from conftest import random_field


@pytest.fixture(scope="module")
def frame():
    return build_frame(make_grid(512, 8 * np.pi), 1.5)


@pytest.fixture(scope="module")
def small():
    grid = make_grid(32, 2 * np.pi)
    return grid, build_frame(grid, 1.5, low_cut=5.1)


def test_zero_source_gives_zero_outputs(frame):
    zero = SymbolGrid(4, lambda *x: np.zeros(np.broadcast(*x).shape, dtype=complex))
    res = divide_balanced(zero, make_named("nls"), frame, (1, 8), certify_samples=500)
    pts = np.random.default_rng(0).uniform(15, 40, (4, 100))
    for sym in (res.b4, res.r4, res.q4bal, res.f4bal):
        assert np.max(np.abs(sym(*pts))) == 0.0


def test_cubic_nls_mass_division(frame):
    fam = make_family(make_named("nls"), frame.grid)
    sharp = build_sharp(constant_symbol(1.0), fam, "mass", (1, 8), frame, certify_samples=10_000)
    assert sharp.division.residual_norm < 1e-8
    # resonant part vanishes identically for this dispersion
    assert not sharp.division.has_resonant_part


def test_half_wave_negative_block_relative(frame):
    fam = make_family(make_canonical(-3), frame.grid)
    sharp = build_sharp(constant_symbol(1.0), fam, "mass", (-1, 8), frame, rel_sign=-1, certify_samples=10_000)
    assert sharp.division.residual_norm < 1e-6


def test_resonant_remainder_vanishes_to_second_order(frame):
    fam = make_family(make_canonical(1.0), frame.grid)
    sharp = build_sharp(constant_symbol(1.0), fam, "mass", (1, 8), frame, certify_samples=2000)
    f = sharp.division.f4bal
    lam = frame.lam(8)
    xs = np.linspace(lam / 1.4, lam * 1.4, 9)
    z = np.zeros_like(xs)
    ref = np.max(np.abs(sharp.c4(*np.random.default_rng(1).uniform(lam / 1.4, lam * 1.4, (4, 4000)))))
    assert np.max(np.abs(f(xs, xs, xs, xs))) < 1e-8 * ref
    h = 1e-3
    for e in ((h, 0.0), (0.0, h)):
        plus, minus = to_xi(z + e[0], z + e[1], z, xs), to_xi(z - e[0], z - e[1], z, xs)
        assert np.max(np.abs(f(*plus) - f(*minus))) / (2 * h) < 1e-8 * ref * lam


def test_bracket_vanishes_on_doubly_resonant_set():
    x = np.linspace(-5, 5, 11)
    assert np.all(resonance_bracket(x, x, x, x) == 0)


def test_linear_corrected_law(small, rng):
    grid, frm = small
    fam = make_family(make_named("nls"), grid)
    c = constant_symbol(0.0)
    sharp = build_sharp(c, fam, "mass", (1, 5), frm)
    u = random_field(grid, rng, lo=4, hi=12)
    r = sharp_flux_residual(c, sharp, u)
    assert r["relative"] < 1e-6
    assert r["correction_l2"] == 0.0 and r["r6_l2"] == 0.0


@pytest.mark.parametrize("name,sign", [("nls", None), ("canonical:-3", 1)])
def test_cubic_corrected_law(small, rng, name, sign):
    grid, frm = small
    d = make_named(name) if name == "nls" else make_canonical(-3)
    fam = make_family(d, grid)
    c = constant_symbol(1.0)
    sharp = build_sharp(c, fam, "mass", (1, 5), frm, rel_sign=sign)
    u = random_field(grid, rng, lo=4, hi=12, amplitude=0.05)
    r = sharp_flux_residual(c, sharp, u)
    assert r["relative"] < 1e-6
    assert r["correction_l2"] > 0


def test_nls_interaction_closed_form(frame):
    div = divide_morawetz_balanced(make_named("nls"), frame, (1, 8))
    assert div.residual < 1e-10
    x1, x2, x3 = np.random.default_rng(2).uniform(15, 40, (3, 500))
    x4 = x1 - x2 + x3
    ref = 4 * (x1 - x4) * (x2 - x3)
    assert np.allclose(div.j4(x1, x2, x3, x4), ref, rtol=1e-12, atol=1e-9)
    assert np.allclose(div.principal(x1, x2, x3, x4), ref, rtol=1e-12, atol=1e-9)
    assert np.allclose(div.q(x1, x2), 2.0)


def test_half_wave_interaction_symbol(frame):
    d = make_canonical(-3)
    div = divide_morawetz_balanced(d, frame, (1, 5), rel_sign=1)
    assert div.residual < 1e-6
    lo, hi = div.bands["q"]
    assert 0.25 <= lo and hi <= 4.0


def test_low_block_rejected(frame):
    with pytest.raises(DivisionError):
        divide_morawetz_balanced(make_canonical(-3), frame, (0, 0))


def test_semibalanced_nls(frame):
    div = divide_morawetz_semibalanced(make_named("nls"), frame, (1, 8), (1, 5))
    assert div.residual < 1e-6
    x, y = np.linspace(14, 30, 7), np.linspace(4, 11, 7)
    assert np.allclose(div.q(x, y), np.sqrt(2 * (x - y)))


def test_semibalanced_order_matters(frame):
    with pytest.raises(DivisionError):
        divide_morawetz_semibalanced(make_named("nls"), frame, (1, 5), (1, 8))


def test_semibalanced_mismatched_signs_rejected(frame):
    with pytest.raises(DivisionError):
        divide_morawetz_semibalanced(make_canonical(-3), frame, (1, 8), (-1, 5))


def test_invert_constant_q(frame):
    div = divide_morawetz_balanced(make_named("nls"), frame, (1, 8), certify_samples=None)
    out = invert_q(div.q, frame, (1, 8))
    assert out["q0_center"] == pytest.approx(0.5)
    assert out["kernel_l1"] == pytest.approx(0.5, abs=1e-12)


def test_invert_half_wave_kernel_size(frame):
    div = divide_morawetz_balanced(make_canonical(-3), frame, (1, 5), certify_samples=None)
    out = invert_q(div.q, frame, (1, 5))
    assert 1 / 8 <= out["normalized"] <= 8


def test_product_rebuilt_from_translated_outputs(small, rng):
    grid, frm = small
    div = divide_morawetz_balanced(make_canonical(-3), frm, (1, 5), certify_samples=None)
    u = random_field(grid, rng, lo=5, hi=11)
    rebuilt = reconstruct_product(div.q, u, u)
    one = SymbolGrid(2, lambda x, y: np.ones(np.broadcast(x, y).shape))
    ref = derivative(eval_bilinear(one, u, u)).series
    err = np.max(np.abs(derivative(rebuilt).series - ref)) / np.max(np.abs(ref))
    assert err < 1e-6
