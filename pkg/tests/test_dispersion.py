import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dispersive_lab.dispersion import (
    asymptotic_velocities, galilean_shift, japanese, make_canonical, make_named, validate_relation,
)
from dispersive_lab.densities import momentum_symbol

XI = np.linspace(-40, 40, 801)


def test_canonical_zero_is_half_square():
    d = make_canonical(0)
    assert np.allclose(d.a(XI), XI ** 2 / 2)
    assert np.allclose(d.a2(XI), 1.0)


def test_canonical_minus_three_is_half_wave_up_to_affine():
    d = make_canonical(-3)
    # second derivative of sqrt(1+x^2) is <x>^-3 (symbolic oracle)
    h = 1e-3
    fd = (japanese(XI + h) - 2 * japanese(XI) + japanese(XI - h)) / h ** 2
    assert np.allclose(fd, japanese(XI) ** -3, rtol=1e-5, atol=1e-7)
    diff = d.a(XI) - japanese(XI)
    coef = np.polyfit(XI, diff, 1)
    assert np.max(np.abs(np.polyval(coef, XI) - diff)) < 1e-12


def test_gamma_minus_one_rejected():
    with pytest.raises(ValueError):
        make_canonical(-1)


@pytest.mark.parametrize("gamma", [1.0, 0.5, 0.0, -0.5, -2.0, -2.5, -3.0, -4.0])
def test_canonical_derivatives_consistent(gamma):
    d = make_canonical(gamma)
    rep = validate_relation(d, radius=64.0)
    assert rep["fd_err_a1"] < 1e-6 and rep["fd_err_a2"] < 1e-6
    assert d.a(0.0) == pytest.approx(0.0, abs=1e-14)
    assert d.a1(0.0) == pytest.approx(0.0, abs=1e-14)


def test_nls_values():
    d = make_named("nls")
    assert (d.a(2.0), d.a1(2.0), d.a2(2.0)) == pytest.approx((4.0, 4.0, 2.0))


def test_half_wave_speeds():
    d = make_named("kleingordon_half_wave")
    assert np.allclose(d.a1(XI), XI / japanese(XI))
    vp, vm, err = asymptotic_velocities(d)
    assert (vp, vm) == pytest.approx((-1.0, 1.0), abs=1e-10)
    assert err < 1e-8


def test_canonical_minus_three_speed_is_minus_one():
    vp, vm, _ = asymptotic_velocities(make_canonical(-3))
    assert vp == pytest.approx(-1.0, abs=1e-10)
    assert vm == pytest.approx(1.0, abs=1e-10)


def test_speeds_require_finite_speed_regime():
    with pytest.raises(ValueError):
        asymptotic_velocities(make_canonical(0))


def test_quartic_custom_rejected_near_origin():
    with pytest.raises(ValueError):
        make_named("custom", a=lambda x: x ** 4, a1=lambda x: 4 * x ** 3,
                   a2=lambda x: 12 * x ** 2, gamma=2.0)


def test_custom_canonical_like_accepted():
    d = make_named("custom", a=lambda x: np.asarray(x) ** 2, a1=lambda x: 2 * np.asarray(x),
                   a2=lambda x: 2 * np.ones_like(np.asarray(x, dtype=float)), gamma=0.0)
    assert d.a2(3.0) == 2.0


def test_shift_nls_by_two():
    d = galilean_shift(make_named("nls"), 2.0)
    assert np.allclose(d.a(XI), XI ** 2 - 2 * XI)
    assert np.allclose(d.a2(XI), 2.0)


@settings(max_examples=25, deadline=None)
@given(v=st.floats(-5, 5), gamma=st.sampled_from([0.0, -3.0, 1.0, -2.5]))
def test_shift_round_trip_and_curvature(v, gamma):
    d = make_canonical(gamma)
    s = galilean_shift(d, v)
    back = galilean_shift(s, -v)
    assert np.max(np.abs(back.a(XI) - d.a(XI))) <= 1e-14 * np.max(np.abs(d.a(XI))) + 1e-12
    assert np.array_equal(s.a2(XI), d.a2(XI))


@settings(max_examples=20, deadline=None)
@given(v=st.floats(-3, 3))
def test_momentum_shifts_by_velocity(v):
    d = make_canonical(-3)
    xi = np.linspace(0.5, 9.0, 17)
    eta = xi[::-1] + 0.3
    p0 = momentum_symbol(d, xi, eta)
    p1 = momentum_symbol(galilean_shift(d, v), xi, eta)
    assert np.allclose(p1, p0 + v, atol=1e-10)
