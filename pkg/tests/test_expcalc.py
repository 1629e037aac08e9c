from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from dispersive_lab.expcalc import (
    ExponentError, all_pass, as_fraction, audit_gwp, audit_lwp, critical_exponent, exponents, in_delta_gwp,
    in_delta_gwp_open, interpolation_exponent, lattice, lattice_report, lwp_exponent, table,
)

twelfths = st.integers(-48, 36).map(lambda n: F(n, 12)).filter(lambda g: g != -1)
deltas = st.integers(-24, 24).map(lambda n: F(n, 12))


def _case(audits, cid):
    return next(a for a in audits if a.case_id == cid)


def test_cubic_nls_exponents():
    assert critical_exponent(0, 0) == F(-1, 2)
    assert lwp_exponent(0, 0) == (F(0), False)


def test_half_wave_exponents():
    assert critical_exponent(-3, 0) == 1
    assert lwp_exponent(-3, 0) == (F(1, 2), True)


def test_low_branch():
    ex = exponents(-3, -1)
    assert ex.s_lwp == F(-5, 6) and ex.s_lwp_strict
    assert ex.range_flags["delta_gwp"]


def test_gamma_minus_one_rejected():
    with pytest.raises(ExponentError):
        critical_exponent(-1, 0)


def test_float_inputs_become_fractions():
    assert as_fraction(0.25) == F(1, 4)
    assert critical_exponent(0.0, 1 / 3) == F(0)


def test_local_audit_at_the_threshold():
    assert all_pass(audit_lwp(0, 0, 0))


def test_local_audit_below_threshold():
    audits = audit_lwp(0, 0, F(-1, 4))
    assert not _case(audits, "bal").passed


def test_non_dispersive_strictness_at_zero_delta():
    audits = audit_lwp(-3, 0, F(1, 2))
    assert not _case(audits, "nondisp_b").passed
    assert all_pass(audit_lwp(-3, 0, F(2, 3)))


def test_global_audit_inside_range():
    assert all_pass(audit_gwp(0, F(1, 2)))
    assert in_delta_gwp(0, F(1, 2))


def test_global_audit_lower_bound():
    audits = audit_gwp(0, F(1, 4))
    assert not _case(audits, "F4_nres_ii").passed


def test_global_audit_endpoint_is_strict():
    audits = audit_gwp(-3, F(-4, 3))
    assert not _case(audits, "F4_nres_ii").passed
    # the printed closed range contains the endpoint, the open one does not
    assert in_delta_gwp(-3, F(-4, 3)) and not in_delta_gwp_open(-3, F(-4, 3))


def test_interpolation_exponent():
    assert interpolation_exponent(0) == 2
    assert interpolation_exponent(F(1, 4)) == 4


@settings(max_examples=200, deadline=None)
@given(g=twelfths, d=deltas)
def test_gwp_conjunction_matches_open_range(g, d):
    assert all_pass(audit_gwp(g, d)) == in_delta_gwp_open(g, d)


@settings(max_examples=200, deadline=None)
@given(g=twelfths, d=deltas)
def test_threshold_orders_for_gamma_at_least_minus_two(g, d):
    if g < -2:
        return
    s_c, (s_lwp, _) = critical_exponent(g, d), lwp_exponent(g, d)
    assert s_lwp >= s_c
    assert (s_lwp == s_c) == (g == -2)


@settings(max_examples=100, deadline=None)
@given(g=twelfths, d=deltas, bump=st.integers(1, 24).map(lambda n: F(n, 12)))
def test_local_audit_monotone_in_s(g, d, bump):
    s, _ = lwp_exponent(g, d)
    if all_pass(audit_lwp(g, d, s)):
        assert all_pass(audit_lwp(g, d, s + bump))


def test_lattice_excludes_threshold():
    pts = list(lattice(F(1, 4), (-2, 0), (-1, 1)))
    assert all(g != -1 for g, _ in pts)
    assert len(pts) == 8 * 9


@pytest.fixture(scope="module")
def report():
    return lattice_report()


def test_lattice_gwp_clause(report):
    assert report["gwp"]["mismatch"] == 0
    assert report["gwp"]["printed_mismatch"] == 64


def test_lattice_order_clause_counts(report):
    # the printed thresholds fall below the scaling exponent for gamma < -2;
    # frozen here so that any change to the formulas shows up
    assert report["order"]["below"] == 1040
    assert report["order"]["equal_off_minus_two"] == 16
    assert F(report["order"]["below_gamma_max"]) < -2


@pytest.mark.xfail(strict=True, reason="the local audit at s_lwp disagrees with the endpoint strictness "
                                        "on two families of lattice points (see decisions ledger)")
def test_local_audit_agrees_with_endpoint_strictness(report):
    assert report["endpoint"]["mismatch"] == 0


def test_table_text():
    txt = table(0, 0)
    assert "-1/2" in txt and "s_lwp" in txt
