"""Exact exponent bookkeeping: critical and local thresholds, parameter ranges, dyadic case audits.

All arithmetic runs in :class:`fractions.Fraction`, so strict and non-strict
inequalities are decided exactly.  Floats are accepted and converted with a
bounded denominator.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Tuple, Union

__all__ = [
    "ExponentError",
    "ModelExponents",
    "Inequality",
    "CaseAudit",
    "as_fraction",
    "critical_exponent",
    "lwp_exponent",
    "exponents",
    "audit_lwp",
    "audit_gwp",
    "in_semilinear",
    "in_delta_main",
    "in_delta_gwp",
    "in_delta_gwp_open",
    "lattice",
    "lattice_report",
    "all_pass",
    "table",
    "LWP_CASES",
    "GWP_CASES",
    "interpolation_exponent",
]

Number = Union[int, float, Fraction, str]
THIRD = Fraction(1, 3)


class ExponentError(ValueError):
    """Excluded threshold ``gamma = -1`` or malformed input."""


def as_fraction(x: Number) -> Fraction:
    """Exact rational from int, Fraction, decimal string or float (denominator <= 10^6)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x).limit_denominator(10 ** 6)


def _gamma(gamma: Number) -> Fraction:
    g = as_fraction(gamma)
    if g == -1:
        raise ExponentError("gamma = -1 is the excluded threshold case")
    return g


def critical_exponent(gamma: Number, delta: Number) -> Fraction:
    """Scaling-critical Sobolev exponent ``(3 delta - gamma - 1) / 2``."""
    g, d = _gamma(gamma), as_fraction(delta)
    return (3 * d - g - 1) / 2


def lwp_exponent(gamma: Number, delta: Number) -> Tuple[Fraction, bool]:
    """Local threshold and whether the endpoint itself is excluded.

    Three branches: ``3d/2 - g/4`` for ``g >= -2``; ``3d/2 + 1/2`` for
    ``g < -2`` and ``d >= -2/3``; ``d + 1/6`` for ``g < -2`` and ``d < -2/3``.
    The endpoint is excluded when ``g <= -2`` and ``d = 0`` or ``d <= -2/3``.
    """
    g, d = _gamma(gamma), as_fraction(delta)
    if g >= -2:
        s = Fraction(3, 2) * d - g / 4
    elif d >= Fraction(-2, 3):
        s = Fraction(3, 2) * d + Fraction(1, 2)
    else:
        s = d + Fraction(1, 6)
    strict = g <= -2 and (d == 0 or d <= Fraction(-2, 3))
    return s, strict


def in_semilinear(gamma: Number, delta: Number) -> bool:
    g, d = _gamma(gamma), as_fraction(delta)
    return d <= g + 1 if g >= -1 else d <= 0


def in_delta_main(gamma: Number, delta: Number) -> bool:
    g, d = _gamma(gamma), as_fraction(delta)
    return (0 <= d <= g + 1) if g > -1 else (g + 1 <= d <= 0)


def in_delta_gwp(gamma: Number, delta: Number) -> bool:
    """Global range with its printed endpoints (closed below; open above for ``g > -1``)."""
    g, d = _gamma(gamma), as_fraction(delta)
    if g > -1:
        return THIRD * (g + 1) <= d < g + 1
    return Fraction(2, 3) * (g + 1) <= d <= 0


def in_delta_gwp_open(gamma: Number, delta: Number) -> bool:
    """Global range with every endpoint excluded."""
    g, d = _gamma(gamma), as_fraction(delta)
    if g > -1:
        return THIRD * (g + 1) < d < g + 1
    return Fraction(2, 3) * (g + 1) < d < 0


@dataclass(frozen=True)
class ModelExponents:
    gamma: Fraction
    delta: Fraction
    s_c: Fraction
    s_lwp: Fraction
    s_lwp_strict: bool
    range_flags: Dict[str, bool]

    def to_dict(self) -> dict:
        return {"gamma": str(self.gamma), "delta": str(self.delta), "s_c": str(self.s_c),
                "s_lwp": str(self.s_lwp), "s_lwp_strict": self.s_lwp_strict, "range_flags": dict(self.range_flags),
                "s_c_float": float(self.s_c), "s_lwp_float": float(self.s_lwp)}


def exponents(gamma: Number, delta: Number) -> ModelExponents:
    """All exponents and range flags for ``(gamma, delta)``."""
    g, d = _gamma(gamma), as_fraction(delta)
    s_lwp, strict = lwp_exponent(g, d)
    flags = {"semilinear": in_semilinear(g, d), "delta_main": in_delta_main(g, d), "delta_gwp": in_delta_gwp(g, d)}
    return ModelExponents(g, d, critical_exponent(g, d), s_lwp, strict, flags)


# audits ----------------------------------------------------------------------------------------

@dataclass(frozen=True)
class Inequality:
    """``value < 0`` (strict) or ``value <= 0``; ``expr`` names the left side."""

    expr: str
    value: Fraction
    strict: bool

    @property
    def satisfied(self) -> bool:
        return self.value < 0 if self.strict else self.value <= 0

    def row(self) -> tuple:
        return (self.expr + (" < 0" if self.strict else " <= 0"), self.value, self.satisfied, self.strict)


@dataclass
class CaseAudit:
    """One dyadic case: its inequalities and the tightest of them."""

    case_id: str
    applicable: bool
    inequalities: List[Inequality] = field(default_factory=list)
    extra: List[Tuple[str, bool]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        if not self.applicable:
            return True
        return all(q.satisfied for q in self.inequalities) and all(ok for _, ok in self.extra)

    @property
    def binding(self) -> Optional[Inequality]:
        if not self.inequalities:
            return None
        return max(self.inequalities, key=lambda q: (q.value, q.strict))

    def to_dict(self) -> dict:
        b = self.binding
        return {"case_id": self.case_id, "applicable": self.applicable, "passed": self.passed,
                "inequalities": [[r[0], str(r[1]), r[2], r[3]] for r in (q.row() for q in self.inequalities)],
                "extra": [list(e) for e in self.extra], "binding": None if b is None else b.expr}


def _le(expr, value):
    return Inequality(expr, Fraction(value), False)


def _lt(expr, value):
    return Inequality(expr, Fraction(value), True)


LWP_CASES = ("bal", "b1i", "b1ii", "b2i", "b2ii", "nondisp_a", "nondisp_b")
GWP_CASES = ("F4_res_a", "F4_res_b", "F4_nres_i", "F4_nres_ii", "F4_nres_iii")


def audit_lwp(gamma: Number, delta: Number, s: Number) -> List[CaseAudit]:
    """Dyadic summation constraints of the local theory at ``(gamma, delta, s)``.

    Dispersive cases apply for ``gamma >= -2`` (split at ``gamma = -1``),
    the non-dispersive ones for ``gamma <= -2``; both sets apply at ``-2``.
    """
    g, d, s = _gamma(gamma), as_fraction(delta), as_fraction(s)
    h = (g + 1) / 2
    out = [
        CaseAudit("bal", g >= -2, [_le("3d - 2s - g/2", 3 * d - 2 * s - g / 2)]),
        CaseAudit("b1i", g > -1, [_lt("d - g - 1", d - g - 1)]),
        CaseAudit("b1ii", -2 < g < -1, [_lt("d", d)]),
        CaseAudit("b2i", g > -1, [_lt("-2s + 2d - g - 1", -2 * s + 2 * d - g - 1),
                                  _lt("-3s + 3d - g - 1", -3 * s + 3 * d - g - 1),
                                  _lt("-s + 2d - g - 1", -s + 2 * d - g - 1)]),
        CaseAudit("b2ii", -2 <= g < -1, [_le("-2s + 2d", -2 * s + 2 * d),
                                         _lt("-3s + 3d - (g+1)/2", -3 * s + 3 * d - h),
                                         _lt("-s + 2d - (g+1)/2", -s + 2 * d - h)]),
    ]
    qa = [_le("d", d), _le("1/2 + d - s", Fraction(1, 2) + d - s)]
    out.append(CaseAudit("nondisp_a", g <= -2, qa, [("at least one strict", any(q.value < 0 for q in qa))]))
    out.append(CaseAudit("nondisp_b", g <= -2, [_le("-2s + 2d", -2 * s + 2 * d),
                                                _lt("-3s + 3d + 1/2", -3 * s + 3 * d + Fraction(1, 2)),
                                                _lt("-s + 2d + 1/2", -s + 2 * d + Fraction(1, 2)),
                                                _le("-2s + 3d + 1", -2 * s + 3 * d + 1)]))
    return out


def audit_gwp(gamma: Number, delta: Number) -> List[CaseAudit]:
    """Constraints of the unbalanced quartic source bounds on ``(gamma, delta)``."""
    g, d = _gamma(gamma), as_fraction(delta)
    up = g > -1
    res_a = CaseAudit("F4_res_a", up, [_le("-d", -d), _le("d - g - 1", d - g - 1)])
    res_b = CaseAudit("F4_res_b", not up, [_le("g + 1 - d", g + 1 - d), _le("d", d)])
    if up:
        nres_i = CaseAudit("F4_nres_i", True, [_le("-d", -d), _lt("d - g - 1", d - g - 1)])
        nres_ii = CaseAudit("F4_nres_ii", True, [_lt("(g+1)/3 - d", THIRD * (g + 1) - d)])
        nres_iii = CaseAudit("F4_nres_iii", True, [_lt("d - g - 1", d - g - 1)])
    else:
        nres_i = CaseAudit("F4_nres_i", True, [_le("g + 1 - d", g + 1 - d), _lt("d", d)])
        nres_ii = CaseAudit("F4_nres_ii", True, [_lt("2(g+1)/3 - d", Fraction(2, 3) * (g + 1) - d)])
        nres_iii = CaseAudit("F4_nres_iii", True, [_lt("d", d)])
    return [res_a, res_b, nres_i, nres_ii, nres_iii]


def all_pass(audits: Iterable[CaseAudit]) -> bool:
    return all(a.passed for a in audits)


def interpolation_exponent(sigma: Number) -> Fraction:
    """``1/r = sigma + (1 - 4 sigma)/2``; returns ``r``."""
    sg = as_fraction(sigma)
    inv = sg + (1 - 4 * sg) / 2
    if inv <= 0:
        raise ExponentError("sigma too large: 1/r must be positive")
    return 1 / inv


# lattice scans ----------------------------------------------------------------------------------

def lattice(step: Number = Fraction(1, 12), gamma_range=(-4, 3), delta_range=(-2, 2)):
    """Rational lattice points with ``gamma != -1``."""
    st = as_fraction(step)
    g0, g1 = map(as_fraction, gamma_range)
    d0, d1 = map(as_fraction, delta_range)
    ng = int((g1 - g0) / st)
    nd = int((d1 - d0) / st)
    for i in range(ng + 1):
        g = g0 + i * st
        if g == -1:
            continue
        for j in range(nd + 1):
            yield g, d0 + j * st


def lattice_report(step: Number = Fraction(1, 12), gamma_range=(-4, 3), delta_range=(-2, 2)) -> dict:
    """Exhaustive scan of the three lattice properties.

    * ``gwp``: audit conjunction against the range with its endpoints excluded
      (``mismatch``) and as printed (``printed_mismatch``, endpoint points);
    * ``order``: points with ``s_lwp < s_c`` and points with equality off ``gamma = -2``;
    * ``endpoint``: inside the global range, points where the local audit at
      ``s = s_lwp`` passes but the endpoint is excluded, or fails though allowed.
    """
    n = 0
    gwp_mis, gwp_printed = [], []
    below, eq_off = [], []
    end_mis = []
    for g, d in lattice(step, gamma_range, delta_range):
        n += 1
        ok = all_pass(audit_gwp(g, d))
        if ok != in_delta_gwp_open(g, d):
            gwp_mis.append((g, d))
        if ok != in_delta_gwp(g, d):
            gwp_printed.append((g, d))
        sc = critical_exponent(g, d)
        sl, strict = lwp_exponent(g, d)
        if sl < sc:
            below.append((g, d))
        elif sl == sc and g != -2:
            eq_off.append((g, d))
        if in_delta_gwp(g, d):
            passes = all_pass(audit_lwp(g, d, sl))
            if passes == strict:
                end_mis.append((g, d))

    def fmt(pts, k=8):
        return [[str(a), str(b)] for a, b in pts[:k]]
    return {
        "points": n,
        "gwp": {"mismatch": len(gwp_mis), "examples": fmt(gwp_mis), "printed_mismatch": len(gwp_printed),
                "printed_examples": fmt(gwp_printed)},
        "order": {"below": len(below), "below_examples": fmt(below), "below_gamma_max": str(max((g for g, _ in below), default=None)),
                  "equal_off_minus_two": len(eq_off), "equal_examples": fmt(eq_off)},
        "endpoint": {"mismatch": len(end_mis), "examples": fmt(end_mis)},
    }


def table(gamma: Number, delta: Number, s: Optional[Number] = None) -> str:
    """Human-readable constraint table."""
    ex = exponents(gamma, delta)
    s_val = ex.s_lwp if s is None else as_fraction(s)
    lines = [f"gamma = {ex.gamma}   delta = {ex.delta}",
             f"s_c   = {ex.s_c}  ({float(ex.s_c):.6g})",
             f"s_lwp = {ex.s_lwp}  ({float(ex.s_lwp):.6g}){'  endpoint excluded' if ex.s_lwp_strict else ''}",
             "ranges: " + ", ".join(f"{k}={v}" for k, v in ex.range_flags.items()),
             f"local audit at s = {s_val}:"]
    for a in audit_lwp(ex.gamma, ex.delta, s_val) + audit_gwp(ex.gamma, ex.delta):
        if not a.applicable:
            continue
        lines.append(f"  {a.case_id:12s} {'pass' if a.passed else 'FAIL'}")
        for q in a.inequalities:
            r = q.row()
            lines.append(f"      {r[0]:28s} value {str(r[1]):>8s}  {'ok' if r[2] else 'violated'}")
        for name, ok in a.extra:
            lines.append(f"      {name:28s} {'ok' if ok else 'violated'}")
        if a.case_id == "nondisp_b":
            lines.append("global audit:")
    return "\n".join(lines)
