"""Convex dispersion relations ``a(xi)`` with derivatives and asymptotic speeds.

The homogeneous flow is ``d/dt u_hat = -i a(xi) u_hat``.  A relation stores
vectorized callables for ``a``, ``a'``, ``a''`` and, when available, ``a'''``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

__all__ = [
    "DispersionRelation",
    "make_canonical",
    "make_named",
    "asymptotic_velocities",
    "galilean_shift",
    "validate_relation",
    "japanese",
]

VALIDATION_POINTS = 4096
GROWTH_BAND = 4.0


def japanese(xi):
    """``<xi> = sqrt(1 + xi^2)``."""
    return np.sqrt(1.0 + np.square(xi))


@dataclass(frozen=True)
class DispersionRelation:
    """Dispersion relation and its first derivatives.

    Attributes
    ----------
    a, a1, a2 : callable
        ``a``, ``a'`` and ``a''`` (vectorized).
    gamma : float
        Growth exponent, ``a'' ~ <xi>^gamma``.
    a3 : callable or None
        Third derivative when known in closed form.
    v_plus, v_minus : float or None
        Asymptotic group speeds ``-lim a'(+-inf)``; only for ``gamma < -1``.
    family_tag : str
        Constructor name, used in reports and configs.
    shift : float
        Accumulated Galilean velocity (``a -> a - shift*xi``).
    """

    a: Callable
    a1: Callable
    a2: Callable
    gamma: float
    a3: Optional[Callable] = None
    v_plus: Optional[float] = None
    v_minus: Optional[float] = None
    family_tag: str = "custom"
    shift: float = 0.0
    params: dict = field(default_factory=dict)

    @property
    def finite_speed(self) -> bool:
        """True in the Klein-Gordon-like regime ``gamma < -1``."""
        return self.gamma < -1

    def third(self, xi):
        """``a'''`` from the closed form or a 5-point stencil of ``a''``."""
        xi = np.asarray(xi, dtype=float)
        if self.a3 is not None:
            return self.a3(xi)
        h = 1e-3 * japanese(xi)
        return (-self.a2(xi + 2 * h) + 8 * self.a2(xi + h) - 8 * self.a2(xi - h) + self.a2(xi - 2 * h)) / (12 * h)


# canonical family ------------------------------------------------------------

def _canonical_parts(gamma: float):
    """Closed forms for the double primitive of ``<xi>^gamma``."""
    g = float(gamma)

    def a2(xi):
        return japanese(xi) ** g

    def a3(xi):
        xi = np.asarray(xi, dtype=float)
        return g * xi * japanese(xi) ** (g - 2)

    if g == 0.0:
        return (lambda xi: 0.5 * np.square(xi)), (lambda xi: np.asarray(xi, dtype=float) * 1.0), (lambda xi: np.ones_like(np.asarray(xi, dtype=float))), (lambda xi: np.zeros_like(np.asarray(xi, dtype=float)))
    if g == -3.0:
        return (lambda xi: japanese(xi) - 1.0), (lambda xi: np.asarray(xi) / japanese(xi)), a2, a3
    if g == 1.0:
        def a1(xi):
            return 0.5 * (xi * japanese(xi) + np.arcsinh(xi))

        def a(xi):
            return xi * a1(xi) - (japanese(xi) ** 3 - 1.0) / 3.0
        return a, a1, a2, a3

    def a1(xi):
        xi = np.asarray(xi, dtype=float)
        return xi * special.hyp2f1(0.5, -0.5 * g, 1.5, -np.square(xi))

    if g == -2.0:
        def a(xi):
            xi = np.asarray(xi, dtype=float)
            return xi * np.arctan(xi) - 0.5 * np.log1p(np.square(xi))
        return a, (lambda xi: np.arctan(xi)), a2, a3

    def a(xi):
        xi = np.asarray(xi, dtype=float)
        return xi * a1(xi) - (japanese(xi) ** (g + 2) - 1.0) / (g + 2)

    return a, a1, a2, a3


def _tail_integral(gamma: float, start: float) -> float:
    """``int_start^inf <r>^gamma dr`` for ``gamma < -1`` (start >= 0)."""
    val, _ = integrate.quad(lambda r: japanese(r) ** gamma, start, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    return float(val)


def _speeds_from_a1(a1: Callable, a2: Callable, gamma: float, cutoff: float):
    """``v_plus = -lim a'(+inf)``, ``v_minus = -lim a'(-inf)`` with a quadrature tail."""
    tail_p, _ = integrate.quad(a2, cutoff, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    tail_m, _ = integrate.quad(a2, -np.inf, -cutoff, epsabs=0.0, epsrel=1e-12, limit=200)
    v_plus = -(float(a1(cutoff)) + tail_p)
    v_minus = -(float(a1(-cutoff)) - tail_m)
    return v_plus, v_minus


def make_canonical(gamma: float) -> DispersionRelation:
    """Double primitive of ``<xi>^gamma`` vanishing to second order at 0.

    Parameters
    ----------
    gamma : float
        Growth exponent; ``-1`` is excluded.
    """
    gamma = float(gamma)
    if gamma == -1.0:
        raise ValueError("gamma = -1 is the excluded threshold case")
    a, a1, a2, a3 = _canonical_parts(gamma)
    vp = vm = None
    if gamma < -1:
        total = _tail_integral(gamma, 0.0)
        vp, vm = -total, total
    return DispersionRelation(a=a, a1=a1, a2=a2, a3=a3, gamma=gamma, v_plus=vp, v_minus=vm,
                              family_tag="canonical", params={"gamma": gamma})


def make_named(kind: str, *, a=None, a1=None, a2=None, gamma=None, a3=None,
               validation_radius: float = 64.0) -> DispersionRelation:
    """Named relations: ``nls`` (``xi^2``), ``kleingordon_half_wave`` or ``custom``.

    A custom relation must pass :func:`validate_relation` on a grid of radius
    ``validation_radius``.
    """
    if kind == "nls":
        return DispersionRelation(
            a=lambda xi: np.square(np.asarray(xi, dtype=float)),
            a1=lambda xi: 2.0 * np.asarray(xi, dtype=float),
            a2=lambda xi: np.full_like(np.asarray(xi, dtype=float), 2.0),
            a3=lambda xi: np.zeros_like(np.asarray(xi, dtype=float)),
            gamma=0.0, family_tag="nls")
    if kind == "kleingordon_half_wave":
        return DispersionRelation(
            a=japanese, a1=lambda xi: np.asarray(xi, dtype=float) / japanese(xi),
            a2=lambda xi: japanese(xi) ** -3.0,
            a3=lambda xi: -3.0 * np.asarray(xi, dtype=float) * japanese(xi) ** -5.0,
            gamma=-3.0, v_plus=-1.0, v_minus=1.0, family_tag="kleingordon_half_wave")
    if kind == "custom":
        if a is None or a1 is None or a2 is None or gamma is None:
            raise ValueError("custom relation needs a, a1, a2 and gamma")
        gamma = float(gamma)
        if gamma == -1.0:
            raise ValueError("gamma = -1 is the excluded threshold case")
        rel = DispersionRelation(a=a, a1=a1, a2=a2, a3=a3, gamma=gamma, family_tag="custom")
        validate_relation(rel, validation_radius)
        if gamma < -1:
            vp, vm = _speeds_from_a1(a1, a2, gamma, validation_radius)
            rel = replace(rel, v_plus=vp, v_minus=vm)
        return rel
    raise ValueError(f"unknown dispersion kind {kind!r}")


def validate_relation(d: DispersionRelation, radius: float, n: int = VALIDATION_POINTS,
                      kappa: float = GROWTH_BAND) -> dict:
    """Check convexity, growth comparability and derivative consistency.

    Returns the measured constants; raises ``ValueError`` on failure.
    """
    xi = np.linspace(-radius, radius, n)
    second = np.asarray(d.a2(xi), dtype=float)
    if np.any(~np.isfinite(second)) or np.any(second <= 0):
        raise ValueError("a'' must be positive on the validation grid")
    ratio = second / japanese(xi) ** d.gamma
    lo, hi = float(ratio.min()), float(ratio.max())
    if hi / lo > kappa ** 2 or lo < 1.0 / kappa or hi > kappa:
        raise ValueError(f"a''/<xi>^gamma leaves [1/{kappa}, {kappa}]: range [{lo:.3g}, {hi:.3g}]")
    h = 1e-4 * japanese(xi)
    fd1 = (d.a(xi + h) - d.a(xi - h)) / (2 * h)
    fd2 = (d.a1(xi + h) - d.a1(xi - h)) / (2 * h)
    scale1 = np.maximum(np.abs(d.a1(xi)), japanese(xi) ** (d.gamma + 1))
    err1 = float(np.max(np.abs(fd1 - d.a1(xi)) / scale1))
    err2 = float(np.max(np.abs(fd2 - second) / second))
    if err1 > 1e-6 or err2 > 1e-6:
        raise ValueError(f"derivatives inconsistent (rel errors {err1:.2e}, {err2:.2e})")
    return {"growth_lo": lo, "growth_hi": hi, "fd_err_a1": err1, "fd_err_a2": err2}


def asymptotic_velocities(d: DispersionRelation, cutoff: float = 64.0):
    """Asymptotic speeds ``(v_plus, v_minus) = -lim a'(+-inf)``.

    Computed as ``-a'(+-cutoff)`` plus the quadrature tail of ``a''`` beyond
    the cutoff.

    Returns
    -------
    tuple
        ``(v_plus, v_minus, tail_error)`` where the last entry compares the
        quadrature estimate with the stored value (zero for closed forms).
    """
    if d.gamma > -1:
        raise ValueError("asymptotic speeds exist only for gamma < -1")
    vp, vm = _speeds_from_a1(d.a1, d.a2, d.gamma, cutoff)
    if d.v_plus is None:
        return vp, vm, 0.0
    err = max(abs(vp - d.v_plus), abs(vm - d.v_minus))
    return d.v_plus, d.v_minus, err


def galilean_shift(d: DispersionRelation, v: float) -> DispersionRelation:
    """Moving frame: ``a -> a - v*xi``; speeds and momenta shift by ``v``."""
    a0, a10 = d.a, d.a1
    v = float(v)
    return replace(
        d,
        a=lambda xi: a0(xi) - v * np.asarray(xi, dtype=float),
        a1=lambda xi: a10(xi) - v,
        v_plus=None if d.v_plus is None else d.v_plus + v,
        v_minus=None if d.v_minus is None else d.v_minus + v,
        shift=d.shift + v,
    )
