"""Mass, momentum, energy and reverse-momentum densities and their flux laws.

Bilinear density symbols ``x(xi, eta)`` act on ``(u, conj u)``.  Under the
homogeneous flow ``d/dt u_hat = -i a u_hat`` the symbols satisfy

    mass:      d/dt M  = d/dx P
    momentum:  d/dt P  = d/dx E
    reverse:   d/dt Pc = d/dx M        (Pc has symbol 1/p)

and, in the finite-speed regime, the same laws for the transport derivative
``d/dt - v d/dx`` with the relative symbols ``p - v``, ``(p - v)^2`` and
``1/(p - v)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dispersion import DispersionRelation
from .forms import (CubicSymbol, SymbolGrid, density_series, eval_trilinear, gauss_legendre, slot_data)
from .paley import LPFrame
from .spectral_field import PeriodicGrid, SpectralField, embed_series

__all__ = [
    "DomainError",
    "DensityFamily",
    "LocalizedDensity",
    "momentum_symbol",
    "reverse_momentum_symbol",
    "divided_difference",
    "make_family",
    "localize",
    "linear_flux_residual",
    "c4_localized_symbol",
    "c4_terms",
    "nonlinear_flux_residual",
    "bilinear_density",
    "quartic_density",
    "time_derivative_field",
    "KINDS",
]

KINDS = ("mass", "momentum", "reverse")


class DomainError(ValueError):
    """A density was requested where its symbol is undefined."""


def divided_difference(f: Callable, df: Callable, x, y, eps: float):
    """``(f(x) - f(y)) / (x - y)`` with a Gauss-Legendre mean of ``df`` near the diagonal."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    out = np.empty(x.shape, dtype=float)
    diff = x - y
    close = np.abs(diff) < eps
    far = ~close
    if np.any(far):
        out[far] = (f(x[far]) - f(y[far])) / diff[far]
    if np.any(close):
        t, w = gauss_legendre(16)
        xs = y[close][:, None] + t[None, :] * diff[close][:, None]
        out[close] = df(xs) @ w
    return out


def momentum_symbol(d: DispersionRelation, xi, eta, eps_diag: float = 0.05):
    """``p = -(a(xi) - a(eta)) / (xi - eta)``, equal to ``-a'(xi)`` on the diagonal."""
    return -divided_difference(d.a, d.a1, xi, eta, eps_diag)


def reverse_momentum_symbol(d: DispersionRelation, xi, eta, eps_diag: float = 0.05, p_floor: float = 1e-6):
    """``1/p``; raises :class:`DomainError` where ``|p| <= p_floor``."""
    p = momentum_symbol(d, xi, eta, eps_diag)
    if np.any(np.abs(p) <= p_floor):
        raise DomainError("momentum symbol vanishes; reverse momentum is undefined here")
    return 1.0 / p


@dataclass(frozen=True)
class DensityFamily:
    """Density symbols attached to a dispersion relation.

    Relative variants (``sign`` = +1 or -1) subtract the asymptotic speed
    ``v_plus`` or ``v_minus``; they exist only for ``gamma < -1``.
    """

    d: DispersionRelation
    eps_diag: float = 0.05
    p_floor: float = 1e-6

    def speed(self, sign: Optional[int]) -> float:
        if sign is None or sign == 0:
            return 0.0
        if not self.d.finite_speed:
            raise DomainError("relative densities exist only for gamma < -1")
        return float(self.d.v_plus if sign > 0 else self.d.v_minus)

    def m(self, xi, eta):
        return np.ones(np.broadcast(xi, eta).shape)

    def p(self, xi, eta, sign=None):
        return momentum_symbol(self.d, xi, eta, self.eps_diag) - self.speed(sign)

    def e(self, xi, eta, sign=None):
        return np.square(self.p(xi, eta, sign))

    def p_check(self, xi, eta, sign=None):
        p = self.p(xi, eta, sign)
        if np.any(np.abs(p) <= self.p_floor):
            raise DomainError("momentum symbol vanishes; reverse momentum is undefined here")
        return 1.0 / p

    def symbol(self, name: str, sign=None) -> Callable:
        """Callable symbol by name: ``m``, ``p``, ``e`` or ``p_check``."""
        if name == "m":
            return self.m
        if name in ("p", "e", "p_check"):
            f = getattr(self, name)
            return lambda xi, eta: f(xi, eta, sign)
        raise ValueError(f"unknown density {name!r}")

    def grid_symbol(self, name: str, sign=None) -> SymbolGrid:
        order = {"m": 0.0, "p": self.d.gamma + 1, "e": 2 * (self.d.gamma + 1),
                 "p_check": -(self.d.gamma + 1)}[name]
        return SymbolGrid(2, self.symbol(name, sign), order_weight=order, tag=name)


def make_family(d: DispersionRelation, grid: Optional[PeriodicGrid] = None, **kw) -> DensityFamily:
    """Family with ``eps_diag = 4*dk`` when a grid is supplied."""
    if grid is not None and "eps_diag" not in kw:
        kw["eps_diag"] = 4.0 * grid.dk
    return DensityFamily(d, **kw)


# kind bookkeeping: density and flux symbol names
_LAW = {"mass": ("m", "p"), "momentum": ("p", "e"), "reverse": ("p_check", "m")}


@dataclass(frozen=True)
class LocalizedDensity:
    """Density localized to one block: symbol ``phi(xi) phi(eta) x(xi, eta)``."""

    family: DensityFamily
    base: str
    block: tuple
    frame: LPFrame
    sign: Optional[int] = None

    def phi(self, xi):
        return self.frame.bump(self.block, xi)

    def psi(self, xi, eta):
        return self.phi(xi) * self.phi(eta)

    @property
    def window(self):
        lo, hi = self.frame.support(self.block)
        xmax = self.frame.grid.max_frequency
        return (max(lo, -xmax), min(hi, xmax))

    def func(self, xi, eta):
        xi, eta = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(eta, dtype=float))
        psi = self.psi(xi, eta)
        out = np.zeros(xi.shape)
        nz = psi != 0
        if np.any(nz):
            out[nz] = psi[nz] * self.family.symbol(self.base, self.sign)(xi[nz], eta[nz])
        return out

    def grid_symbol(self) -> SymbolGrid:
        w = self.window
        base = self.family.grid_symbol(self.base, self.sign)
        return SymbolGrid(2, self.func, windows=(w, w), order_weight=base.order_weight,
                          tag=f"{self.base}_loc{self.block}")

    def magnitude_band(self, n: int = 33):
        """Range of ``|x| / lambda^order`` on the block square (unweighted base symbol)."""
        sgn, k = self.block
        lo, hi = self.frame.step ** (k - 1), self.frame.step ** (k + 1)
        r = np.linspace(lo, hi, n) * (sgn if sgn else 1)
        X, Y = np.meshgrid(r, r, indexing="ij")
        vals = np.abs(self.family.symbol(self.base, self.sign)(X, Y))
        lam = self.frame.lam(k)
        order = self.family.grid_symbol(self.base, self.sign).order_weight
        ratio = vals / lam ** order
        return float(ratio.min()), float(ratio.max())


def localize(fam: DensityFamily, base: str, block, frame: LPFrame, sign=None, check_reverse: bool = True) -> LocalizedDensity:
    """Localize a density to ``block``; guards the reverse momentum's domain."""
    loc = LocalizedDensity(fam, base, tuple(block), frame, sign)
    if base == "p_check" and check_reverse:
        sgn, k = block
        if k == 0:
            raise DomainError("reverse momentum is not defined on the low block")
        lo, hi = frame.step ** (k - 1), frame.step ** (k + 1)
        r = np.linspace(lo, hi, 65) * sgn
        X, Y = np.meshgrid(r, r, indexing="ij")
        p = fam.p(X, Y, sign)
        lam = frame.lam(k)
        if np.min(np.abs(p)) <= max(fam.p_floor, 1e-3 * lam ** (fam.d.gamma + 1)):
            raise DomainError(f"momentum symbol comes close to zero on block {block}")
    return loc


# evaluation helpers ------------------------------------------------------------

def bilinear_density(func: Callable, u: SpectralField, v: SpectralField, window=None) -> np.ndarray:
    """Exact density coefficients of ``X(u, conj v)`` on the 2x grid (FFT order)."""
    grid = u.grid
    slots = [slot_data(u.series, grid, False, window), slot_data(v.series, grid, True, window)]
    return density_series(func, slots, grid.dk, 2 * grid.n_points)


def quartic_density(func: Callable, fields, windows=None, tensor=None, n_out=None) -> np.ndarray:
    """Exact density coefficients of a quartic form on the 4x grid (FFT order)."""
    grid = fields[0].grid
    windows = windows or (None,) * 4
    keep = tensor is not None
    slots = [slot_data(f.series, grid, j % 2 == 1, windows[j], keep_zeros=keep) for j, f in enumerate(fields)]
    return density_series(func, slots, grid.dk, n_out or 4 * grid.n_points, tensor=tensor)


def _dx(series: np.ndarray, dk: float) -> np.ndarray:
    n = series.shape[-1]
    modes = np.fft.fftfreq(n, 1.0 / n)
    return 1j * dk * modes * series


def _l2(series: np.ndarray, length: float) -> float:
    return float(np.sqrt(length * np.sum(np.abs(series) ** 2)))


def _l1(series: np.ndarray, length: float) -> float:
    vals = np.fft.ifft(series) * series.shape[-1]
    return float(np.mean(np.abs(vals)) * length)


def time_derivative_field(d: DispersionRelation, c: Optional[CubicSymbol], u: SpectralField) -> SpectralField:
    """Right side of the equation, ``-i a(D) u - i C(u)`` (dealiased)."""
    lin = u.multiplier(-1j * d.a(u.grid.k))
    if c is None:
        return lin
    return lin + eval_trilinear(c, u) * (-1j)


def _law(fam, loc_or_none, kind, sign, block, frame):
    dens_name, flux_name = _LAW[kind]
    if block is None:
        if kind == "reverse":
            raise DomainError("reverse momentum needs a high-frequency block")
        X = fam.symbol(dens_name, sign)
        Y = fam.symbol(flux_name, sign)
        return X, Y, None
    X = localize(fam, dens_name, block, frame, sign)
    Y = localize(fam, flux_name, block, frame, sign, check_reverse=False)
    return X.func, Y.func, X.window


def linear_flux_residual(fam: DensityFamily, u: SpectralField, which: str = "mass", block=None,
                         frame: Optional[LPFrame] = None, sign: Optional[int] = None):
    """Residual of a linear density-flux law, no time differencing.

    Parameters
    ----------
    which : {"mass", "momentum", "reverse"}
    block, frame : optional
        Localize to ``block`` of ``frame``.
    sign : {None, +1, -1}
        Use the relative symbols and transport derivative with ``v_sign``.

    Returns
    -------
    dict
        ``residual`` (coefficients on the 2x grid), ``l2`` and ``l1`` norms,
        ``scale`` (L2 norm of the time-derivative term) and ``relative``.
    """
    if which not in KINDS:
        raise ValueError(f"which must be one of {KINDS}")
    if which == "reverse" and not fam.d.finite_speed and block is not None and block[1] == 0:
        raise DomainError("reverse momentum is undefined at low frequency")
    X, Y, win = _law(fam, None, which, sign, block, frame)
    ut = u.multiplier(-1j * fam.d.a(u.grid.k))
    dt_dens = bilinear_density(X, ut, u, win) + bilinear_density(X, u, ut, win)
    v = fam.speed(sign)
    dens = bilinear_density(X, u, u, win)
    flux = bilinear_density(Y, u, u, win)
    dk = u.grid.dk
    res = dt_dens - v * _dx(dens, dk) - _dx(flux, dk)
    L = u.grid.length
    scale = max(_l2(dt_dens - v * _dx(dens, dk), L), _l2(_dx(flux, dk), L), 1e-300)
    return {"residual": res, "l2": _l2(res, L), "l1": _l1(res, L), "scale": scale,
            "relative": _l2(res, L) / scale}


# quartic source -------------------------------------------------------------------

def _weight_func(fam: DensityFamily, which: str, block, frame: LPFrame, sign=None) -> Callable:
    name = _LAW[which][0]
    loc = localize(fam, name, block, frame, sign) if which == "reverse" else LocalizedDensity(fam, name, tuple(block), frame, sign)
    return loc.func


def c4_terms(c: CubicSymbol, fam: DensityFamily, which: str, block, frame: LPFrame, sign=None):
    """The four terms of the symmetrized quartic source as ``(func, windows)`` pairs.

    Each term is supported where one specific slot lies in the block, which
    the evaluation exploits.
    """
    W = _weight_func(fam, which, block, frame, sign)
    lo, hi = frame.support(block)
    xmax = frame.grid.max_frequency
    win = (max(lo, -xmax), min(hi, xmax))
    cf = c.c

    def t1(x1, x2, x3, x4):
        return -0.5j * W(x4, x1 - x2 + x3) * cf(x1, x2, x3)

    def t2(x1, x2, x3, x4):
        return -0.5j * W(x2, x1 - x4 + x3) * cf(x1, x4, x3)

    def t3(x1, x2, x3, x4):
        return 0.5j * W(x1, x2 - x3 + x4) * np.conj(cf(x2, x3, x4))

    def t4(x1, x2, x3, x4):
        return 0.5j * W(x3, x2 - x1 + x4) * np.conj(cf(x2, x1, x4))

    return [(t1, (None, None, None, win)), (t2, (None, win, None, None)),
            (t3, (win, None, None, None)), (t4, (None, None, win, None))]


def c4_localized_symbol(c: CubicSymbol, fam: DensityFamily, which: str, block, frame: LPFrame, sign=None) -> SymbolGrid:
    """Quartic source symbol of the localized density ``which`` on ``block``.

    ``(i/2) [ -W(x4, x1-x2+x3) c(x1,x2,x3) - W(x2, x1-x4+x3) c(x1,x4,x3)
              + W(x1, x2-x3+x4) conj c(x2,x3,x4) + W(x3, x2-x1+x4) conj c(x2,x1,x4) ]``
    with ``W`` the localized density symbol.
    """
    if which not in KINDS:
        raise ValueError(f"which must be one of {KINDS}")
    terms = c4_terms(c, fam, which, block, frame, sign)

    def func(x1, x2, x3, x4):
        return sum(t(x1, x2, x3, x4) for t, _ in terms)
    return SymbolGrid(4, func, order_weight=3 * c.delta, tag=f"c4_{which}{tuple(block)}")


def c4_density(c: CubicSymbol, fam: DensityFamily, which: str, block, frame: LPFrame, u: SpectralField, sign=None) -> np.ndarray:
    """Density coefficients of the quartic source on the 4x grid."""
    out = np.zeros(4 * u.grid.n_points, dtype=complex)
    for t, wins in c4_terms(c, fam, which, block, frame, sign):
        out += quartic_density(t, (u, u, u, u), wins)
    return out


def nonlinear_flux_residual(c: CubicSymbol, fam: DensityFamily, u: SpectralField, which: str, block,
                            frame: LPFrame, sign: Optional[int] = None):
    """Residual of ``(d/dt - v d/dx) X_block = d/dx Y_block + C4`` along the full flow.

    The time derivative is formed from the equation's right side; the
    identity is exact whenever the block sits inside the resolved band.
    """
    X, Y, win = _law(fam, None, which, sign, block, frame)
    ut = time_derivative_field(fam.d, c, u)
    dt_dens = bilinear_density(X, ut, u, win) + bilinear_density(X, u, ut, win)
    n4 = 4 * u.grid.n_points
    dt4 = embed_series(dt_dens, n4)
    dens = embed_series(bilinear_density(X, u, u, win), n4)
    flux = embed_series(bilinear_density(Y, u, u, win), n4)
    src = c4_density(c, fam, which, block, frame, u, sign)
    v = fam.speed(sign)
    dk = u.grid.dk
    lhs = dt4 - v * _dx(dens, dk)
    res = lhs - _dx(flux, dk) - src
    L = u.grid.length
    scale = max(_l2(lhs, L), 1e-300)
    return {"residual": res, "l2": _l2(res, L), "l1": _l1(res, L), "scale": scale,
            "relative": _l2(res, L) / scale, "source_l2": _l2(src, L)}
