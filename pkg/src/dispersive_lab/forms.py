"""Translation-invariant multilinear forms with alternating conjugation.

A k-linear form with symbol ``b`` acts on fields ``u1, ..., uk`` as

    B(u1, conj u2, u3, ...)(x) = sum b(xi1, ..., xik) ut1(xi1) conj(ut2(xi2)) ... exp(i zeta x)

with ``zeta = xi1 - xi2 + xi3 - ...`` and ``ut`` the Fourier-series
coefficients.  Outputs of bilinear and quartic forms are returned on a
zero-padded grid wide enough to hold every output frequency, so densities are
exact rather than aliased.  Integrals use ``int_torus B dx = length * B_hat(0)``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .paley import LPFrame, smooth_step
from .spectral_field import PeriodicGrid, SpectralField, embed_series, series_to_values, values_to_series

__all__ = [
    "SymbolGrid",
    "CubicSymbol",
    "constant_symbol",
    "power_symbol",
    "table_symbol",
    "gauss_legendre",
    "eval_bilinear",
    "eval_trilinear",
    "eval_quartic",
    "functional",
    "symmetrize4",
    "classify_interaction",
    "split_balanced",
    "diagonal_cutoff",
    "slot_data",
    "density_series",
    "functional_sum",
    "check_cubic_symbol",
    "hermitian_defect",
]

_CHUNK = 1 << 21


@lru_cache(maxsize=None)
def gauss_legendre(n: int = 16):
    """Gauss-Legendre nodes and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True)
class SymbolGrid:
    """Lazily evaluated k-linear symbol.

    Attributes
    ----------
    arity : int
        Number of arguments.
    func : callable
        Vectorized ``func(xi1, ..., xik)``; arguments broadcast.
    windows : tuple or None
        Per-slot closed frequency intervals ``(lo, hi)`` (or ``None``) outside
        of which the symbol vanishes identically.  Evaluation skips modes
        outside the windows, which is exact.
    separable : tuple or None
        Rank decomposition ``((f1, ..., fk), ...)`` with
        ``func = sum_r prod_j f_rj(xi_j)``; enables the FFT path.
    order_weight : float
        Declared order ``m`` of the symbol class (used by bound checks).
    tag : str
        Free-form label.
    """

    arity: int
    func: Callable
    windows: Optional[Tuple] = None
    separable: Optional[Tuple] = None
    order_weight: float = 0.0
    tag: str = ""

    def __call__(self, *xis):
        if len(xis) != self.arity:
            raise ValueError(f"symbol of arity {self.arity} called with {len(xis)} arguments")
        return self.func(*xis)

    def support_mask(self, *xis):
        """Boolean mask of the declared slot windows."""
        out = np.ones(np.broadcast(*xis).shape, dtype=bool)
        if self.windows is None:
            return out
        for x, w in zip(xis, self.windows):
            if w is not None:
                out &= (np.asarray(x) >= w[0]) & (np.asarray(x) <= w[1])
        return out

    def materialize(self, *axes):
        """Dense tensor on the product of 1-D frequency ``axes``."""
        shaped = [np.asarray(ax, dtype=float).reshape([-1 if i == j else 1 for i in range(self.arity)])
                  for j, ax in enumerate(axes)]
        return np.broadcast_to(self.func(*shaped), tuple(len(a) for a in axes)).astype(complex)

    def scaled(self, factor) -> "SymbolGrid":
        f = self.func
        sep = None
        if self.separable is not None:
            sep = tuple((lambda x, g=fs[0]: factor * g(x),) + tuple(fs[1:]) for fs in self.separable)
        return replace(self, func=lambda *x: factor * f(*x), separable=sep)

    def with_windows(self, windows) -> "SymbolGrid":
        return replace(self, windows=tuple(windows))


# cubic symbols ---------------------------------------------------------------

@dataclass(frozen=True)
class CubicSymbol:
    """Cubic nonlinearity symbol ``c(xi1, xi2, xi3)``.

    Attributes
    ----------
    c : callable
        Vectorized symbol.
    delta : float
        Growth exponent.
    conservative, defocusing : bool
        Declared structural flags; see :func:`check_cubic_symbol`.
    kappa : float
        Defocusing lower-bound constant.
    separable : tuple or None
        Rank decomposition as in :class:`SymbolGrid`.
    """

    c: Callable
    delta: float = 0.0
    conservative: bool = True
    defocusing: bool = True
    kappa: float = 1.0
    separable: Optional[Tuple] = None
    tag: str = "custom"

    def __call__(self, x1, x2, x3):
        return self.c(x1, x2, x3)

    def as_symbol(self) -> SymbolGrid:
        return SymbolGrid(3, self.c, separable=self.separable, order_weight=3 * self.delta, tag=self.tag)

    def scaled(self, factor: float) -> "CubicSymbol":
        c0 = self.c
        sep = None
        if self.separable is not None:
            sep = tuple((lambda x, g=fs[0]: factor * g(x),) + tuple(fs[1:]) for fs in self.separable)
        return replace(self, c=lambda a, b, d: factor * c0(a, b, d), separable=sep,
                       defocusing=self.defocusing and factor > 0, kappa=self.kappa * abs(factor))


def _ones(x):
    return np.ones_like(np.asarray(x, dtype=float))


def constant_symbol(value: float = 1.0) -> CubicSymbol:
    """``c == value``; ``value = 1`` is the defocusing cubic NLS."""
    value = float(value)
    return CubicSymbol(c=lambda a, b, d: np.full(np.broadcast(a, b, d).shape, value),
                       delta=0.0, conservative=True, defocusing=value > 0, kappa=abs(value),
                       separable=((lambda x: value * _ones(x), _ones, _ones),), tag="constant")


def power_symbol(delta: float) -> CubicSymbol:
    """``c = (<xi1><xi2><xi3>)^delta``."""
    delta = float(delta)

    def w(x):
        return (1.0 + np.square(np.asarray(x, dtype=float))) ** (0.5 * delta)
    return CubicSymbol(c=lambda a, b, d: w(a) * w(b) * w(d), delta=delta, conservative=True,
                       defocusing=True, kappa=1.0, separable=((w, w, w),), tag="power")


def table_symbol(axis: np.ndarray, values: np.ndarray, delta: float = 0.0, **flags) -> CubicSymbol:
    """Cubic symbol from samples on a tensor grid, multilinear interpolation."""
    from scipy.interpolate import RegularGridInterpolator

    axis = np.asarray(axis, dtype=float)
    re = RegularGridInterpolator((axis, axis, axis), np.real(values), bounds_error=False, fill_value=0.0)
    im = RegularGridInterpolator((axis, axis, axis), np.imag(values), bounds_error=False, fill_value=0.0)

    def c(a, b, d):
        pts = np.stack(np.broadcast_arrays(a, b, d), axis=-1)
        return re(pts) + 1j * im(pts)
    return CubicSymbol(c=c, delta=delta, tag="table", **flags)


def check_cubic_symbol(c: CubicSymbol, radius: float = 32.0, n: int = 257) -> dict:
    """Measure the structural hypotheses on the diagonal.

    Returns the largest ``|Im c|`` and ``|Im grad c|`` on the diagonal, the
    smallest defocusing ratio ``c/<xi>^(3 delta)`` and finite-difference symbol
    bound constants.  Raises ``ValueError`` if a declared flag fails.
    """
    xi = np.linspace(-radius, radius, n)
    jx = np.sqrt(1 + xi**2)
    diag = np.asarray(c(xi, xi, xi), dtype=complex)
    h = jx / 8.0
    grads = []
    for j in range(3):
        e = [0.0, 0.0, 0.0]
        e[j] = 1.0
        plus = c(*(xi + e[i] * h for i in range(3)))
        minus = c(*(xi - e[i] * h for i in range(3)))
        grads.append((np.asarray(plus) - np.asarray(minus)) / (2 * h))
    scale = jx ** (3 * c.delta)
    im_val = float(np.max(np.abs(diag.imag) / scale))
    im_grad = float(max(np.max(np.abs(np.imag(g)) * jx / scale) for g in grads))
    defocus = float(np.min(diag.real / scale))
    bound = float(max(np.max(np.abs(g) * jx / scale) for g in grads))
    report = {"im_diag": im_val, "im_grad": im_grad, "defocusing_ratio": defocus, "h1_constant": bound}
    if c.conservative and (im_val > 1e-10 or im_grad > 1e-6):
        raise ValueError(f"symbol declared conservative but Im c or Im grad c is nonzero: {report}")
    if c.defocusing and defocus < c.kappa * (1 - 1e-12):
        raise ValueError(f"symbol declared defocusing but c/<xi>^(3delta) drops to {defocus:.3g}")
    return report


# evaluation core -------------------------------------------------------------

@dataclass(frozen=True)
class Slot:
    """Active modes of one argument: integer modes, frequencies and coefficients.

    ``coef`` already carries the conjugation of even slots.
    """

    modes: np.ndarray
    xi: np.ndarray
    coef: np.ndarray


def slot_data(series: np.ndarray, grid: PeriodicGrid, conj: bool, window=None, keep_zeros: bool = False) -> Slot:
    """Restrict a coefficient array to nonzero modes inside ``window``."""
    series = np.asarray(series)
    mask = np.ones(grid.n_points, dtype=bool) if keep_zeros else (series != 0)
    if window is not None:
        tol = 1e-9 * grid.dk
        mask &= (grid.k >= window[0] - tol) & (grid.k <= window[1] + tol)
    coef = series[mask]
    return Slot(grid.modes[mask], grid.k[mask], np.conj(coef) if conj else coef.astype(complex))


def _signs(k):
    return np.array([1 if j % 2 == 0 else -1 for j in range(k)], dtype=np.int64)


def density_series(func, slots: Sequence[Slot], dk: float, n_out: int, tensor=None) -> np.ndarray:
    """Output coefficients (FFT order, size ``n_out``) of a k-linear form.

    ``tensor`` may hold the symbol pre-evaluated on the slots' frequencies.
    """
    k = len(slots)
    sg = _signs(k)
    out = np.zeros(n_out, dtype=complex)
    if any(len(s.modes) == 0 for s in slots):
        return out
    rest = int(np.prod([len(s.modes) for s in slots[1:]]))
    chunk = max(1, _CHUNK // max(rest, 1))
    # modes and coefficient products of slots 2..k
    def bshape(j):
        return [-1 if i == j else 1 for i in range(k)]
    m_rest = sum(sg[j] * slots[j].modes.reshape(bshape(j)) for j in range(1, k))
    c_rest = np.ones([1] * k, dtype=complex)
    for j in range(1, k):
        c_rest = c_rest * slots[j].coef.reshape(bshape(j))
    x_rest = [slots[j].xi.reshape(bshape(j)) for j in range(1, k)]
    s0 = slots[0]
    for start in range(0, len(s0.modes), chunk):
        sl = slice(start, start + chunk)
        m1 = s0.modes[sl].reshape(bshape(0))
        if tensor is None:
            vals = func(s0.xi[sl].reshape(bshape(0)), *x_rest)
        else:
            vals = tensor[sl]
        vals = vals * (s0.coef[sl].reshape(bshape(0)) * c_rest)
        zeta = np.broadcast_to(m1 + m_rest, vals.shape).ravel() % n_out
        vals = vals.ravel()
        out += np.bincount(zeta, weights=vals.real, minlength=n_out)
        out += 1j * np.bincount(zeta, weights=vals.imag, minlength=n_out)
    return out


def functional_sum(func, slots: Sequence[Slot], length: float, dk: float) -> complex:
    """``length * sum over the zero-sum set`` of the symbol times coefficients."""
    k = len(slots)
    sg = _signs(k)
    if any(len(s.modes) == 0 for s in slots):
        return 0.0 + 0.0j
    last = slots[-1]
    lo, hi = int(last.modes.min()), int(last.modes.max())
    lookup = np.full(hi - lo + 1, -1, dtype=np.int64)
    lookup[last.modes - lo] = np.arange(len(last.modes))

    def bshape(j):
        return [-1 if i == j else 1 for i in range(k - 1)]
    m_rest = sum(sg[j] * slots[j].modes.reshape(bshape(j)) for j in range(1, k - 1)) if k > 2 else 0
    c_rest = np.ones([1] * (k - 1), dtype=complex)
    for j in range(1, k - 1):
        c_rest = c_rest * slots[j].coef.reshape(bshape(j))
    x_rest = [slots[j].xi.reshape(bshape(j)) for j in range(1, k - 1)]
    rest = int(np.prod([len(s.modes) for s in slots[1:-1]])) if k > 2 else 1
    chunk = max(1, _CHUNK // max(rest, 1))
    s0 = slots[0]
    total = 0.0 + 0.0j
    for start in range(0, len(s0.modes), chunk):
        sl = slice(start, start + chunk)
        m_last = np.broadcast_to(s0.modes[sl].reshape(bshape(0)) + m_rest,
                                 [len(s0.modes[sl])] + [len(s.modes) for s in slots[1:-1]])
        inside = (m_last >= lo) & (m_last <= hi)
        idx = np.where(inside, lookup[np.clip(m_last - lo, 0, hi - lo)], -1)
        valid = idx >= 0
        if not np.any(valid):
            continue
        xl = np.where(valid, dk * m_last, 0.0)
        vals = func(s0.xi[sl].reshape(bshape(0)), *x_rest, xl)
        coef_last = np.where(valid, last.coef[np.where(valid, idx, 0)], 0.0)
        total += np.sum(np.where(valid, vals * s0.coef[sl].reshape(bshape(0)) * c_rest * coef_last, 0.0))
    return complex(length * total)


def _pad_factor(arity: int) -> int:
    p = 1
    while p < arity:
        p *= 2
    return p


def _windows(sym, k):
    return sym.windows if sym.windows is not None else (None,) * k


def eval_bilinear(b: SymbolGrid, u: SpectralField, v: SpectralField, fast: Optional[bool] = None) -> SpectralField:
    """Bilinear form ``B(u, conj v)`` on the 2x refined grid (exact, no aliasing).

    ``fast=None`` selects the FFT path whenever a separable decomposition is
    available.
    """
    if b.arity != 2:
        raise ValueError("eval_bilinear needs an arity-2 symbol")
    if u.grid != v.grid:
        raise ValueError("fields live on different grids")
    grid = u.grid
    fine = grid.refined(2)
    use_fast = (b.separable is not None) if fast is None else fast
    if use_fast:
        if b.separable is None:
            raise ValueError("fast path requested but the symbol has no separable form")
        vals = np.zeros(fine.n_points, dtype=complex)
        for f, g in b.separable:
            fu = series_to_values(fine, embed_series(u.series * f(grid.k), fine.n_points))
            gv = series_to_values(fine, embed_series(v.series * np.conj(g(grid.k)), fine.n_points))
            vals += fu * np.conj(gv)
        return SpectralField(fine, values_to_series(fine, vals))
    w = _windows(b, 2)
    slots = [slot_data(u.series, grid, False, w[0]), slot_data(v.series, grid, True, w[1])]
    return SpectralField(fine, density_series(b.func, slots, grid.dk, fine.n_points))


def eval_trilinear(c, u: SpectralField, fast: Optional[bool] = None, truncate: bool = True) -> SpectralField:
    """Cubic form ``C(u, conj u, u)``.

    With ``truncate`` the result is dealiased onto the original band (the
    exact product computed on a padded grid, then restricted); otherwise the
    exact output is returned on the 4x refined grid.
    """
    sym = c.as_symbol() if isinstance(c, CubicSymbol) else c
    if sym.arity != 3:
        raise ValueError("eval_trilinear needs an arity-3 symbol")
    grid = u.grid
    use_fast = (sym.separable is not None) if fast is None else fast
    if use_fast:
        if sym.separable is None:
            raise ValueError("fast path requested but the symbol has no separable form")
        pad = 2 if truncate else 4
        fine = grid.refined(pad)
        vals = np.zeros(fine.n_points, dtype=complex)
        for f, g, h in sym.separable:
            fu = series_to_values(fine, embed_series(u.series * f(grid.k), fine.n_points))
            gu = series_to_values(fine, embed_series(u.series * np.conj(g(grid.k)), fine.n_points))
            hu = series_to_values(fine, embed_series(u.series * h(grid.k), fine.n_points))
            vals += fu * np.conj(gu) * hu
        out = values_to_series(fine, vals)
        if truncate:
            return SpectralField(grid, embed_series(out, grid.n_points))
        return SpectralField(fine, out)
    w = _windows(sym, 3)
    slots = [slot_data(u.series, grid, False, w[0]), slot_data(u.series, grid, True, w[1]),
             slot_data(u.series, grid, False, w[2])]
    fine = grid.refined(4)
    out = density_series(sym.func, slots, grid.dk, fine.n_points)
    if truncate:
        return SpectralField(grid, embed_series(out, grid.n_points))
    return SpectralField(fine, out)


def eval_quartic(b: SymbolGrid, u1: SpectralField, u2: SpectralField, u3: SpectralField,
                 u4: SpectralField, tensor=None) -> SpectralField:
    """Quartic density ``B(u1, conj u2, u3, conj u4)`` on the 4x refined grid."""
    if b.arity != 4:
        raise ValueError("eval_quartic needs an arity-4 symbol")
    grid = u1.grid
    w = _windows(b, 4)
    keep = tensor is not None
    slots = [slot_data(f.series, grid, j % 2 == 1, w[j], keep_zeros=keep) for j, f in enumerate((u1, u2, u3, u4))]
    fine = grid.refined(4)
    return SpectralField(fine, density_series(b.func, slots, grid.dk, fine.n_points, tensor=tensor))


def functional(b: SymbolGrid, *fields: SpectralField) -> complex:
    """Integral over the torus of the form's density (zero-sum diagonal sum)."""
    if b.arity % 2 or b.arity != len(fields):
        raise ValueError("functional needs an even arity and one field per slot")
    grid = fields[0].grid
    for f in fields:
        if f.grid != grid:
            raise ValueError("fields live on different grids")
    w = _windows(b, b.arity)
    slots = [slot_data(f.series, grid, j % 2 == 1, w[j]) for j, f in enumerate(fields)]
    return functional_sum(b.func, slots, grid.length, grid.dk)


def hermitian_defect(b: SymbolGrid, points) -> float:
    """Largest ``|b(xi) - conj b(swapped xi)|`` over sample points.

    Zero means the density of ``(u, conj u, ...)`` is real-valued.
    """
    pts = [np.asarray(p) for p in points]
    k = b.arity
    swapped = [pts[j + 1] if j % 2 == 0 else pts[j - 1] for j in range(k)]
    return float(np.max(np.abs(b.func(*pts) - np.conj(b.func(*swapped)))))


def symmetrize4(b: SymbolGrid) -> SymbolGrid:
    """Average over the 8-element symmetry group of quartic functionals.

    The group is generated by ``xi1 <-> xi3``, ``xi2 <-> xi4`` and the
    odd/even swap ``(xi1, xi2, xi3, xi4) -> (xi2, xi1, xi4, xi3)``; the last
    one comes with complex conjugation, so real parts of functionals on
    identical arguments are preserved, and the functionals themselves are
    preserved whenever they are real.
    """
    if b.arity != 4:
        raise ValueError("symmetrize4 needs an arity-4 symbol")
    f = b.func
    perms = [(0, 1, 2, 3), (2, 1, 0, 3), (0, 3, 2, 1), (2, 3, 0, 1)]

    def sym(*x):
        acc = 0.0
        for p in perms:
            y = [x[i] for i in p]
            acc = acc + f(*y) + np.conj(f(y[1], y[0], y[3], y[2]))
        return acc / 8.0
    win = None
    if b.windows is not None and len(set(b.windows)) == 1:
        win = b.windows
    return SymbolGrid(4, sym, windows=win, order_weight=b.order_weight, tag=f"sym({b.tag})")


# resonance classification ---------------------------------------------------

def classify_interaction(x1, x2, x3, x4, frame: LPFrame, semi_range: int = 8):
    """Classify a quartic interaction by the blocks of ``xi1`` and ``xi3``.

    Returns ``(label, doubly_resonant)`` where ``label`` is ``"balanced"``,
    ``"semi_balanced"`` or ``"unbalanced"``.
    """
    if abs(x1 - x2 + x3 - x4) > frame.grid.dk * (1 + 1e-9):
        raise ValueError("frequencies are off the zero-sum diagonal")
    k1, k3 = (int(v) for v in frame.block_of(np.array([x1, x3])))
    doubly = bool(np.allclose([x2, x3, x4], x1, rtol=0, atol=1e-12 * max(1.0, abs(x1))))
    same_sign = (k1 == 0 or k3 == 0) or (np.sign(k1) == np.sign(k3))
    gap = abs(abs(k1) - abs(k3)) if same_sign else None
    if same_sign and gap <= 1:
        return "balanced", doubly
    if same_sign and 2 <= gap < semi_range and k1 != 0 and k3 != 0:
        return "semi_balanced", doubly
    return "unbalanced", doubly


def diagonal_cutoff(step: float, inner: float = 4.0, outer: float = 8.0):
    """Radial cutoff of the separation ratio: 1 below ``inner``, 0 beyond ``outer``."""
    def chi(r):
        return 1.0 - smooth_step((np.asarray(r, dtype=float) - outer) / (outer - inner))
    return chi


def split_balanced(c: CubicSymbol, frame: LPFrame):
    """Split ``c = c_bal + c_tr`` with ``c_bal`` supported near the diagonal.

    ``c_bal = c * c_diag`` where ``c_diag`` is a product of smooth cutoffs in
    ``|xi_j - xi_k| / ((step - 1) sqrt(<xi_j><xi_k>))``: equal to 1 when every
    ratio is at most 4, zero once one exceeds 8.
    """
    chi = diagonal_cutoff(frame.step)
    scale = frame.step - 1.0

    def cdiag(a, b, d):
        ja, jb, jd = (np.sqrt(1 + np.square(np.asarray(t, dtype=float))) for t in (a, b, d))
        out = chi(np.abs(a - b) / (scale * np.sqrt(ja * jb)))
        out = out * chi(np.abs(a - d) / (scale * np.sqrt(ja * jd)))
        return out * chi(np.abs(b - d) / (scale * np.sqrt(jb * jd)))

    base = c.c

    def cbal(a, b, d):
        return base(a, b, d) * cdiag(a, b, d)

    def ctr(a, b, d):
        return base(a, b, d) * (1.0 - cdiag(a, b, d))

    return (SymbolGrid(3, cbal, order_weight=3 * c.delta, tag="c_bal"),
            SymbolGrid(3, ctr, order_weight=3 * c.delta, tag="c_tr"))
