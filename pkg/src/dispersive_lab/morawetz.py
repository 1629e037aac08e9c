"""Interaction functionals of two solutions and their time-derivative budgets.

A functional is a sum of half-plane pairings ``[X(u), Y(v)] = int X(x) G(x) dx``
with ``G(x) = int_{x_b}^x Y`` and ``x_b = -L/2`` the edge of the box, plus an
optional quartic correction ``B_I(u, conj u, v, conj v)``.  Each density obeys
a law ``d/dt X = d/dx X' + S_X``; on the torus

    d/dt [X, Y] = -int X' Y + int X Y' + [S_X, Y] + [X, S_Y]
                  + X'(x_b) int Y - Y'(x_b) int X,

where the last two terms are boundary fluxes.  They are evaluated exactly and
reported on their own (``boundary``), so a small boundary share certifies
that the box is large enough for the whole-line statement.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .densities import (DensityFamily, _LAW, bilinear_density, c4_density, divided_difference, make_family,
                        momentum_symbol, quartic_density)
from .dispersion import DispersionRelation
from .division import (CorrectedDensity, build_sharp, divide_morawetz_balanced, divide_morawetz_semibalanced)
from .evolve import evolve, linear_propagate
from .forms import CubicSymbol, SymbolGrid, eval_trilinear, gauss_legendre
from .paley import LPFrame, project
from .spectral_field import SpectralField, embed_series

__all__ = [
    "MorawetzError",
    "MorawetzAccumulator",
    "LinearFlow",
    "NonlinearFlow",
    "half_plane_pairing",
    "boundary_value",
    "product_integral",
    "balanced_identity",
    "semibalanced_identity",
    "unbalanced_identity",
    "run_identity",
    "j6_diagonal_trace",
    "translation_family_data",
    "REGIMES",
]

SIX_LINEAR_MAX_N = 32
REGIMES = ("balanced", "semi_balanced", "unbalanced_gnls", "unbalanced_gkg_matched", "gkg_mismatched")


class MorawetzError(ValueError):
    """Regime preconditions fail."""


# spectral pairing helpers ------------------------------------------------------------

def _modes(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, 1.0 / n)


def _common(f: np.ndarray, g: np.ndarray):
    n = max(len(f), len(g))
    return embed_series(f, n), embed_series(g, n), n


def product_integral(f: np.ndarray, g: np.ndarray, length: float) -> complex:
    """``int f g dx`` from Fourier-series coefficients."""
    f, g, n = _common(f, g)
    return complex(length * np.sum(f * g[(-_modes(n).astype(int)) % n]))


def boundary_value(f: np.ndarray) -> complex:
    """Value at the box edge ``x = -L/2``."""
    m = _modes(len(f)).astype(int)
    return complex(np.sum(f * np.where(m % 2 == 0, 1.0, -1.0)))


def _outside_fraction(f: np.ndarray) -> float:
    vals = np.abs(np.fft.ifft(f) * len(f))
    n = len(f)
    x = -0.5 + np.arange(n) / n
    tot = vals.sum()
    return float(vals[np.abs(x) >= 0.25].sum() / tot) if tot > 0 else 0.0


def half_plane_pairing(f, g, length: Optional[float] = None, guard: Optional[float] = None) -> complex:
    """``int f(x) G(x) dx`` with ``G(x) = int_{-L/2}^x g``, evaluated exactly.

    Parameters
    ----------
    f, g : ndarray or SpectralField
        Density coefficients (any padded size; both are embedded on the
        larger grid).
    length : float
        Box length; taken from the fields when they are SpectralFields.
    guard : float, optional
        Largest tolerated fraction of ``int |f|`` or ``int |g|`` in the outer
        half of the box; exceeded -> ``MorawetzError``.
    """
    if isinstance(f, SpectralField):
        length = f.grid.length
        f = f.series
    if isinstance(g, SpectralField):
        length = g.grid.length if length is None else length
        g = g.series
    if length is None:
        raise ValueError("length is required for raw coefficient arrays")
    f, g, n = _common(np.asarray(f, dtype=complex), np.asarray(g, dtype=complex))
    if guard is not None:
        worst = max(_outside_fraction(f), _outside_fraction(g))
        if worst > guard:
            raise MorawetzError(f"wrap guard: {worst:.2e} of a density lies in the outer half of the box")
    L = float(length)
    m = _modes(n)
    mi = m.astype(int)
    nz = m != 0
    k = 2 * np.pi * m / L
    alt = np.where(mi % 2 == 0, 1.0, -1.0)
    inv = np.zeros(n, dtype=complex)
    inv[nz] = 1.0 / (1j * k[nz])
    f_neg = f[(-mi) % n]
    term1 = L * np.sum(f_neg * g * inv)
    int_fx = L * np.sum(f * alt * inv)
    term2 = g[0] * (int_fx + 0.5 * L * L * f[0])
    h_edge = np.sum(g * alt * inv)
    term3 = -h_edge * L * f[0]
    return complex(term1 + term2 + term3)


# flows ------------------------------------------------------------------------------------

class LinearFlow:
    """Exact homogeneous flow from ``u0``."""

    linear = True

    def __init__(self, d: DispersionRelation, u0: SpectralField):
        self.d, self.u0, self.c = d, u0, None

    def state(self, t: float) -> SpectralField:
        return linear_propagate(self.d, self.u0, t)


class NonlinearFlow:
    """Cubic flow sampled at nondecreasing times (states cached forward)."""

    linear = False

    def __init__(self, d: DispersionRelation, c: CubicSymbol, u0: SpectralField, dt: float = 0.01,
                 tolerance: float = 1e-12):
        self.d, self.c, self.u0 = d, c, u0
        self.dt, self.tol = dt, tolerance
        self._t, self._u = 0.0, u0

    def state(self, t: float) -> SpectralField:
        if t < self._t - 1e-14:
            self._t, self._u = 0.0, self.u0
        if t > self._t:
            s = evolve(self.d, self.c, self._u, t - self._t, self.dt, self.tol, t0=self._t)
            self._t, self._u = t, s.u
        return self._u


# density terms ------------------------------------------------------------------------------

_KIND_OF = {"m": "mass", "p": "momentum", "p_check": "reverse"}


@dataclass
class _DensityTerm:
    """One density of one solution: bilinear part, optional quartic correction."""

    fam: DensityFamily
    name: str
    block: tuple
    frame: LPFrame
    sign: Optional[int] = None
    sharp: Optional[CorrectedDensity] = None
    c: Optional[CubicSymbol] = None
    _tensors: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = self.fam.symbol(self.name, self.sign)
        self.Y = self.fam.symbol(_LAW[_KIND_OF[self.name]][1], self.sign)
        self.v = self.fam.speed(self.sign)
        lo, hi = self.frame.support(self.block)
        xmax = self.frame.grid.max_frequency
        self.window = (max(lo, -xmax), min(hi, xmax))

    def _tensor(self, key: str, sym: SymbolGrid, grid) -> Tuple[np.ndarray, tuple]:
        if key not in self._tensors:
            w = sym.windows or (None,) * 4
            axes = []
            tol = 1e-9 * grid.dk
            for win in w:
                axes.append(grid.k if win is None else grid.k[(grid.k >= win[0] - tol) & (grid.k <= win[1] + tol)])
            self._tensors[key] = (sym.materialize(*axes), w)
        return self._tensors[key]

    def _quartic(self, key, sym, fields):
        grid = fields[0].grid
        tensor, w = self._tensor(key, sym, grid)
        return quartic_density(sym.func, fields, w, tensor=tensor)

    def parts(self, u: SpectralField, w: Optional[SpectralField]) -> Dict[str, np.ndarray]:
        """Series of ``X2, X4, Xp2, Xp4, S`` on the 4x grid.

        ``w`` is the nonlinear part of ``u_t`` (``None`` for linear flows).
        """
        n4 = 4 * u.grid.n_points
        ul = project(self.frame, u, self.block[0], self.block[1])
        X2 = embed_series(bilinear_density(self.X, ul, ul, self.window), n4)
        Xp2 = embed_series(bilinear_density(self.Y, ul, ul, self.window), n4) + self.v * X2
        zero = np.zeros(n4, dtype=complex)
        out = {"X2": X2, "Xp2": Xp2, "X4": zero, "Xp4": zero, "S": zero}
        if w is None:
            return out
        kind = _KIND_OF[self.name]
        if self.sharp is None:
            out["S"] = c4_density(self.c, self.fam, kind, self.block, self.frame, u, self.sign)
            return out
        sh = self.sharp
        B4, R4, F4 = sh.B4(), sh.R4(), sh.F4bal()
        X4 = self._quartic("B", B4, (u, u, u, u))
        Xp4 = self._quartic("R", R4, (u, u, u, u)) + self.v * X4
        R6 = (self._quartic("B", B4, (w, u, u, u)) + self._quartic("B", B4, (u, w, u, u))
              + self._quartic("B", B4, (u, u, w, u)) + self._quartic("B", B4, (u, u, u, w)))
        S = c4_density(self.c, self.fam, kind, self.block, self.frame, u, self.sign)
        S = S + self._quartic("F", F4, (u, u, u, u)) + R6
        out.update(X4=X4, Xp4=Xp4, S=S)
        return out


class _QuarticCache:
    """Quartic functional ``L * sum b(xi) f1 conj f2 f3 conj f4`` on fixed slot windows."""

    def __init__(self, func: Callable, grid, windows):
        self.grid = grid
        tol = 1e-9 * grid.dk
        idx = [np.nonzero((grid.k >= w[0] - tol) & (grid.k <= w[1] + tol))[0] for w in windows]
        m = grid.modes
        i1, i2, i3 = np.meshgrid(idx[0], idx[1], idx[2], indexing="ij")
        i1, i2, i3 = i1.ravel(), i2.ravel(), i3.ravel()
        m4 = m[i1] - m[i2] + m[i3]
        lookup = {int(m[j]): j for j in idx[3]}
        i4 = np.array([lookup.get(int(v), -1) for v in m4], dtype=np.int64)
        keep = i4 >= 0
        self.i = (i1[keep], i2[keep], i3[keep], i4[keep])
        dk = grid.dk
        self.vals = np.asarray(func(dk * m[self.i[0]], dk * m[self.i[1]], dk * m[self.i[2]], dk * m[self.i[3]]),
                               dtype=complex)

    def __call__(self, f1, f2, f3, f4) -> complex:
        a, b, c, d = self.i
        return complex(self.grid.length * np.sum(self.vals * f1.series[a] * np.conj(f2.series[b])
                                                 * f3.series[c] * np.conj(f4.series[d])))


# accumulator -------------------------------------------------------------------------------

@dataclass
class MorawetzAccumulator:
    """Time-integrated budget of one interaction functional."""

    regime: str
    blocks: tuple
    x0: float
    times: List[float] = field(default_factory=list)
    I_series: List[float] = field(default_factory=list)
    I_sharp_series: List[float] = field(default_factory=list)
    node_times: List[float] = field(default_factory=list)
    positive_term_series: List[float] = field(default_factory=list)
    positive_integral: float = 0.0
    correction_terms: Dict[str, float] = field(default_factory=dict)
    delta_I_sharp: float = 0.0
    identity_residual: float = float("nan")
    absolute_residual: float = float("nan")
    boundary_share: float = 0.0
    smallness: Dict[str, float] = field(default_factory=dict)
    j4_defect: float = 0.0
    monotone: bool = True
    principal_prefactor: float = 1.0

    def to_dict(self) -> dict:
        return {
            "regime": self.regime, "blocks": [list(b) for b in self.blocks], "x0": self.x0,
            "delta_I_sharp": self.delta_I_sharp, "positive_integral": self.positive_integral,
            "correction_terms": self.correction_terms, "identity_residual": self.identity_residual,
            "absolute_residual": self.absolute_residual, "boundary_share": self.boundary_share,
            "smallness": self.smallness, "j4_defect": self.j4_defect, "monotone": self.monotone,
            "principal_prefactor": self.principal_prefactor,
            "times": self.times, "I_sharp_series": self.I_sharp_series,
        }


@dataclass
class _Setup:
    regime: str
    pairs: List[Tuple[float, _DensityTerm, _DensityTerm]]
    principal: Callable
    small: Optional[Callable]
    B_I: Optional[_QuarticCache]
    blocks: tuple
    prefactor: float = 1.0
    small_bound: float = float("nan")


def _rates(setup: _Setup, flow, u: SpectralField, v: SpectralField) -> Dict[str, float]:
    """Instantaneous budget terms at one time."""
    L = u.grid.length
    nonlin = not flow.linear
    wu = wv = None
    if nonlin:
        wu = eval_trilinear(flow.c, u) * (-1j)
        wv = eval_trilinear(flow.c, v) * (-1j)
    terms = {"J4": 0.0, "J6": 0.0, "J8": 0.0, "K": 0.0, "boundary": 0.0}
    cache = {}
    for coef, tu, tv in setup.pairs:
        key_u, key_v = (id(tu), "u"), (id(tv), "v")
        if key_u not in cache:
            cache[key_u] = tu.parts(u, wu)
        if key_v not in cache:
            cache[key_v] = tv.parts(v, wv)
        A, B = cache[key_u], cache[key_v]

        def pi(f, g):
            return product_integral(f, g, L).real
        # -int X' Y + int X Y' split by degree
        terms["J4"] += coef * (-pi(A["Xp2"], B["X2"]) + pi(A["X2"], B["Xp2"]))
        if nonlin:
            terms["J6"] += coef * (-pi(A["Xp2"], B["X4"]) - pi(A["Xp4"], B["X2"])
                                   + pi(A["X2"], B["Xp4"]) + pi(A["X4"], B["Xp2"]))
            terms["J8"] += coef * (-pi(A["Xp4"], B["X4"]) + pi(A["X4"], B["Xp4"]))
            X, Y = A["X2"] + A["X4"], B["X2"] + B["X4"]
            terms["K"] += coef * (half_plane_pairing(A["S"], Y, L).real + half_plane_pairing(X, B["S"], L).real)
        X, Y = A["X2"] + A["X4"], B["X2"] + B["X4"]
        Xp, Yp = A["Xp2"] + A["Xp4"], B["Xp2"] + B["Xp4"]
        terms["boundary"] += coef * (boundary_value(Xp) * L * Y[0] - boundary_value(Yp) * L * X[0]).real
    # quartic correction of the functional
    if setup.B_I is not None:
        bu, bv = setup.blocks
        frame = setup.pairs[0][1].frame
        ul, vl = project(frame, u, *bu), project(frame, v, *bv)
        a_u = -1j * flow.d.a(u.grid.k)
        lu, lv = ul.multiplier(a_u), vl.multiplier(a_u)
        lin = (setup.B_I(lu, ul, vl, vl) + setup.B_I(ul, lu, vl, vl) + setup.B_I(ul, ul, lv, vl)
               + setup.B_I(ul, ul, vl, lv)).real
        terms["dB_linear"] = lin
        if nonlin:
            pu, pv = project(frame, wu, *bu), project(frame, wv, *bv)
            terms["J6"] += (setup.B_I(pu, ul, vl, vl) + setup.B_I(ul, pu, vl, vl) + setup.B_I(ul, ul, pv, vl)
                            + setup.B_I(ul, ul, vl, pv)).real
    else:
        terms["dB_linear"] = 0.0
    terms["principal"] = setup.principal(u, v)
    terms["small"] = setup.small(u, v) if setup.small is not None else 0.0
    return terms


def _value(setup: _Setup, u: SpectralField, v: SpectralField, flow) -> Tuple[float, float]:
    """``(I, I_sharp)`` at one time."""
    L = u.grid.length
    I0 = 0.0
    Isharp = 0.0
    for coef, tu, tv in setup.pairs:
        A = tu.parts(u, None)
        B = tv.parts(v, None)
        I0 += coef * half_plane_pairing(A["X2"], B["X2"], L).real
        if not flow.linear and tu.sharp is not None:
            XA = A["X2"] + tu._quartic("B", tu.sharp.B4(), (u, u, u, u))
            XB = B["X2"] + tv._quartic("B", tv.sharp.B4(), (v, v, v, v))
            Isharp += coef * half_plane_pairing(XA, XB, L).real
        else:
            Isharp += coef * half_plane_pairing(A["X2"], B["X2"], L).real
    if setup.B_I is not None:
        frame = setup.pairs[0][1].frame
        bu, bv = setup.blocks
        ul, vl = project(frame, u, *bu), project(frame, v, *bv)
        Isharp += setup.B_I(ul, ul, vl, vl).real
    return I0, Isharp


def run_identity(setup: _Setup, flow, x0: float, t_end: float, n_panels: int = 16, n_nodes: int = 8
                 ) -> MorawetzAccumulator:
    """Integrate the budget with composite Gauss-Legendre quadrature in time."""
    acc = MorawetzAccumulator(setup.regime, setup.blocks, float(x0), principal_prefactor=setup.prefactor)
    t_nodes, w_nodes = gauss_legendre(n_nodes)
    h = t_end / n_panels
    integ: Dict[str, float] = {}
    j4_def = 0.0
    scale_j4 = 0.0

    def record(t):
        u = flow.state(t)
        v = u.shift(x0)
        I0, Is = _value(setup, u, v, flow)
        acc.times.append(t)
        acc.I_series.append(I0)
        acc.I_sharp_series.append(Is)

    record(0.0)
    for p in range(n_panels):
        a = p * h
        for tn, wn in zip(t_nodes, w_nodes):
            t = a + tn * h
            u = flow.state(t)
            v = u.shift(x0)
            r = _rates(setup, flow, u, v)
            for key, val in r.items():
                integ[key] = integ.get(key, 0.0) + h * wn * val
            acc.node_times.append(t)
            acc.positive_term_series.append(r["principal"])
            j4_def = max(j4_def, abs(r["J4"] + r["dB_linear"] - r["principal"] - r["small"]))
            scale_j4 = max(scale_j4, abs(r["principal"]) + abs(r["small"]))
        record(a + h)
    acc.delta_I_sharp = acc.I_sharp_series[-1] - acc.I_sharp_series[0]
    acc.positive_integral = integ["principal"]
    keys = ("small", "J6", "J8", "K", "boundary")
    acc.correction_terms = {k: integ.get(k, 0.0) for k in keys}
    rhs = integ["principal"] + sum(acc.correction_terms.values())
    denom = abs(acc.delta_I_sharp) + abs(integ["principal"]) + sum(abs(v) for v in acc.correction_terms.values())
    acc.absolute_residual = abs(acc.delta_I_sharp - rhs)
    acc.identity_residual = acc.absolute_residual / denom if denom > 0 else acc.absolute_residual
    acc.boundary_share = abs(integ.get("boundary", 0.0)) / denom if denom > 0 else 0.0
    acc.j4_defect = j4_def / scale_j4 if scale_j4 > 0 else j4_def
    if setup.small is not None and integ["principal"] != 0:
        acc.smallness = {"ratio": abs(integ["small"]) / abs(integ["principal"]), "predicted": setup.small_bound}
    acc.monotone = bool(np.all(np.diff(acc.I_sharp_series) >= -1e-12 * max(1.0, np.max(np.abs(acc.I_sharp_series)))))
    return acc


# regime builders -----------------------------------------------------------------------------

def _check_block(frame: LPFrame, block):
    sign, k = block
    if sign not in (1, -1) or not (frame.first <= k <= frame.top):
        raise MorawetzError(f"block {block} is not a dyadic block of the frame")


def _bilinear_norm2(sym: Callable, f: SpectralField, g: SpectralField, deriv: bool, windows) -> float:
    s = bilinear_density(lambda x, y: sym(x, y), f, g, None)
    if deriv:
        n = len(s)
        s = 1j * f.grid.dk * _modes(n) * s
    return float(f.grid.length * np.sum(np.abs(s) ** 2))


def _terms(fam, frame, spec, c, corrected, rel_sign=None):
    name, block, sign = spec
    sharp = None
    if corrected and c is not None:
        if frame.grid.n_points > SIX_LINEAR_MAX_N:
            raise MorawetzError(f"six-linear budget terms are evaluated by direct summation only for N <= {SIX_LINEAR_MAX_N}")
        sharp = build_sharp(c, fam, _KIND_OF[name], block, frame, sign, certify_samples=None)
    return _DensityTerm(fam, name, tuple(block), frame, sign, sharp, c)


def balanced_setup(d: DispersionRelation, frame: LPFrame, block, c: Optional[CubicSymbol] = None,
                   corrected: bool = True, rel_sign=None) -> _Setup:
    """``I = [M(u), P(v)] - [P(u), M(v)] + B_I`` on one block."""
    _check_block(frame, block)
    fam = make_family(d, frame.grid)
    if rel_sign is not None and not d.finite_speed:
        raise MorawetzError("relative densities need gamma < -1")
    mu = _terms(fam, frame, ("m", block, rel_sign), c, corrected)
    pu = _terms(fam, frame, ("p", block, rel_sign), c, corrected)
    mdiv = divide_morawetz_balanced(d, frame, block, certify_samples=None)
    b = mdiv.b4I.func
    w = mu.window
    BI = _QuarticCache(lambda *x: -1j * b(*x), frame.grid, (w, w, w, w))
    eps = 4.0 * frame.grid.dk

    def q(x, y):
        return divided_difference(d.a1, d.a2, x, y, eps)

    def principal(u, v):
        ul, vl = project(frame, u, *block), project(frame, v, *block)
        return _bilinear_norm2(q, ul, vl, True, None)

    pairs = [(1.0, mu, pu), (-1.0, pu, mu)]
    return _Setup("balanced", pairs, principal, None, BI, (tuple(block), tuple(block)))


def semibalanced_setup(d: DispersionRelation, frame: LPFrame, block_u, block_v, c=None, corrected=True) -> _Setup:
    """``I = [M(u_lam), M(v_mu)] + B_I`` with ``u_lam`` the faster block."""
    _check_block(frame, block_u)
    _check_block(frame, block_v)
    try:
        mdiv = divide_morawetz_semibalanced(d, frame, block_u, block_v, certify_samples=None)
    except ValueError as exc:
        raise MorawetzError(str(exc)) from exc
    fam = make_family(d, frame.grid)
    mu = _terms(fam, frame, ("m", block_u, None), c, corrected)
    mv = _terms(fam, frame, ("m", block_v, None), c, corrected)
    b = mdiv.b4I.func
    BI = _QuarticCache(lambda *x: -1j * b(*x), frame.grid, (mu.window, mu.window, mv.window, mv.window))

    def q(x, y):
        return np.sqrt(np.maximum(d.a1(x) - d.a1(y), 0.0))

    def principal(u, v):
        ul, vl = project(frame, u, *block_u), project(frame, v, *block_v)
        return _bilinear_norm2(q, ul, vl, False, None)

    return _Setup("semi_balanced", [(1.0, mu, mv)], principal, None, BI, (tuple(block_u), tuple(block_v)))


def _one(x, y):
    return np.ones(np.broadcast(x, y).shape)


def unbalanced_setup(d: DispersionRelation, frame: LPFrame, block_u, block_v, regime: Optional[str] = None,
                     c=None, corrected: bool = False) -> _Setup:
    """Unbalanced functionals; ``block_u`` is the high block (opposite-sign pair for the mismatched case)."""
    _check_block(frame, block_u)
    _check_block(frame, block_v)
    (su, ku), (sv, kv) = block_u, block_v
    if regime is None:
        if not d.finite_speed:
            regime = "unbalanced_gnls"
        else:
            regime = "unbalanced_gkg_matched" if su == sv else "gkg_mismatched"
    fam = make_family(d, frame.grid)
    lam, mu_ = frame.lam(ku), frame.lam(kv)
    g1 = d.gamma + 1.0

    def prod_norm(u, v):
        ul, vl = project(frame, u, *block_u), project(frame, v, *block_v)
        return _bilinear_norm2(_one, ul, vl, False, None)

    if regime == "unbalanced_gnls":
        if d.finite_speed:
            raise MorawetzError("the reverse-momentum functional is for gamma > -1")
        if ku - kv < 8:
            raise MorawetzError("unbalanced pairs need at least 8 ladder steps between the blocks")
        try:
            pc = _DensityTerm(fam, "p_check", tuple(block_u), frame, None, None, c)
            from .densities import localize
            localize(fam, "p_check", block_u, frame)
        except ValueError as exc:
            raise MorawetzError(str(exc)) from exc
        mv = _DensityTerm(fam, "m", tuple(block_v), frame, None, None, c)

        def small(u, v):
            ul, vl = project(frame, u, *block_u), project(frame, v, *block_v)
            A = bilinear_density(fam.symbol("p_check"), ul, ul, pc.window)
            B = bilinear_density(fam.symbol("p"), vl, vl, mv.window)
            return -product_integral(A, B, u.grid.length).real
        return _Setup(regime, [(-1.0, pc, mv)], prod_norm, small, None, (tuple(block_u), tuple(block_v)),
                      small_bound=(mu_ / lam) ** g1)
    if not d.finite_speed:
        raise MorawetzError(f"{regime} needs gamma < -1")
    if regime == "unbalanced_gkg_matched":
        if su != sv:
            raise MorawetzError("matched regime needs equal signs")
        if ku - kv < 8:
            raise MorawetzError("unbalanced pairs need at least 8 ladder steps between the blocks")
        mu = _DensityTerm(fam, "m", tuple(block_u), frame, su, None, c)
        try:
            from .densities import localize
            localize(fam, "p_check", block_v, frame, sv)
        except ValueError as exc:
            raise MorawetzError(str(exc)) from exc
        pcv = _DensityTerm(fam, "p_check", tuple(block_v), frame, sv, None, c)

        def small(u, v):
            ul, vl = project(frame, u, *block_u), project(frame, v, *block_v)
            A = bilinear_density(fam.symbol("p", su), ul, ul, mu.window)
            B = bilinear_density(fam.symbol("p_check", sv), vl, vl, pcv.window)
            return -product_integral(A, B, u.grid.length).real
        return _Setup(regime, [(1.0, mu, pcv)], prod_norm, small, None, (tuple(block_u), tuple(block_v)),
                      small_bound=(lam / mu_) ** g1)
    if regime == "gkg_mismatched":
        if not (su > 0 and sv < 0):
            raise MorawetzError("mismatched regime needs a positive first block and a negative second block")
        mu = _DensityTerm(fam, "m", tuple(block_u), frame, None, None, c)
        mv = _DensityTerm(fam, "m", tuple(block_v), frame, None, None, c)
        gap = d.v_minus - d.v_plus

        def principal(u, v):
            return gap * prod_norm(u, v)

        def small(u, v):
            ul, vl = project(frame, u, *block_u), project(frame, v, *block_v)
            L = u.grid.length
            Mu = bilinear_density(fam.symbol("m"), ul, ul, mu.window)
            Mv = bilinear_density(fam.symbol("m"), vl, vl, mv.window)
            Pv = bilinear_density(fam.symbol("p", -1), vl, vl, mv.window)
            Pu = bilinear_density(fam.symbol("p", 1), ul, ul, mu.window)
            return (product_integral(Mu, Pv, L) - product_integral(Pu, Mv, L)).real
        return _Setup(regime, [(1.0, mu, mv)], principal, small, None, (tuple(block_u), tuple(block_v)),
                      prefactor=gap, small_bound=lam ** g1 + mu_ ** g1)
    raise MorawetzError(f"unknown regime {regime!r}")


def _flow_for(d, c, u0, dt=0.01, tolerance=1e-12):
    if c is None:
        return LinearFlow(d, u0)
    return NonlinearFlow(d, c, u0, dt, tolerance)


def balanced_identity(d, c, u0: SpectralField, frame: LPFrame, block, x0: float = 0.0, t_end: float = 4.0,
                      n_panels: int = 16, rel_sign=None, dt: float = 0.01) -> MorawetzAccumulator:
    """Balanced identity for ``u`` and ``v = u(. - x0)``; ``c=None`` gives the linear flow."""
    setup = balanced_setup(d, frame, block, c, corrected=c is not None, rel_sign=rel_sign)
    return run_identity(setup, _flow_for(d, c, u0, dt), x0, t_end, n_panels)


def semibalanced_identity(d, c, u0, frame, block_u, block_v, x0: float = 0.0, t_end: float = 4.0,
                          n_panels: int = 16, dt: float = 0.01) -> MorawetzAccumulator:
    setup = semibalanced_setup(d, frame, block_u, block_v, c, corrected=c is not None)
    return run_identity(setup, _flow_for(d, c, u0, dt), x0, t_end, n_panels)


def unbalanced_identity(d, c, u0, frame, block_u, block_v, x0: float = 0.0, t_end: float = 4.0,
                        n_panels: int = 16, regime: Optional[str] = None, dt: float = 0.01) -> MorawetzAccumulator:
    setup = unbalanced_setup(d, frame, block_u, block_v, regime, c)
    return run_identity(setup, _flow_for(d, c, u0, dt), x0, t_end, n_panels)


def translation_family_data(d: DispersionRelation, frame: LPFrame, blocks, x0: float, t_end: float,
                            width: float = 1.0 / 16, amplitude: float = 1.0) -> SpectralField:
    """Wave packets on ``blocks`` placed so that ``u`` and ``u(. - x0)`` meet mid-run.

    The envelope is Gaussian with standard deviation ``width * L``; its centre
    sits at ``-x0/2`` minus half the mean travel over ``[0, t_end]``, which
    keeps both copies far from the box edge for every offset up to ``L/4``.
    """
    g = frame.grid
    xis = [s * frame.lam(k) for s, k in blocks]
    speed = float(np.mean([d.a1(np.array(x)) for x in xis]))
    centre = -0.5 * x0 - 0.5 * speed * t_end
    sigma = width * g.length
    env = np.exp(-0.5 * ((g.x - centre) / sigma) ** 2)
    vals = sum(env * np.exp(1j * x * g.x) for x in xis)
    return SpectralField.from_values(g, amplitude * vals)


# six-linear diagonal ------------------------------------------------------------------------

def j6_diagonal_trace(c: CubicSymbol, d: DispersionRelation, frame: LPFrame, block, xis=None) -> dict:
    """Six-linear balanced symbol on the full diagonal, assembled term by term.

    Returns the assembled values, the reference ``2 phi^4 c a''`` and the
    derived value ``phi^4 c a''``, with the worst relative deviation from each.
    """
    fam = make_family(d, frame.grid)
    sm = build_sharp(c, fam, "mass", block, frame, certify_samples=None)
    sp = build_sharp(c, fam, "momentum", block, frame, certify_samples=None)
    mdiv = divide_morawetz_balanced(d, frame, block, certify_samples=None)
    sign, k = block
    if xis is None:
        xis = sign * np.linspace(frame.step ** (k - 0.5), frame.step ** (k + 0.5), 7)
    xis = np.asarray(xis, dtype=float)
    z = [xis] * 4
    phi = frame.bump(block, xis)
    p = momentum_symbol(d, xis, xis, fam.eps_diag)
    m2, p2, e2 = phi ** 2, phi ** 2 * p, phi ** 2 * p * p
    beta_m, rho_m = sm.B4().func(*z), sm.R4().func(*z)
    beta_p, rho_p = sp.B4().func(*z), sp.R4().func(*z)
    j61 = (-p2 * beta_p - rho_m * p2 + m2 * rho_p + beta_m * e2
           + e2 * beta_m + rho_p * m2 - p2 * rho_m - beta_p * p2)
    beta_I = -1j * mdiv.b4I.func(*z)
    cd = c.c(xis, xis, xis)
    j62 = beta_I * phi ** 4 * (-1j * cd + 1j * np.conj(cd) - 1j * cd + 1j * np.conj(cd))
    assembled = j61 + j62
    ref = 2.0 * phi ** 4 * cd * d.a2(xis)
    derived = phi ** 4 * cd * d.a2(xis)
    return {
        "xi": xis, "assembled": assembled, "j61": j61, "j62": j62, "reference": ref, "derived": derived,
        "rel_dev_reference": float(np.max(np.abs(assembled - ref) / np.abs(ref))),
        "rel_dev_derived": float(np.max(np.abs(assembled - derived) / np.abs(derived))),
        "ratio": (assembled / ref).real,
    }
