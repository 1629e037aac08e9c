"""Measured norms of linear and small-data nonlinear flows.

Dispersive decay fits, transversal bilinear L^2 norms, mixed Strichartz
norms and per-block bootstrap monitors.  Every probe only reads states, so
running probes never changes a trajectory.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dispersion import DispersionRelation, galilean_shift
from .evolve import evolve, linear_propagate
from .forms import gauss_legendre
from .paley import FrequencyEnvelope, LPFrame, minimal_envelope, project
from .spectral_field import SpectralField, embed_series, make_grid

__all__ = [
    "ProbeError",
    "DecayFit",
    "BilinearStats",
    "BootReport",
    "block_packet",
    "decay_probe",
    "decay_setup",
    "bilinear_norm",
    "bilinear_linear_check",
    "mismatched_spread",
    "check_admissible_pair",
    "strichartz_norm",
    "strichartz_setup",
    "boot_monitor",
]


class ProbeError(ValueError):
    """Probe preconditions fail (regime, admissibility, sampling)."""


def _sup(u: SpectralField, oversample: int = 4) -> float:
    n = oversample * u.grid.n_points
    vals = np.fft.ifft(embed_series(u.series, n)) * n
    return float(np.max(np.abs(vals)))


def _l1(u: SpectralField) -> float:
    return float(np.mean(np.abs(u.values)) * u.grid.length)


def _lq(u: SpectralField, q: float, oversample: int = 2) -> float:
    if np.isinf(q):
        return _sup(u)
    n = oversample * u.grid.n_points
    vals = np.abs(np.fft.ifft(embed_series(u.series, n)) * n)
    return float((np.mean(vals ** q) * u.grid.length) ** (1.0 / q))


MAX_WIDTH = 0.125


def block_packet(grid, lam: float, sign: int = 1, width: float = 0.1, centre: float = 0.0,
                 phase: float = 0.0) -> SpectralField:
    """Packet with Gaussian frequency profile at ``sign*lam``, relative width ``width``.

    The profile is cut at six standard deviations, so with ``width <= 1/8``
    the data lives in ``lam/4 < |xi| < 7 lam/4`` and the cut leaves no
    visible tail in space.
    """
    if not 0 < width <= MAX_WIDTH:
        raise ProbeError(f"packet width must lie in (0, {MAX_WIDTH}]")
    k = grid.k
    xi0 = sign * lam
    prof = np.exp(-0.5 * ((k - xi0) / (width * lam)) ** 2)
    prof[np.abs(k - xi0) > 6.0 * width * lam] = 0.0
    series = prof * np.exp(-1j * k * centre + 1j * phase)
    return SpectralField(grid, series)


def _a2_max(d: DispersionRelation, xi0: float, width: float) -> float:
    """Largest ``a''`` over the packet support around ``xi0``."""
    r = np.linspace(xi0 * (1 - 6 * width), xi0 * (1 + 6 * width), 65)
    return float(np.max(d.a2(r)))


def _comoving(d: DispersionRelation, xi: float) -> DispersionRelation:
    return galilean_shift(d, float(d.a1(np.array(xi))))


# dispersive decay ---------------------------------------------------------------------

@dataclass
class DecayFit:
    """Least-squares decay exponent and normalized constant."""

    slope: float
    constant: float
    times: np.ndarray
    sup: np.ndarray
    lam: float
    gamma: float
    constants: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {"slope": self.slope, "constant": self.constant, "lam": self.lam, "gamma": self.gamma,
                "times": list(map(float, self.times)), "sup": list(map(float, self.sup))}


def decay_probe(d: DispersionRelation, u0: SpectralField, lam: float, times: Sequence[float],
                min_curvature: float = 1.0, wrap_limit: float = 1e-8) -> DecayFit:
    """Fit ``sup_x |e^{-itA} u0|`` against ``t`` on a log-log scale.

    Parameters
    ----------
    u0 : SpectralField
        Data localized near frequency ``lam``.
    times : sequence of float
        At least 5 positive times spanning a decade or more.
    min_curvature : float
        The earliest time must satisfy ``a''(lam) * dxi^2 * t >= min_curvature``
        where ``dxi`` is the rms frequency spread of ``u0``; earlier times are
        still in the pre-dispersive window.

    The flow runs in the frame moving with the group speed at ``lam``, which
    leaves ``sup_x`` unchanged and keeps the packet centred.
    """
    t = np.asarray(sorted(times), dtype=float)
    if t.size < 5 or t[0] <= 0:
        raise ProbeError("decay fits need at least 5 positive times")
    if t[-1] / t[0] < 10:
        raise ProbeError("times must span at least one decade")
    w = np.abs(u0.series) ** 2
    k = u0.grid.k
    mean = np.sum(w * k) / np.sum(w)
    spread = float(np.sqrt(np.sum(w * (k - mean) ** 2) / np.sum(w)))
    curv = float(d.a2(np.array(lam))) * spread ** 2 * t[0]
    if curv < min_curvature:
        raise ProbeError(f"decay regime not reached at t={t[0]:.3g} (curvature number {curv:.2g})")
    dc = _comoving(d, mean)
    sup = np.empty_like(t)
    for i, ti in enumerate(t):
        u = linear_propagate(dc, u0, ti)
        if u.mass_outside_center() > wrap_limit:
            raise ProbeError(f"wrap guard tripped at t={ti:.3g}; enlarge the box")
        sup[i] = _sup(u)
    slope = float(np.polyfit(np.log(t), np.log(sup), 1)[0])
    consts = sup * lam ** (d.gamma / 2) * np.sqrt(t) / _l1(u0)
    return DecayFit(slope, float(consts.max()), t, sup, float(lam), d.gamma, consts)


def decay_setup(d: DispersionRelation, lam: float, width: float = 0.1, tau=(20.0, 400.0), n_times: int = 9,
                n_points: Optional[int] = None):
    """Grid, data and times for a decay run at ``lam``.

    Times are ``tau / (a''(lam) dxi^2)`` so that the run covers the same
    stretch of the dispersive regime at every frequency.
    """
    dxi = width * lam
    t_unit = 1.0 / (float(d.a2(np.array(lam))) * dxi ** 2)
    times = np.geomspace(tau[0], tau[1], n_times) * t_unit
    a2max = _a2_max(d, lam, width)
    reach = a2max * 6 * dxi * times[-1] + 12.0 / dxi
    length = 4.0 * reach
    kmax = 2.0 * lam
    n = n_points or int(2 ** np.ceil(np.log2(2 * kmax * length / (2 * np.pi))))
    grid = make_grid(n, length)
    return grid, block_packet(grid, lam, 1, width), times


# bilinear L^2 ---------------------------------------------------------------------------

def _product(u: SpectralField, v: SpectralField, derivative: bool) -> np.ndarray:
    n = 2 * u.grid.n_points
    a = np.fft.ifft(embed_series(u.series, n)) * n
    b = np.fft.ifft(embed_series(v.series, n)) * n
    prod = a * np.conj(b)
    if derivative:
        s = np.fft.fft(prod) / n
        m = np.fft.fftfreq(n, 1.0 / n)
        prod = np.fft.ifft(1j * u.grid.dk * m * s) * n
    return prod


def bilinear_norm(d: DispersionRelation, u0: SpectralField, v0: SpectralField, t_end: float, x0: float = 0.0,
                  derivative: bool = False, n_panels: int = 32, n_nodes: int = 8) -> float:
    """``|| u conj(v^{x0}) ||_{L^2_{t,x}([0,t_end])}`` for linear solutions."""
    tn, wn = gauss_legendre(n_nodes)
    h = t_end / n_panels
    total = 0.0
    length = u0.grid.length
    for p in range(n_panels):
        for t, w in zip(tn, wn):
            tt = (p + t) * h
            u = linear_propagate(d, u0, tt)
            v = linear_propagate(d, v0, tt).shift(x0)
            prod = _product(u, v, derivative)
            total += h * w * float(np.mean(np.abs(prod) ** 2) * length)
    return float(np.sqrt(total))


@dataclass
class BilinearStats:
    """Ratios ``||u v||_{L^2_{t,x}} / (||u0|| ||v0||)`` over a sweep."""

    pairs: List[Tuple[float, float]]
    signs: Tuple[int, int]
    ratios: List[float]
    max_ratios: List[float]
    factors: List[float]
    exponent: float
    spread: float
    gamma: float
    mu_exponent: float = float("nan")

    def to_dict(self) -> dict:
        return {"pairs": self.pairs, "signs": list(self.signs), "ratios": self.ratios, "max_ratios": self.max_ratios,
                "factors": self.factors, "exponent": self.exponent, "spread": self.spread, "gamma": self.gamma,
                "mu_exponent": self.mu_exponent}


def _pair_geometry(d: DispersionRelation, lam: float, mu: float, signs, width: float):
    xu, xv = signs[0] * lam, signs[1] * mu
    au, av = float(d.a1(np.array(xu))), float(d.a1(np.array(xv)))
    dv = au - av
    if abs(dv) < 1e-14:
        raise ProbeError("the two blocks move at the same speed")
    su, sv = 1.0 / (width * lam), 1.0 / (width * mu)
    sep = 6.0 * (su + sv)
    t_end = 2.0 * sep / abs(dv)
    spread = max(_a2_max(d, xu, width) * 6 * width * lam, _a2_max(d, xv, width) * 6 * width * mu) * t_end
    reach = sep + spread + 6.0 * max(su, sv)
    length = 4.0 * reach
    kmax = 2.0 * max(lam, mu)
    n = int(2 ** np.ceil(np.log2(2 * kmax * length / (2 * np.pi))))
    # the faster packet starts behind the slower one
    cu = -0.5 * sep * np.sign(dv)
    return make_grid(n, length), (xu, xv, cu, -cu, t_end, 0.5 * (au + av))


def bilinear_linear_check(d: DispersionRelation, pairs: Sequence[Tuple[float, float]], signs=(1, 1),
                          n_trials: int = 3, derivative: bool = False, width: float = 0.1, seed: int = 0
                          ) -> BilinearStats:
    """Sweep ``(lam, mu)`` pairs and fit the transversal scaling.

    The fitted ``exponent`` is the slope of ``log ratio`` against
    ``log(lam^(gamma+1) + mu^(gamma+1))``; transversality predicts ``-1/2``.
    ``mu_exponent`` is the slope against ``log mu``, which for the sweeps
    used here (``lam/mu`` fixed, or ``lam`` fixed with ``gamma < -1``)
    should be ``-(gamma+1)/2``.
    ``spread`` is ``max/min`` of the per-pair maxima.
    """
    rng = np.random.default_rng(seed)
    pairs = [(float(a), float(b)) for a, b in pairs]
    for lam, mu in pairs:
        if signs[0] == signs[1] and abs(lam - mu) <= 1e-12 * lam and not derivative:
            raise ProbeError("equal blocks with matched signs need the derivative form")
    ratios, maxima, factors = [], [], []
    for lam, mu in pairs:
        grid, (xu, xv, cu, cv, t_end, vbar) = _pair_geometry(d, lam, mu, signs, width)
        dc = galilean_shift(d, vbar)
        vals = []
        for _ in range(n_trials):
            wu, wv = width * rng.uniform(0.8, 1.0), width * rng.uniform(0.8, 1.0)
            ju, jv = rng.uniform(-0.5, 0.5) / (width * lam), rng.uniform(-0.5, 0.5) / (width * mu)
            u0 = block_packet(grid, lam, signs[0], wu, cu + ju, rng.uniform(0, 2 * np.pi))
            v0 = block_packet(grid, mu, signs[1], wv, cv + jv, rng.uniform(0, 2 * np.pi))
            nrm = bilinear_norm(dc, u0, v0, t_end, derivative=derivative)
            vals.append(nrm / (u0.norm() * v0.norm()))
        ratios.append(float(np.mean(vals)))
        maxima.append(float(np.max(vals)))
        factors.append(lam ** (d.gamma + 1) + mu ** (d.gamma + 1))
    if len(pairs) >= 2 and np.ptp(np.log(factors)) > 0:
        exponent = float(np.polyfit(np.log(factors), np.log(ratios), 1)[0])
    else:
        exponent = float("nan")
    mus = [mu for _, mu in pairs]
    mu_exp = float(np.polyfit(np.log(mus), np.log(ratios), 1)[0]) if np.ptp(np.log(mus)) > 0 else float("nan")
    spread = float(max(maxima) / min(maxima))
    return BilinearStats(pairs, tuple(signs), ratios, maxima, factors, exponent, spread, d.gamma, mu_exp)


def mismatched_spread(d: DispersionRelation, scales: Sequence[float] = (8, 16, 32, 64), n_trials: int = 2,
                      seed: int = 0) -> BilinearStats:
    """Opposite-sign pairs over ``scales x scales`` (the finite-speed improvement)."""
    if not d.finite_speed:
        raise ProbeError("the opposite-sign improvement is a gamma < -1 statement")
    pairs = [(a, b) for a in scales for b in scales]
    return bilinear_linear_check(d, pairs, signs=(1, -1), n_trials=n_trials, seed=seed)


# Strichartz --------------------------------------------------------------------------------

def check_admissible_pair(p: float, q: float) -> None:
    """Raise unless ``2/p + 1/q = 1/2`` with ``2 <= q <= inf`` (exact for rationals)."""
    def inv(x):
        return Fraction(0) if np.isinf(x) else Fraction(x).limit_denominator(10 ** 6) ** -1
    if not (q >= 2):
        raise ProbeError("q must be at least 2")
    if 2 * inv(p) + inv(q) != Fraction(1, 2):
        raise ProbeError(f"(p, q) = ({p}, {q}) is not admissible: 2/p + 1/q must equal 1/2")


def strichartz_norm(d: DispersionRelation, states: Sequence[Tuple[float, SpectralField]], p: float, q: float,
                    lam: Optional[float] = None) -> dict:
    """Discrete ``L^p_t L^q_x`` norm over sampled states (composite trapezoid in time).

    ``states`` holds ``(t, u)`` pairs in increasing time.  The value times
    ``lam^(gamma/p)`` is reported as ``normalized`` when ``lam`` is given.
    """
    check_admissible_pair(p, q)
    ts = np.array([t for t, _ in states], dtype=float)
    vals = np.array([_lq(u, q) for _, u in states])
    if np.isinf(p):
        value = float(vals.max())
    else:
        if len(ts) < 2:
            raise ProbeError("need at least two samples for a time integral")
        value = float(np.trapezoid(vals ** p, ts) ** (1.0 / p))
    out = {"p": p, "q": q, "value": value}
    if lam is not None:
        out["normalized"] = value * (lam ** (d.gamma / p) if not np.isinf(p) else 1.0)
    return out


def strichartz_setup(d: DispersionRelation, lam: float, width: float = 0.1, tau: float = 200.0, n_times: int = 2049):
    """Linear block data and sample times for the ``L^4_t L^inf_x`` sweep (comoving frame)."""
    grid, u0, _ = decay_setup(d, lam, width, tau=(1.0, tau))
    u0 = u0 * (1.0 / u0.norm())
    dxi = width * lam
    t_end = tau / (float(d.a2(np.array(lam))) * dxi ** 2)
    dc = _comoving(d, lam)
    ts = np.linspace(0.0, t_end, n_times)
    return [(t, linear_propagate(dc, u0, t)) for t in ts]


# bootstrap monitors ----------------------------------------------------------------------------

@dataclass
class BootReport:
    """Per-block margins of the three bootstrap bounds."""

    rows: List[Tuple[float, tuple, str, float, float, float]] = field(default_factory=list)
    max_margin: Dict[str, float] = field(default_factory=dict)
    eps: float = 0.0
    outside_smallness: bool = False
    final_state: Optional[SpectralField] = None

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "block", "monitor", "value", "bound", "margin"])
            for t, b, m, v, bd, mg in self.rows:
                w.writerow([repr(float(t)), f"{b[0]:+d},{b[1]}", m, repr(float(v)), repr(float(bd)), repr(float(mg))])
        return path

    def to_dict(self) -> dict:
        return {"max_margin": self.max_margin, "eps": self.eps, "outside_smallness": self.outside_smallness,
                "n_rows": len(self.rows)}


SMALLNESS_MARGIN = 2.0
SMALL_EPS = 0.1


def boot_monitor(d: DispersionRelation, c, u0: SpectralField, frame: LPFrame, s_c: float, delta: float,
                 eps: Optional[float] = None, t_end: float = 1.0, sample_dt: Optional[float] = None,
                 x0s: Sequence[float] = (0.0,), dt: float = 0.05, tolerance: float = 1e-10,
                 envelope: Optional[FrequencyEnvelope] = None, probes: bool = True,
                 active_fraction: float = 1e-6) -> BootReport:
    """Run the flow and monitor the three bootstrap bounds block by block.

    Margins are measured value over normalized bound:

    * energy: ``||u_lam(t)||_{H^s_c} / (eps c_lam)``;
    * Strichartz: ``||u_lam||_{L^6_{t,x}[0,t]} / ((eps c_lam)^(2/3) lam^(-(4 s_c - 1 + 3 delta)/6))``;
    * bilinear: ``||d_x(u_lam conj u_mu^{x0})||_{L^2_{t,x}[0,t]}`` over
      ``eps^2 c_lam c_mu lam^-s_c mu^-s_c (lam + mu) / (lam^(gamma+1) + mu^(gamma+1))^(1/2)``
      for matched signs.

    ``eps`` defaults to the ``H^s_c`` norm of the data so that the envelope
    is normalized in l^2.  Blocks whose envelope is below ``active_fraction``
    of the largest are skipped.  With ``probes=False`` only the flow runs
    (used to check that probes are passive).
    """
    if eps is None:
        eps = u0.sobolev_norm(s_c)
    env = envelope or minimal_envelope(frame, u0, s_c, eps=eps)
    cmax = max(env.values.values())
    blocks = [b for b in frame.blocks if b[1] > 0 and env.values[b] > active_fraction * cmax]
    lam_of = {b: frame.lam(b[1]) for b in blocks}
    if sample_dt is None:
        # the fastest in-block phase difference advances less than pi/4 per sample
        rate = 1e-12
        for b in blocks:
            lo, hi = frame.support(b)
            hi = min(hi, frame.grid.max_frequency) if np.isfinite(hi) else frame.grid.max_frequency
            lo = max(lo, -frame.grid.max_frequency)
            r = np.linspace(lo, hi, 65)
            rate = max(rate, float(np.ptp(d.a(r))))
        sample_dt = min(dt, 0.25 * np.pi / rate)
    n_samples = max(2, int(np.ceil(t_end / sample_dt)) + 1)
    ts = np.linspace(0.0, t_end, n_samples)
    rep = BootReport(eps=float(eps))
    l6 = {b: 0.0 for b in blocks}
    bil = {(b1, b2, x0): 0.0 for b1 in blocks for b2 in blocks if b1[0] == b2[0] for x0 in x0s}
    prev = {}
    u = u0
    t_prev = 0.0
    maxm = {"energy": 0.0, "strichartz": 0.0, "bilinear": 0.0}
    gam = d.gamma

    def e_bound(b):
        return eps * env.values[b]

    for i, t in enumerate(ts):
        if t > t_prev:
            u = evolve(d, c, u, t - t_prev, dt, tolerance, t0=t_prev).u
            t_prev = t
        if not probes:
            continue
        proj = {b: project(frame, u, *b) for b in blocks}
        cur_l6 = {b: _lq(proj[b], 6) ** 6 for b in blocks}
        cur_bi = {}
        for (b1, b2, x0) in bil:
            prod = _product(proj[b1], proj[b2].shift(x0), True)
            cur_bi[(b1, b2, x0)] = float(np.mean(np.abs(prod) ** 2) * u.grid.length)
        if i > 0:
            h = t - ts[i - 1]
            for b in blocks:
                l6[b] += 0.5 * h * (cur_l6[b] + prev["l6"][b])
            for key in bil:
                bil[key] += 0.5 * h * (cur_bi[key] + prev["bi"][key])
        prev = {"l6": cur_l6, "bi": cur_bi}
        for b in blocks:
            lam = lam_of[b]
            val = proj[b].sobolev_norm(s_c)
            bd = e_bound(b)
            rep.rows.append((t, b, "energy", val, bd, val / bd))
            maxm["energy"] = max(maxm["energy"], val / bd)
            if i > 0:
                v6 = l6[b] ** (1.0 / 6)
                bd6 = e_bound(b) ** (2.0 / 3) * lam ** (-(4 * s_c - 1 + 3 * delta) / 6)
                rep.rows.append((t, b, "strichartz", v6, bd6, v6 / bd6))
                maxm["strichartz"] = max(maxm["strichartz"], v6 / bd6)
        if i > 0:
            for (b1, b2, x0), acc in bil.items():
                l1, l2 = lam_of[b1], lam_of[b2]
                bd = (e_bound(b1) * e_bound(b2) * l1 ** -s_c * l2 ** -s_c * (l1 + l2)
                      / np.sqrt(l1 ** (gam + 1) + l2 ** (gam + 1)))
                val = float(np.sqrt(acc))
                if i == len(ts) - 1:
                    rep.rows.append((t, b1, f"bilinear{b2}@{x0:g}", val, bd, val / bd))
                maxm["bilinear"] = max(maxm["bilinear"], val / bd)
    rep.max_margin = maxm
    rep.final_state = u
    rep.outside_smallness = eps > SMALL_EPS or any(v > SMALLNESS_MARGIN for v in maxm.values())
    return rep
