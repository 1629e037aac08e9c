"""Littlewood-Paley partition with a small step and frequency envelopes."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Tuple

import numpy as np

from .spectral_field import PeriodicGrid, SpectralField

__all__ = [
    "LPFrame",
    "FrequencyEnvelope",
    "smooth_step",
    "build_frame",
    "project",
    "minimal_envelope",
    "envelope_sobolev_readout",
    "check_admissible",
    "Block",
]

Block = Tuple[int, int]  # (sign, k) with sign in {+1, -1}; block 0 uses sign 0


def _glue(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(t):
    """C-infinity step: 0 for ``t <= -1``, 1 for ``t >= 0``."""
    s = np.asarray(t, dtype=float) + 1.0
    num = _glue(s)
    return num / (num + _glue(1.0 - s))


@dataclass(frozen=True)
class LPFrame:
    """Smooth partition ``p0 + sum_{sign,k} p_k^sign = 1``.

    ``p_k^+`` lives on ``[step^(k-1), step^(k+1)]`` for ``first <= k <= K``
    and ``p_k^-`` is its mirror.  The low bump ``p0`` equals 1 on
    ``|xi| <= step^(first-1)`` and vanishes for ``|xi| >= step^first``, which
    is at most ``low_cut``.  The top block ``K`` absorbs everything above
    ``step^K`` so that the partition is exact on the grid.
    """

    step: float
    top: int
    grid: PeriodicGrid
    first: int = 1

    @property
    def K(self) -> int:
        return self.top

    def _level(self, xi):
        axi = np.abs(np.asarray(xi, dtype=float))
        with np.errstate(divide="ignore"):
            return np.where(axi > 0, np.log(np.maximum(axi, 1e-300)) / np.log(self.step), -np.inf)

    def lam(self, k: int) -> float:
        """Block centre ``step^k`` (1 for the low block)."""
        return float(self.step ** k) if k > 0 else 1.0

    def radial(self, k: int, xi):
        """Unsigned bump of block ``k`` at ``|xi|``."""
        ell = self._level(xi)
        if k == 0:
            return 1.0 - smooth_step(ell - self.first)
        if k == self.top:
            return smooth_step(ell - k)
        return smooth_step(ell - k) - smooth_step(ell - k - 1.0)

    def bump(self, block: Block, xi):
        """``p_k^sign(xi)``; block ``(0, 0)`` is the low-frequency bump."""
        sign, k = block
        xi = np.asarray(xi, dtype=float)
        if k == 0:
            return self.radial(0, xi)
        if k < self.first or k > self.top or sign not in (1, -1):
            raise ValueError(f"block {block} out of range (K = {self.top})")
        return np.where(sign * xi > 0, self.radial(k, xi), 0.0)

    def support(self, block: Block) -> Tuple[float, float]:
        """Closed interval containing the support of the bump."""
        sign, k = block
        if k == 0:
            return (-self.step ** self.first, self.step ** self.first)
        lo = self.step ** (k - 1)
        hi = self.step ** (k + 1) if k < self.top else np.inf
        return (lo, hi) if sign > 0 else (-hi, -lo)

    @cached_property
    def blocks(self):
        out = [(0, 0)]
        for k in range(self.first, self.top + 1):
            out += [(1, k), (-1, k)]
        return out

    def index(self, k: int) -> int:
        """Position on the dyadic ladder; the low block sits just below ``first``."""
        return self.first - 1 if k == 0 else k

    def block_of(self, xi) -> np.ndarray:
        """Signed nearest ladder index ``sign*round(log_step|xi|)`` (no clipping to blocks)."""
        xi = np.asarray(xi, dtype=float)
        ell = self._level(xi)
        k = np.clip(np.rint(np.where(np.abs(xi) > 1, ell, 0.0)), 0, None)
        return (np.sign(xi) * k).astype(int)


def build_frame(grid: PeriodicGrid, step: float, low_cut: float = 2.0) -> LPFrame:
    """Build the partition for ``grid`` with ratio ``step`` in ``(1, 1.5]``.

    Parameters
    ----------
    low_cut : float
        The low bump is supported inside ``|xi| < low_cut``; raise it on
        coarse grids so that every remaining bump sees at least 4 grid
        frequencies.
    """
    if not (1.0 < step <= 1.5):
        raise ValueError(f"step must lie in (1, 1.5], got {step}")
    if low_cut < step:
        raise ValueError("low_cut must be at least step")
    xmax = grid.max_frequency
    if xmax < step ** 2:
        raise ValueError("grid too coarse: max frequency below step^2")
    first = max(1, int(np.floor(np.log(low_cut) / np.log(step) + 1e-12)))
    top = int(np.ceil(np.log(xmax) / np.log(step) - 1e-12)) - 1
    if top < first:
        raise ValueError("grid too coarse for a single dyadic block above the low bump")
    frame = LPFrame(step=step, top=top, grid=grid, first=first)
    # every bump must see at least 4 grid frequencies
    freqs = grid.frequencies
    for k in [0] + list(range(first, top + 1)):
        n_in = int(np.count_nonzero(frame.radial(k, freqs[freqs >= 0]) > 0))
        if n_in < 4:
            raise ValueError(f"block {k} resolves only {n_in} grid frequencies; refine the grid or enlarge step")
    return frame


def project(frame: LPFrame, field: SpectralField, sign: int, k: int) -> SpectralField:
    """Fourier multiplier by ``p_k^sign``."""
    if field.grid != frame.grid:
        raise ValueError("field and frame grids differ")
    return field.multiplier(frame.bump((sign, k) if k else (0, 0), field.grid.k))


# envelopes ------------------------------------------------------------------

@dataclass(frozen=True)
class FrequencyEnvelope:
    """Slowly varying majorant ``c_k^sign`` of dyadic block sizes.

    ``values[(sign, k)]``; the low block is stored under both ``(1, 0)`` and
    ``(-1, 0)`` with equal values.
    """

    values: Dict[Block, float]
    step: float
    delta_lo: float
    C_hi: float
    s_ref: float
    first: int = 1

    def index(self, k: int) -> int:
        return self.first - 1 if k == 0 else k

    def as_rows(self):
        """Rows ``(sign, k, lambda_k, c_k)`` for CSV output."""
        return [(s, k, self.step ** k if k else 1.0, v) for (s, k), v in sorted(self.values.items())]

    def lam(self, k: int) -> float:
        return self.step ** k if k else 1.0


def _weight(step, delta_lo, C_hi, j, k):
    """Propagation weight from data block ``j`` to envelope block ``k``.

    Upward (``k >= j``) the envelope may decay at most like ``step^(-C_hi)``
    per block, downward at most like ``step^(-delta_lo)``.
    """
    if k >= j:
        return step ** (-C_hi * (k - j))
    return step ** (-delta_lo * (j - k))


def minimal_envelope(frame: LPFrame, field: SpectralField, s_ref: float,
                     delta_lo: float = 0.1, C_hi: float = 10.0, eps: float = 1.0) -> FrequencyEnvelope:
    """Pointwise least admissible envelope dominating ``||P_k u||_{H^s_ref}/eps``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if field.norm() == 0:
        raise ValueError("field must be nonzero")
    ks = [0] + list(range(frame.first, frame.top + 1))
    data = {}
    for sign in (1, -1):
        for k in ks:
            proj = project(frame, field, sign, k)
            data[(sign, k)] = proj.sobolev_norm(s_ref) / eps
    # the low block is shared by both signs
    data[(1, 0)] = data[(-1, 0)] = data[(1, 0)]
    idx = frame.index
    c = frame.step
    vals = {}
    for sign in (1, -1):
        for k in ks:
            best = 0.0
            for j in ks:
                best = max(best, data[(sign, j)] * _weight(c, delta_lo, C_hi, idx(j), idx(k)))
                # coupling through the shared low block
                best = max(best, data[(-sign, j)] * _weight(c, delta_lo, C_hi, idx(j), idx(0))
                           * _weight(c, delta_lo, C_hi, idx(0), idx(k)))
            vals[(sign, k)] = best
    return FrequencyEnvelope(values=vals, step=frame.step, delta_lo=delta_lo, C_hi=C_hi, s_ref=s_ref,
                             first=frame.first)


def check_admissible(env: FrequencyEnvelope, rtol: float = 1e-12) -> bool:
    """Exhaustive pair scan of the two slow-variation inequalities."""
    c = env.step
    if abs(env.values[(1, 0)] - env.values[(-1, 0)]) > rtol * max(env.values[(1, 0)], 1e-300):
        return False
    ks = sorted({k for (_, k) in env.values})
    for sign in (1, -1):
        for j in ks:
            for k in ks:
                if j > k:
                    continue
                cj, ck = env.values[(sign, j)], env.values[(sign, k)]
                if ck == 0.0:
                    if cj != 0.0:
                        return False
                    continue
                r = cj / ck
                gap = env.index(k) - env.index(j)
                if r < c ** (-env.delta_lo * gap) * (1 - rtol) or r > c ** (env.C_hi * gap) * (1 + rtol):
                    return False
    return True


def envelope_sobolev_readout(env: FrequencyEnvelope, s1: float) -> float:
    """``sum lambda_k^(2(s1 - s_ref)) c_k^2`` over both signs (low block once)."""
    total = 0.0
    for (sign, k), v in env.values.items():
        if k == 0 and sign == -1:
            continue
        lam = env.step ** k if k else 1.0
        total += lam ** (2 * (s1 - env.s_ref)) * v * v
    return total
