"""Exact linear propagation and integrating-factor RK4 for the cubic flow.

The equation is ``d/dt u_hat = -i a(xi) u_hat - i C(u, conj u, u)_hat`` with
the cubic term dealiased onto the grid band.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .dispersion import DispersionRelation
from .forms import CubicSymbol, eval_trilinear
from .spectral_field import SpectralField

__all__ = [
    "FlowState",
    "EvolveConfig",
    "DiagnosticReport",
    "StepFailure",
    "WrapGuardError",
    "linear_propagate",
    "rk4_step",
    "nonlinear_step",
    "evolve",
    "evolve_with_diagnostics",
    "DIAGNOSTICS",
    "register_diagnostic",
]

WRAP_LIMIT = 1e-8


class StepFailure(RuntimeError):
    """Step-doubling did not converge after the allowed number of halvings."""


class WrapGuardError(RuntimeError):
    """The solution carries mass into the outer half of the periodic box."""


@dataclass(frozen=True)
class FlowState:
    """Snapshot of the flow."""

    t: float
    u: SpectralField
    step_count: int = 0
    accepted_dt: float = 0.0
    error_estimate: float = 0.0


@dataclass
class EvolveConfig:
    """Stepping parameters.

    ``diagnostics`` holds ``(name, period)`` pairs; the period counts accepted
    steps.  ``wrap_limit`` is the largest tolerated mass fraction outside the
    central half of the box (``None`` disables the guard).
    """

    dt: float
    t_end: float
    tolerance: float = 1e-10
    diagnostics: List[Tuple[str, int]] = field(default_factory=list)
    eps: Optional[float] = None
    adaptive: bool = True
    max_halvings: int = 10
    wrap_limit: Optional[float] = WRAP_LIMIT

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        for name, period in self.diagnostics:
            if int(period) < 1:
                raise ValueError(f"diagnostic {name!r} needs a positive period")


def linear_propagate(d: DispersionRelation, u: SpectralField, t: float) -> SpectralField:
    """Exact homogeneous flow ``u_hat(t) = exp(-i t a) u_hat(0)``."""
    if t == 0:
        return u
    return u.multiplier(np.exp(-1j * t * d.a(u.grid.k)))


def _is_zero(c) -> bool:
    return c is None or (isinstance(c, CubicSymbol) and getattr(c, "_zero", False))


def _rhs(c, u: SpectralField) -> SpectralField:
    return eval_trilinear(c, u) * (-1j)


def rk4_step(d: DispersionRelation, c, u: SpectralField, h: float) -> SpectralField:
    """One integrating-factor RK4 step of signed length ``h``."""
    if _is_zero(c):
        return linear_propagate(d, u, h)
    a = d.a(u.grid.k)
    e_half = np.exp(-0.5j * h * a)
    e_full = e_half * e_half
    k1 = _rhs(c, u)
    k2 = _rhs(c, (u + k1 * (0.5 * h)).multiplier(e_half))
    uh = u.multiplier(e_half)
    k3 = _rhs(c, uh + k2 * (0.5 * h))
    k4 = _rhs(c, u.multiplier(e_full) + k3.multiplier(e_half) * h)
    incr = k1.multiplier(e_full) + (k2 + k3).multiplier(2.0 * e_half) + k4
    return u.multiplier(e_full) + incr * (h / 6.0)


def _rel_diff(a: SpectralField, b: SpectralField) -> float:
    n = max(a.norm(), 1e-300)
    return (a - b).norm() / n


def nonlinear_step(d: DispersionRelation, c, state: FlowState, dt: float, tolerance: float = 1e-10,
                   max_halvings: int = 10, direction: int = 1) -> FlowState:
    """Advance by at most ``dt`` with step doubling; ``dt`` is halved on failure.

    The accepted value is the two-half-step result; the reported error is
    the relative difference to the single step.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if _is_zero(c):
        h = direction * dt
        return FlowState(state.t + h, linear_propagate(d, state.u, h), state.step_count + 1, dt, 0.0)
    step = dt
    for _ in range(max_halvings + 1):
        h = direction * step
        full = rk4_step(d, c, state.u, h)
        half = rk4_step(d, c, rk4_step(d, c, state.u, 0.5 * h), 0.5 * h)
        err = _rel_diff(half, full)
        if err <= tolerance:
            return FlowState(state.t + h, half, state.step_count + 1, step, err)
        step *= 0.5
    raise StepFailure(f"no convergence after {max_halvings} halvings (last error {err:.2e})")


def evolve(d: DispersionRelation, c, u0: SpectralField, t_end: float, dt: float, tolerance: float = 1e-10,
           adaptive: bool = True, direction: int = 1, t0: float = 0.0) -> FlowState:
    """Evolve to ``t0 + direction * t_end`` and return the final state."""
    state = FlowState(t0, u0)
    target = t0 + direction * t_end
    while direction * (target - state.t) > 1e-14 * max(1.0, abs(target)):
        h = min(dt, direction * (target - state.t))
        if adaptive:
            state = nonlinear_step(d, c, state, h, tolerance, direction=direction)
        else:
            state = FlowState(state.t + direction * h, rk4_step(d, c, state.u, direction * h),
                              state.step_count + 1, h)
    return state


# diagnostics ----------------------------------------------------------------

DiagFunc = Callable[[FlowState, dict], dict]
DIAGNOSTICS: Dict[str, DiagFunc] = {}


def register_diagnostic(name: str):
    """Decorator adding a diagnostic ``f(state, context) -> dict`` to the registry."""
    def deco(f: DiagFunc) -> DiagFunc:
        DIAGNOSTICS[name] = f
        return f
    return deco


@register_diagnostic("mass")
def _diag_mass(state: FlowState, ctx: dict) -> dict:
    m0 = ctx["mass0"]
    m = state.u.mass()
    return {"mass": m, "drift": abs(m - m0) / m0 if m0 else 0.0}


@register_diagnostic("mass_residual")
def _diag_mass_residual(state: FlowState, ctx: dict) -> dict:
    from .densities import linear_flux_residual, make_family
    fam = make_family(ctx["d"], state.u.grid)
    r = linear_flux_residual(fam, state.u, "mass")
    return {"residual": r["relative"], "l1": r["l1"]}


@register_diagnostic("wrap")
def _diag_wrap(state: FlowState, ctx: dict) -> dict:
    return {"outside_fraction": state.u.mass_outside_center()}


@dataclass
class DiagnosticReport:
    """Time series of norms and diagnostic rows with pass/fail verdicts."""

    times: List[float] = field(default_factory=list)
    norms: List[float] = field(default_factory=list)
    rows: Dict[str, List[dict]] = field(default_factory=dict)
    verdicts: Dict[str, bool] = field(default_factory=dict)
    aborted: bool = False
    abort_reason: str = ""
    steps: int = 0
    final_state: Optional[FlowState] = None

    def to_dict(self) -> dict:
        return {"times": self.times, "norms": self.norms, "rows": self.rows, "verdicts": self.verdicts,
                "aborted": self.aborted, "abort_reason": self.abort_reason, "steps": self.steps}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_csv(self, directory) -> List[Path]:
        """One CSV per diagnostic plus ``norms.csv``; returns the paths."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        p = out / "norms.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "l2_norm"])
            for t, n in zip(self.times, self.norms):
                w.writerow([repr(float(t)), repr(float(n))])
        paths.append(p)
        for name, rows in sorted(self.rows.items()):
            p = out / f"{name}.csv"
            keys = sorted({k for r in rows for k in r})
            with p.open("w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=keys)
                w.writeheader()
                for r in rows:
                    w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
            paths.append(p)
        return paths


def evolve_with_diagnostics(d: DispersionRelation, c, u0: SpectralField, config: EvolveConfig,
                            registry: Optional[Dict[str, DiagFunc]] = None) -> DiagnosticReport:
    """Advance to ``config.t_end`` running the configured hooks at their periods.

    A wrap-guard trip ends the run with a partial report (``aborted`` set).
    """
    reg = dict(DIAGNOSTICS)
    if registry:
        reg.update(registry)
    for name, _ in config.diagnostics:
        if name not in reg:
            raise ValueError(f"unknown diagnostic {name!r}")
    ctx = {"d": d, "c": c, "mass0": u0.mass(), "u0": u0, "config": config}
    rep = DiagnosticReport(rows={name: [] for name, _ in config.diagnostics})
    state = FlowState(0.0, u0)
    rep.times.append(0.0)
    rep.norms.append(u0.norm())
    n_steps = max(1, int(math.ceil(config.t_end / config.dt - 1e-9))) if config.t_end > 0 else 0
    for _ in range(n_steps):
        h = min(config.dt, config.t_end - state.t)
        if h <= 1e-14 * max(1.0, config.t_end):
            break
        if config.adaptive:
            state = _advance_adaptive(d, c, state, h, config)
        else:
            state = FlowState(state.t + h, rk4_step(d, c, state.u, h), state.step_count + 1, h)
        rep.times.append(state.t)
        rep.norms.append(state.u.norm())
        last = config.t_end - state.t <= 1e-14 * max(1.0, config.t_end)
        for name, period in config.diagnostics:
            # every period-th step, plus the final state
            if state.step_count % int(period) == 0 or last:
                row = {"t": state.t, "step": state.step_count}
                row.update(reg[name](state, ctx))
                rep.rows[name].append(row)
        if config.wrap_limit is not None:
            frac = state.u.mass_outside_center()
            if frac > config.wrap_limit:
                rep.aborted = True
                rep.abort_reason = f"wrap guard: {frac:.2e} of the mass outside the central half at t={state.t:.4g}"
                break
    rep.steps = state.step_count
    rep.final_state = state
    return rep


def _advance_adaptive(d, c, state: FlowState, h: float, config: EvolveConfig) -> FlowState:
    """Cover one base step ``h`` with as many adaptive sub-steps as needed."""
    target = state.t + h
    sub = state
    while target - sub.t > 1e-14 * max(1.0, abs(target)):
        sub = nonlinear_step(d, c, sub, min(h, target - sub.t), config.tolerance, config.max_halvings)
        h = sub.accepted_dt
    return FlowState(sub.t, sub.u, state.step_count + 1, h, sub.error_estimate)
