"""Command-line experiment runner.

Subcommands
-----------
run                evolve one configured experiment with diagnostics
verify-identities  density-flux laws and fast/naive evaluation paths
morawetz           interaction identities, six-linear trace, nonlinear budget
division           one symbol division, or the certification battery
exponents          exponent table for (gamma, delta), or the lattice scan
decay              dispersive decay fit at one frequency, or the battery
bilinear           bilinear transversality sweep, or the battery
acceptance         one acceptance criterion (or all) by number

Exit status is 0 when every checked tolerance holds, 1 when one fails,
2 on invalid configuration or arguments and 3 when the wrap guard aborts
a run.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .dispersion import DispersionRelation, make_canonical, make_named
from .evolve import DIAGNOSTICS, EvolveConfig, evolve_with_diagnostics
from .expcalc import ExponentError, exponents, table
from .forms import constant_symbol, power_symbol
from .paley import build_frame
from .spectral_field import SpectralField, make_grid

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3

MODELS = ("nls", "kleingordon_half_wave", "canonical")
PROFILES = ("gaussian", "single_block", "random_block")
FORMATS = ("json", "csv", "summary")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message carries the source line when known."""


# configuration ------------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Resolved experiment description.

    Sections mirror the TOML file: ``model``, ``grid``, ``frame``, ``data``,
    ``run``, ``diagnostics`` (array of tables) and ``output``.
    """

    model: Dict[str, Any]
    grid: Dict[str, Any]
    frame: Dict[str, Any]
    data: Dict[str, Any]
    run: Dict[str, Any]
    diagnostics: List[Dict[str, Any]]
    output: Dict[str, Any]
    source: str = "<memory>"

    def to_dict(self) -> dict:
        return {"model": self.model, "grid": self.grid, "frame": self.frame, "data": self.data, "run": self.run,
                "diagnostics": self.diagnostics, "output": self.output}


DEFAULTS = {
    "model": {"dispersion": "nls", "gamma": None, "delta": 0.0, "cubic": "constant", "cubic_value": 1.0},
    "grid": {"n_points": 256, "length": 32 * math.pi},
    "frame": {"step": 1.5, "low_cut": 2.0},
    "data": {"profile": "gaussian", "amplitude": 0.05, "width": 4.0, "frequency": 0.0, "block": None,
             "packet_width": 0.1},
    "run": {"t_end": 1.0, "dt": 0.01, "tolerance": 1e-10, "adaptive": True, "wrap_limit": 1e-8},
    "output": {"directory": "out", "formats": list(FORMATS)},
}


def _line_of(text: str, section: Optional[str], key: str) -> Optional[int]:
    """First line number of ``key = ...`` inside ``[section]`` (1-based)."""
    current = None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line.startswith("[[") and line.endswith("]]"):
            current = line[2:-2].strip()
        elif line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
        elif "=" in line and current == section and line.split("=", 1)[0].strip() == key:
            return i
    return None


def _fail(text: str, source: str, section: Optional[str], key: str, msg: str):
    line = _line_of(text, section, key)
    where = f"{source}:{line}" if line else source
    raise ConfigError(f"{where}: [{section}] {key}: {msg}")


def parse_config(text: str, source: str = "<memory>") -> ExperimentConfig:
    """Parse and validate TOML text into an :class:`ExperimentConfig`."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    unknown = set(raw) - set(DEFAULTS) - {"diagnostics"}
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {sorted(unknown)}")
    sec = {}
    for name, defaults in DEFAULTS.items():
        given = raw.get(name, {})
        if not isinstance(given, dict):
            raise ConfigError(f"{source}: [{name}] must be a table")
        extra = set(given) - set(defaults)
        if extra:
            _fail(text, source, name, sorted(extra)[0], "unknown key")
        sec[name] = {**defaults, **given}
    diags = raw.get("diagnostics", [])
    if not isinstance(diags, list):
        raise ConfigError(f"{source}: diagnostics must be an array of tables ([[diagnostics]])")
    cfg = ExperimentConfig(sec["model"], sec["grid"], sec["frame"], sec["data"], sec["run"], diags, sec["output"],
                           source)
    _validate(cfg, text)
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read config ({exc.strerror})") from None
    return parse_config(text, str(p))


def _validate(cfg: ExperimentConfig, text: str):
    src = cfg.source
    m = cfg.model
    if m["dispersion"] not in MODELS:
        _fail(text, src, "model", "dispersion", f"must be one of {MODELS}")
    if m["dispersion"] == "canonical":
        if m["gamma"] is None:
            _fail(text, src, "model", "dispersion", "canonical dispersion needs gamma")
        if float(m["gamma"]) == -1.0:
            _fail(text, src, "model", "gamma", "gamma = -1 is the excluded threshold case")
    elif m["gamma"] is not None:
        implied = 0.0 if m["dispersion"] == "nls" else -3.0
        if float(m["gamma"]) != implied:
            _fail(text, src, "model", "gamma", f"{m['dispersion']} has gamma = {implied:g}")
    if m["cubic"] not in ("constant", "power", "none"):
        _fail(text, src, "model", "cubic", "must be constant, power or none")
    if m["cubic"] == "constant" and float(m["delta"]) != 0.0:
        _fail(text, src, "model", "delta", "a constant cubic symbol has delta = 0")
    g = cfg.grid
    n = g["n_points"]
    if not isinstance(n, int) or n < 8 or n & (n - 1):
        _fail(text, src, "grid", "n_points", "must be a power of two, at least 8")
    if not float(g["length"]) > 0:
        _fail(text, src, "grid", "length", "must be positive")
    f = cfg.frame
    if not 1.0 < float(f["step"]) <= 1.5:
        _fail(text, src, "frame", "step", "must lie in (1, 1.5]")
    try:
        frame = build_frame(make_grid(n, float(g["length"])), float(f["step"]), float(f["low_cut"]))
    except ValueError as exc:
        _fail(text, src, "frame", "low_cut", str(exc))
    d = cfg.data
    if d["profile"] not in PROFILES:
        _fail(text, src, "data", "profile", f"must be one of {PROFILES}")
    if not float(d["amplitude"]) > 0:
        _fail(text, src, "data", "amplitude", "epsilon must be positive")
    if d["profile"] in ("single_block", "random_block"):
        b = d["block"]
        if not (isinstance(b, list) and len(b) == 2 and b[0] in (1, -1) and isinstance(b[1], int)):
            _fail(text, src, "data", "block", "must be [sign, index] with sign +1 or -1")
        if b[1] < frame.first or b[1] > frame.top:
            nyq = frame.grid.max_frequency
            _fail(text, src, "data", "block",
                  f"block {b[1]} is outside the frame (blocks {frame.first}..{frame.top}; "
                  f"centre {frame.step ** b[1]:.4g} vs grid Nyquist frequency {nyq:.4g})")
    elif abs(float(d["frequency"])) >= frame.grid.max_frequency:
        _fail(text, src, "data", "frequency", "carrier frequency beyond the grid Nyquist frequency")
    r = cfg.run
    for key in ("t_end", "dt", "tolerance"):
        if not float(r[key]) > 0:
            _fail(text, src, "run", key, "must be positive")
    for i, entry in enumerate(cfg.diagnostics):
        name = entry.get("name")
        if name not in DIAGNOSTICS:
            raise ConfigError(f"{src}: diagnostics[{i}]: unknown diagnostic {name!r} "
                              f"(available: {sorted(DIAGNOSTICS)})")
        if int(entry.get("period", 1)) < 1:
            raise ConfigError(f"{src}: diagnostics[{i}]: period must be positive")
    bad = set(cfg.output["formats"]) - set(FORMATS)
    if bad:
        _fail(text, src, "output", "formats", f"unknown format(s) {sorted(bad)}")


def dispersion_of(model: Dict[str, Any]) -> DispersionRelation:
    if model["dispersion"] == "canonical":
        return make_canonical(float(model["gamma"]))
    return make_named(model["dispersion"])


def cubic_of(model: Dict[str, Any]):
    if model["cubic"] == "none":
        return None
    if model["cubic"] == "power":
        return power_symbol(float(model["delta"])).scaled(float(model["cubic_value"]))
    return constant_symbol(float(model["cubic_value"]))


def initial_data(cfg: ExperimentConfig, seed: int = 0) -> SpectralField:
    grid = make_grid(cfg.grid["n_points"], float(cfg.grid["length"]))
    d = cfg.data
    eps = float(d["amplitude"])
    if d["profile"] == "gaussian":
        x = grid.x
        vals = np.exp(-0.5 * (x / float(d["width"])) ** 2) * np.exp(1j * float(d["frequency"]) * x)
        u = SpectralField.from_values(grid, vals)
    else:
        frame = build_frame(grid, float(cfg.frame["step"]), float(cfg.frame["low_cut"]))
        sign, k = d["block"]
        if d["profile"] == "single_block":
            from .estimator import block_packet
            u = block_packet(grid, frame.lam(k), sign, float(d["packet_width"]))
        else:
            rng = np.random.default_rng(seed)
            phi = frame.bump((sign, k), grid.k)
            ser = phi * (rng.normal(size=grid.n_points) + 1j * rng.normal(size=grid.n_points))
            u = SpectralField(grid, ser)
    return u * (eps / np.max(np.abs(u.values)))


# report writing -------------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def write_rows_csv(path: Path, rows: Sequence[dict]) -> Path:
    keys = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in r.items()})
    return path


def emit(out_dir: Optional[Path], report: dict, series: Dict[str, Sequence[dict]], summary: str,
         formats: Sequence[str] = FORMATS) -> None:
    """Print the summary; with ``out_dir`` write ``report.json``, one CSV per series and ``summary.txt``."""
    print(summary)
    if out_dir is None:
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    if "json" in formats:
        (out_dir / "report.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    if "csv" in formats:
        for name, rows in series.items():
            if rows:
                write_rows_csv(out_dir / f"{name}.csv", rows)
    if "summary" in formats:
        (out_dir / "summary.txt").write_text(summary + "\n")


def _status(ok: bool) -> int:
    return EXIT_OK if ok else EXIT_FAIL


# subcommands ----------------------------------------------------------------------------------

def cmd_run(args) -> int:
    if not args.config:
        raise ConfigError("run needs --config")
    cfg = load_config(args.config)
    d = dispersion_of(cfg.model)
    c = cubic_of(cfg.model)
    u0 = initial_data(cfg, args.seed)
    r = cfg.run
    ec = EvolveConfig(dt=float(r["dt"]), t_end=float(r["t_end"]), tolerance=float(r["tolerance"]),
                      diagnostics=[(e["name"], int(e.get("period", 1))) for e in cfg.diagnostics],
                      eps=float(cfg.data["amplitude"]), adaptive=bool(r["adaptive"]),
                      wrap_limit=None if r["wrap_limit"] is None else float(r["wrap_limit"]))
    rep = evolve_with_diagnostics(d, c, u0, ec)
    checks = {"mass": "drift", "mass_residual": "residual", "wrap": "outside_fraction"}
    for e in cfg.diagnostics:
        tol = e.get("tolerance")
        rows = rep.rows.get(e["name"], [])
        if tol is None or not rows:
            continue
        key = e.get("field", checks.get(e["name"]))
        rep.verdicts[e["name"]] = max(abs(row[key]) for row in rows) <= float(tol)
    try:
        ex = exponents(d.gamma, float(cfg.model["delta"])).to_dict()
    except ExponentError as exc:
        raise ConfigError(str(exc)) from None
    header = {"version": __version__, "seed": args.seed, "config": cfg.to_dict(), "exponents": ex}
    report = {"header": header, "diagnostics": rep.to_dict()}
    ok = all(rep.verdicts.values()) and not rep.aborted
    lines = [f"run {cfg.source}: {'aborted: ' + rep.abort_reason if rep.aborted else 'completed'}",
             f"  model {cfg.model['dispersion']} gamma={d.gamma:g} delta={float(cfg.model['delta']):g}  "
             f"s_c={ex['s_c']} s_lwp={ex['s_lwp']}",
             f"  steps {rep.steps}, final time {rep.times[-1]:.6g}"]
    for name, v in sorted(rep.verdicts.items()):
        lines.append(f"  {name}: {'pass' if v else 'FAIL'}")
    out = Path(args.output) if args.output else Path(cfg.output["directory"])
    out.mkdir(parents=True, exist_ok=True)
    formats = cfg.output["formats"]
    emit(out, report, {}, "\n".join(lines), formats)
    if "csv" in formats:
        rep.write_csv(out)
    if rep.aborted:
        return EXIT_ABORT
    return _status(ok)


def _run_battery(numbers: Sequence[int], args) -> int:
    from .recipes import run_criterion
    results = [run_criterion(n, seed=args.seed, jobs=args.jobs) for n in numbers]
    report = {"version": __version__, "seed": args.seed,
              "criteria": {str(r.number): {"title": r.title, "passed": r.passed, "metrics": r.metrics}
                           for r in results}}
    series = {f"criterion_{r.number}": r.rows for r in results}
    summary = "\n".join(r.line() for r in results)
    emit(Path(args.output) if args.output else None, report, series, summary)
    return _status(all(r.passed for r in results))


def _parse_block(text: str):
    try:
        s, k = text.split(",")
        sign = {"+": 1, "-": -1, "+1": 1, "-1": -1, "1": 1}[s.strip()]
        return sign, int(k)
    except (ValueError, KeyError):
        raise argparse.ArgumentTypeError(f"block must look like '+,12' or '-,3', got {text!r}") from None


def _model(args) -> DispersionRelation:
    if args.model == "canonical":
        if args.gamma is None:
            raise ConfigError("--model canonical needs --gamma")
        if args.gamma == -1:
            raise ConfigError("gamma = -1 is the excluded threshold case")
        return make_canonical(args.gamma)
    return make_named(args.model)


def cmd_verify(args) -> int:
    return _run_battery({"linear": [1], "nonlinear": [2], "oracles": [11], "all": [1, 2, 11]}[args.laws], args)


def cmd_morawetz(args) -> int:
    return _run_battery({"linear": [4], "j6": [5], "budget": [6], "all": [4, 5, 6]}[args.check], args)


def cmd_division(args) -> int:
    if args.battery:
        return _run_battery([3], args)
    from .densities import make_family
    from .division import build_sharp
    d = _model(args)
    grid = make_grid(args.n_points, args.length)
    frame = build_frame(grid, args.step, args.low_cut)
    sign, k = args.block
    if not frame.first <= k <= frame.top:
        raise ConfigError(f"block {k} outside the frame (blocks {frame.first}..{frame.top})")
    rel = sign if d.finite_speed else None
    sharp = build_sharp(constant_symbol(1.0), make_family(d, grid), args.law, (sign, k), frame, rel_sign=rel,
                        certify_samples=args.samples)
    res = sharp.division.residual_norm
    ok = res < args.tol
    cr = {k2: v for k2, v in sharp.division.class_report.items() if k2 != "residual"}
    report = {"model": args.model, "gamma": d.gamma, "block": [sign, k], "law": args.law, "residual": res,
              "tol": args.tol, "class_bands": cr}
    summary = (f"division {args.law} block {sign:+d},{k} ({args.model}, gamma={d.gamma:g}): "
               f"residual {res:.3e} {'<' if ok else '>='} {args.tol:g}; bands "
               + ", ".join(f"{a}={b:.3g}" for a, b in cr.items()))
    emit(Path(args.output) if args.output else None, report, {"division": [report | cr]}, summary)
    return _status(ok)


def cmd_exponents(args) -> int:
    if args.lattice:
        return _run_battery([10], args)
    if args.gamma is None or args.delta is None:
        raise ConfigError("exponents needs --gamma and --delta (or --lattice)")
    from .expcalc import audit_gwp, audit_lwp
    ex = exponents(args.gamma, args.delta)
    s = ex.s_lwp if args.s is None else args.s
    audits = [a.to_dict() for a in audit_lwp(ex.gamma, ex.delta, s) + audit_gwp(ex.gamma, ex.delta)]
    report = {"exponents": ex.to_dict(), "s": str(s), "audits": audits}
    if args.json:
        print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
        if args.output:
            emit(Path(args.output), report, {}, table(ex.gamma, ex.delta, s), ("json", "summary"))
        return EXIT_OK
    emit(Path(args.output) if args.output else None, report,
         {"audit": [{"case": a["case_id"], "applicable": a["applicable"], "passed": a["passed"],
                     "binding": a["binding"]} for a in audits]},
         table(ex.gamma, ex.delta, s))
    return EXIT_OK


def cmd_decay(args) -> int:
    if args.battery:
        return _run_battery([7], args)
    from .estimator import decay_probe, decay_setup
    d = _model(args)
    _, u0, times = decay_setup(d, args.lam)
    fit = decay_probe(d, u0, args.lam, times)
    ok = -0.6 <= fit.slope <= -0.4
    report = {"model": args.model, "gamma": d.gamma, "lambda": args.lam, "slope": fit.slope,
              "constant": fit.constant}
    rows = [{"t": float(t), "sup": float(s)} for t, s in zip(fit.times, fit.sup)]
    emit(Path(args.output) if args.output else None, report, {"decay": rows},
         f"decay {args.model} lambda={args.lam:g}: slope {fit.slope:.4f} (band [-0.6, -0.4]), "
         f"constant {fit.constant:.4g}")
    return _status(ok)


def cmd_bilinear(args) -> int:
    if args.battery:
        return _run_battery([8], args)
    from .estimator import bilinear_linear_check
    d = _model(args)
    mus = args.mu or [2, 3, 4, 6, 8]
    pairs = [(args.ratio * m, m) for m in mus]
    st = bilinear_linear_check(d, pairs, signs=(1, 1), n_trials=args.trials, seed=args.seed)
    ok = abs(st.exponent / -0.5 - 1) <= 0.15
    rows = [{"lambda": lam, "mu": mu, "ratio": r} for (lam, mu), r in zip(st.pairs, st.ratios)]
    emit(Path(args.output) if args.output else None,
         {"model": args.model, "gamma": d.gamma, "exponent": st.exponent, "mu_exponent": st.mu_exponent,
          "pairs": rows},
         {"bilinear": rows}, f"bilinear {args.model}: fitted exponent {st.exponent:.4f} (target -0.5 within 15%)")
    return _status(ok)


def cmd_acceptance(args) -> int:
    from .recipes import CRITERIA
    nums = sorted(CRITERIA) if args.criterion == "all" else [int(args.criterion)]
    return _run_battery(nums, args)


# parser -----------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment file")
    common.add_argument("--seed", type=int, default=0, help="seed for random data (default 0)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for independent cases")
    common.add_argument("--output", help="directory for report.json, CSV series and summary.txt")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--model", choices=MODELS, default="nls")
    model.add_argument("--gamma", type=float, help="growth exponent for --model canonical")

    p = argparse.ArgumentParser(prog="dispersive-lab", description="Density-flux and interaction-functional lab.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", parents=[common], help="evolve a configured experiment")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("verify-identities", parents=[common], help="density-flux laws and evaluation oracles")
    s.add_argument("--laws", choices=("linear", "nonlinear", "oracles", "all"), default="all")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("morawetz", parents=[common], help="interaction functional checks")
    s.add_argument("--check", choices=("linear", "j6", "budget", "all"), default="linear")
    s.set_defaults(func=cmd_morawetz)

    s = sub.add_parser("division", parents=[common, model], help="symbol division")
    s.add_argument("--block", type=_parse_block, default=(1, 12))
    s.add_argument("--law", choices=("mass", "momentum", "reverse"), default="mass")
    s.add_argument("--n-points", type=int, default=2048)
    s.add_argument("--length", type=float, default=8 * math.pi)
    s.add_argument("--step", type=float, default=1.5)
    s.add_argument("--low-cut", type=float, default=2.0)
    s.add_argument("--samples", type=int, default=10_000, help="random certification samples")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--battery", action="store_true", help="full certification battery")
    s.set_defaults(func=cmd_division)

    s = sub.add_parser("exponents", parents=[common], help="exponent table or lattice scan")
    s.add_argument("--gamma", type=str, help="rational, e.g. -3 or 1/2")
    s.add_argument("--delta", type=str)
    s.add_argument("--s", type=str, help="Sobolev exponent for the local audit (default s_lwp)")
    s.add_argument("--json", action="store_true", help="print the JSON report instead of the table")
    s.add_argument("--lattice", action="store_true", help="exhaustive lattice scan")
    s.set_defaults(func=cmd_exponents)

    s = sub.add_parser("decay", parents=[common, model], help="dispersive decay fit")
    s.add_argument("--lambda", dest="lam", type=float, default=8.0)
    s.add_argument("--battery", action="store_true")
    s.set_defaults(func=cmd_decay)

    s = sub.add_parser("bilinear", parents=[common, model], help="bilinear transversality sweep")
    s.add_argument("--mu", type=float, nargs="+")
    s.add_argument("--ratio", type=float, default=8.0, help="lambda / mu")
    s.add_argument("--trials", type=int, default=2)
    s.add_argument("--battery", action="store_true")
    s.set_defaults(func=cmd_bilinear)

    s = sub.add_parser("acceptance", parents=[common], help="run acceptance criteria by number")
    s.add_argument("criterion", help="1..11 or 'all'")
    s.set_defaults(func=cmd_acceptance)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be positive")
    try:
        return args.func(args)
    except (ConfigError, ExponentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
