"""Command-line front end.

Every subcommand writes its artifacts plus a run manifest (config hash,
version, grid diagnostics, wall time).  Exit codes: 0 success, 2 invalid
configuration, 3 numerical budget failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .continuity import SampledFlow, causal_current_check, continuity_residual_check, velocity_bound_check
from .dirac import dirac_causality_check, gaussian_spinor, random_spinor, spinor_grid
from .errors import ConfigError, NumericalBudgetError
from .packets import Dispersion, Grid, StateFamily, evolve
from .quantify import (
    default_t_grid,
    m_of_region,
    m_tilde,
    outside_probability,
    sweep,
    worker_count,
)
from .spacetime import GridMeasure, SpatialRegion
from .transport import DiscreteMeasure, check_precedence_compact, max_causal_mass

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

GAUSSIAN_TABLE_D = (1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
SECH_TABLE_ALPHA = (3.0, 2.0, 5.0 / 3.0, 1.5)
SINEXP_ALPHA = tuple(0.25 * k for k in range(17))


# -- specs and configuration -------------------------------------------------


def _parse_params(text: str) -> tuple[str, dict]:
    kind, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigError(f"expected key=value in {text!r}, got {item!r}")
        params[key.strip()] = _number(val.strip())
    return kind.strip(), params


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    try:
        return complex(text.replace("i", "j"))
    except ValueError as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def parse_family(text: str) -> StateFamily:
    """``gaussian:d=1``, ``sech:alpha=1.5``, ``sinc_power:n=2,p_m=1,boost=0.3`` ..."""
    kind, params = _parse_params(text)
    try:
        return StateFamily(kind, **params)
    except TypeError as exc:
        raise ConfigError(f"bad family spec {text!r}: {exc}") from exc


def parse_dispersion(text: str) -> Dispersion:
    """``relativistic:m=1``, ``massless`` or ``nonrelativistic:m=1``."""
    kind, params = _parse_params(text)
    if kind == "massless" and not params:
        return Dispersion.massless()
    try:
        return Dispersion(kind, **params)
    except TypeError as exc:
        raise ConfigError(f"bad dispersion spec {text!r}: {exc}") from exc


def parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


@dataclass
class ExperimentConfig:
    """Everything that determines a sweep; round-trips through JSON."""

    family: dict = field(default_factory=lambda: {"kind": "gaussian", "d": 1.0})
    dispersion: dict = field(default_factory=lambda: {"kind": "relativistic", "m": 1.0})
    grid: dict | None = None
    t_max: float | None = None
    t_step: float = 0.01
    a_grid: list | None = None
    epsilon_M: float | None = None
    tail_tol: float | None = None
    refine_a: bool = True
    out: str | None = None
    curve: str | None = None

    def __post_init__(self):
        self.build()

    def build(self):
        """Validated objects: (family, dispersion, grid, t grid)."""
        try:
            fam = StateFamily.from_dict(self.family)
            disp = Dispersion.from_dict(self.dispersion)
            grid = Grid(int(self.grid["n"]), float(self.grid["dx"])) if self.grid else None
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        if not self.t_step > 0 or (self.t_max is not None and not self.t_max > 0):
            raise ConfigError("t_step and t_max must be positive")
        return fam, disp, grid, default_t_grid(disp, self.t_max, self.t_step)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def digest(self) -> str:
        return config_hash(self.to_dict())


def config_hash(data) -> str:
    blob = json.dumps(data, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    config_hash: str
    version: str
    diagnostics: dict
    wall_time_s: float

    @classmethod
    def make(cls, command, config, diagnostics, started) -> "RunManifest":
        return cls(command, config, config_hash(config), __version__, diagnostics, time.perf_counter() - started)

    def write_next_to(self, artifact) -> Path:
        path = Path(str(artifact) + ".manifest.json")
        path.write_text(json.dumps(asdict(self), indent=2, default=_jsonable) + "\n")
        return path


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, float) and math.isnan(v):
        return None
    return str(v)


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, default=_jsonable) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- subcommands -------------------------------------------------------------


def cmd_evolve(args, started):
    fam, disp = parse_family(args.family), parse_dispersion(args.dispersion)
    pk = evolve(fam, disp, args.t)
    with Path(args.out).open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "re_psi", "im_psi", "rho"])
        for xk, pv, rv in zip(pk.x, pk.psi, pk.rho):
            wr.writerow([repr(float(xk)), repr(float(pv.real)), repr(float(pv.imag)), repr(float(rv))])
    diag = {
        "grid_n": pk.grid.n,
        "grid_dx": pk.grid.dx,
        "renorm_delta": pk.renorm_delta,
        "tail_mass": pk.tail_mass,
        "cutoff_mass": pk.cutoff_mass,
    }
    cfg = {"family": fam.to_dict(), "dispersion": disp.to_dict(), "t": args.t}
    RunManifest.make("evolve", cfg, diag, started).write_next_to(args.out)


def cmd_quantify(args, started):
    fam, disp = parse_family(args.family), parse_dispersion(args.dispersion)
    cfg = {"family": fam.to_dict(), "dispersion": disp.to_dict(), "t": args.t}
    if args.outside:
        result = {"N": outside_probability(fam, disp, args.t)}
    elif args.interval or args.a is not None:
        if args.interval:
            a, b = parse_floats(args.interval)
        else:
            a, b = -args.a, args.a
        K = SpatialRegion(((a, b),))
        result = {"M": m_of_region(fam, disp, args.t, K), "region": K.to_list()}
        cfg["region"] = K.to_list()
    else:
        val, a_M = m_tilde(fam, disp, args.t, symmetric=None if not args.asymmetric else False)
        result = {"M_tilde": val, "a_M": list(a_M) if isinstance(a_M, tuple) else a_M}
    manifest = RunManifest.make("quantify", cfg, {}, started)
    if args.out:
        _emit(result, args.out)
        manifest.write_next_to(args.out)
    else:
        _emit({**result, "manifest": asdict(manifest)}, None)


def cmd_sweep(args, started):
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig()
    if args.family:
        cfg.family = parse_family(args.family).to_dict()
    if args.dispersion:
        cfg.dispersion = parse_dispersion(args.dispersion).to_dict()
    if args.t_max is not None:
        cfg.t_max = args.t_max
    if args.t_step is not None:
        cfg.t_step = args.t_step
    if args.out:
        cfg.out = args.out
    if args.curve:
        cfg.curve = args.curve
    if not cfg.out:
        raise ConfigError("sweep needs an output path (--out or config 'out')")
    fam, disp, grid, t_grid = cfg.build()
    noise = None
    if cfg.epsilon_M is not None:
        from .quantify import NoiseFloor

        noise = NoiseFloor(cfg.epsilon_M)
    prof = sweep(
        fam, disp, t_grid, cfg.a_grid, refine_a=cfg.refine_a, noise=noise,
        workers=args.workers, grid=grid, tail_tol=cfg.tail_tol,
    )
    prof.to_csv(cfg.out)
    if cfg.curve:
        prof.curve_to_csv(cfg.curve)
    RunManifest.make("sweep", cfg.to_dict(), prof.summary(), started).write_next_to(cfg.out)


def _table_row(job):
    kind, value, t_step = job
    fam = StateFamily.gaussian(value) if kind == "gaussian" else (
        StateFamily.sech(value) if kind == "sech" else StateFamily.sinc_sech(value)
    )
    disp = Dispersion.relativistic(1.0)
    refine = kind != "sinexp"
    prof = sweep(fam, disp, default_t_grid(disp, 3.0, t_step), a_grid=[], refine_a=refine)
    return prof.summary()


def cmd_reproduce(args, started):
    which = args.table
    col, values = {
        "gaussian": ("d", GAUSSIAN_TABLE_D),
        "sech": ("alpha", SECH_TABLE_ALPHA),
        "sinexp": ("alpha", SINEXP_ALPHA),
    }[which]
    t_step = args.t_step if args.t_step else (0.05 if which == "sinexp" else 0.01)
    jobs = [(which, v, t_step) for v in values]
    nw = worker_count(args.workers)
    if nw > 1:
        with ProcessPoolExecutor(nw) as pool:
            rows = list(pool.map(_table_row, jobs))
    else:
        rows = [_table_row(j) for j in jobs]
    header = [col, "M_tilde_t1", "t1", "a_M", "epsilon_M"]
    out = Path(args.out) if args.out else None
    fh = out.open("w", newline="") if out else sys.stdout
    try:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for v, r in zip(values, rows):
            wr.writerow([repr(v), repr(r["m_star"]), repr(r["t1_star"]), repr(r["a_M"]), repr(r["epsilon_M"])])
    finally:
        if out:
            fh.close()
    if out:
        cfg = {"table": which, "t_step": t_step, "dispersion": {"kind": "relativistic", "m": 1.0}}
        RunManifest.make("reproduce-table", cfg, {"rows": rows}, started).write_next_to(out)


def _state_from_spec(text: str, m: float, t_max: float):
    kind, params = _parse_params(text)
    if kind == "random":
        return random_spinor(np.random.default_rng(int(params.get("seed", 0))), m, t_max)
    if kind == "gaussian":
        width = float(params.get("width", 1.0))
        center = float(params.get("center", 0.0))
        boost = float(params.get("boost", 0.0))
        grid = spinor_grid(width, center, boost, t_max)
        return gaussian_spinor(
            grid, m, width, center, boost,
            complex(params.get("upper", 1.0)), complex(params.get("lower", 0.0)),
        )
    raise ConfigError(f"unknown spinor state {kind!r}; use gaussian:... or random:seed=N")


def cmd_dirac(args, started):
    times = parse_floats(args.times)
    if not times:
        raise ConfigError("need at least one time")
    state = _state_from_spec(args.state, args.mass, max(times))
    res = dirac_causality_check(state, times, tol=args.tol)
    cfg = {"state": args.state, "mass": args.mass, "times": times}
    diag = {"grid_n": state.grid.n, "grid_dx": state.grid.dx}
    manifest = RunManifest.make("dirac-check", cfg, diag, started)
    if args.out:
        _emit(res.to_dict(), args.out)
        manifest.write_next_to(args.out)
    else:
        _emit({**res.to_dict(), "manifest": asdict(manifest)}, None)


def read_measure(path, t: float) -> tuple[DiscreteMeasure, float]:
    """Atoms from ``x,mass`` rows, or cell centers of a ``x_left,weight`` grid CSV.

    Returns the measure and its cell width (0 for atom lists).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        header = next(csv.reader(fh), [])
    if header[:2] == ["x_left", "weight"]:
        mu = GridMeasure.from_csv(path)
        mu = GridMeasure(t, mu.x0, mu.dx, mu.w)
        return DiscreteMeasure.from_grid(mu), mu.dx
    if header[:2] == ["x", "mass"]:
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        return DiscreteMeasure(t, [float(r["x"]) for r in rows], [float(r["mass"]) for r in rows]), 0.0
    raise ConfigError(f"{path}: expected header x,mass or x_left,weight")


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("causalflow") / "data" / name))


def cmd_transport(args, started):
    if args.fixture:
        mu_path, nu_path, dt = fixture_path("mu_2x2.csv"), fixture_path("nu_2x2.csv"), 1.0
    else:
        if not (args.mu and args.nu and args.dt is not None):
            raise ConfigError("transport solve needs --mu, --nu and --dt (or --fixture)")
        mu_path, nu_path, dt = args.mu, args.nu, args.dt
    if dt < 0:
        raise ConfigError("--dt must be non-negative")
    mu, dx0 = read_measure(mu_path, 0.0)
    nu, dx1 = read_measure(nu_path, dt)
    slack = 0.5 * (dx0 + dx1) if args.slack is None else args.slack
    res = max_causal_mass(mu, nu, slack=slack)
    verdict, worst, K = check_precedence_compact(mu, nu, slack=slack)
    payload = {**res.to_dict(mu), "causal": verdict, "worst_set": K.to_list()}
    cfg = {"mu": str(mu_path), "nu": str(nu_path), "dt": dt, "slack": slack}
    manifest = RunManifest.make("transport solve", cfg, {"atoms": [len(mu), len(nu)]}, started)
    if args.out:
        _emit(payload, args.out)
        manifest.write_next_to(args.out)
    else:
        _emit({**payload, "manifest": asdict(manifest)}, None)


def cmd_continuity(args, started):
    flow = SampledFlow.from_csv(args.flow)
    ok_j, ratio = causal_current_check(flow)
    ok_v, vmax = velocity_bound_check(flow)
    payload = {
        "causal_current": ok_j,
        "max_j_over_rho": ratio,
        "velocity_bounded": ok_v,
        "max_speed": vmax,
        "continuity_residual": continuity_residual_check(flow),
    }
    manifest = RunManifest.make("continuity-check", {"flow": str(args.flow)}, {"shape": list(flow.rho.shape)}, started)
    if args.out:
        _emit(payload, args.out)
        manifest.write_next_to(args.out)
    else:
        _emit({**payload, "manifest": asdict(manifest)}, None)


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="causalflow", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="evolve a packet and write x,re_psi,im_psi,rho")
    p.add_argument("--family", required=True)
    p.add_argument("--dispersion", default="relativistic:m=1")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("quantify", help="M for one region, M~ by scan, or the outside probability")
    p.add_argument("--family", required=True)
    p.add_argument("--dispersion", default="relativistic:m=1")
    p.add_argument("--t", type=float, required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--a", type=float, help="symmetric region [-a, a]")
    g.add_argument("--interval", help="region a,b")
    g.add_argument("--scan", action="store_true", help="maximize over intervals (default)")
    g.add_argument("--outside", action="store_true", help="outside probability (box family)")
    p.add_argument("--asymmetric", action="store_true", help="scan all [a, b], not only [-a, a]")
    p.add_argument("--out")
    p.set_defaults(func=cmd_quantify)

    p = sub.add_parser("sweep", help="(t, a) table of M and the timescales")
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--family")
    p.add_argument("--dispersion")
    p.add_argument("--t-max", type=float)
    p.add_argument("--t-step", type=float)
    p.add_argument("--out", help="profile CSV (t,a,M)")
    p.add_argument("--curve", help="row maxima CSV (t,M_tilde,a_M)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce-table", help="rows of the Gaussian, sech or sinc-sech tables")
    p.add_argument("table", choices=("gaussian", "sech", "sinexp"))
    p.add_argument("--out")
    p.add_argument("--t-step", type=float)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("dirac-check", help="pairwise coupling shortfall of Dirac densities")
    p.add_argument("--state", default="gaussian:width=1")
    p.add_argument("--mass", type=float, default=1.0)
    p.add_argument("--times", required=True, help="comma-separated, increasing")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dirac)

    p = sub.add_parser("transport", help="causal coupling between two measures")
    tsub = p.add_subparsers(dest="action", required=True)
    s = tsub.add_parser("solve")
    s.add_argument("--mu")
    s.add_argument("--nu")
    s.add_argument("--dt", type=float)
    s.add_argument("--slack", type=float, help="extra cone radius (default half a cell per gridded side)")
    s.add_argument("--fixture", action="store_true", help="use the bundled 2x2 example")
    s.add_argument("--out")
    s.set_defaults(func=cmd_transport)

    p = sub.add_parser("continuity-check", help="check a sampled t,x,rho,j flow")
    p.add_argument("--flow", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_continuity)
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        args.func(args, started)
    except NumericalBudgetError as exc:
        print(f"causalflow: numerical budget exceeded: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, OSError) as exc:
        print(f"causalflow: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main() -> None:
    sys.exit(run())
