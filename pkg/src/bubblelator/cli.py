"""Command-line front end.

Subcommands run one module operation each and emit comma-separated data
files plus a ``manifest.json`` listing every output with a content
checksum.  Numeric output uses shortest round-trip decimals and nothing in
the pipeline draws random numbers, so re-running with identical inputs
reproduces byte-identical files.

Exit codes: 0 success, 2 parameter validation failure, 3 numerical
failure, 64 unknown subcommand, 66 unreadable configuration file.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .becker_doring import equilibrium, make_cluster_state, simulate
from .kernels import NumericalError
from .limit_model import simulate_limit
from .params import CONFIG_KEYS, ModelParams, compute_scales, load_config, parse_number
from .reduced import (MomentState, SharpPeakParams, moment_steady_state,
                      simulate_moments, simulate_sharp_peak)
from .spectral import (find_crossings, hopf_coefficients, odd_beta_study,
                       sweep, write_odd_beta_csv)

SUBCOMMANDS = ("simulate-limit", "simulate-bd", "simulate-moments",
               "simulate-peak", "crossings", "sweep", "odd-beta", "scales")


class ConfigError(Exception):
    pass


def _number_list(text):
    return [parse_number(part) for part in str(text).split(",") if part.strip()]


def _number_range(text):
    """Parse ``start:step:stop`` (inclusive) or a comma list of numbers."""
    if ":" in text:
        lo, step, hi = (Fraction(parse_number(p)) for p in text.split(":"))
        if step <= 0:
            raise ValueError(f"range step must be positive in {text!r}")
        out, v = [], lo
        while v <= hi + step / 1000:
            out.append(float(v))
            v += step
        return out
    return [float(v) for v in _number_list(text)]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bubblelator",
        description="Cluster-growth oscillator laboratory: discrete kinetics, "
                    "rescaled limit model, and bifurcation analysis.")
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", help="key = value parameter file")
        p.add_argument("--out-dir", default=".", help="output directory")
        p.add_argument("--seedless", action="store_true",
                       help="assert the run uses no randomness (always true)")

    def physical(p, **defaults):
        for key in CONFIG_KEYS:
            p.add_argument(f"--{key}", type=parse_number,
                           default=defaults.get(key))

    p = sub.add_parser("scales", help="critical size and derived scales")
    common(p)
    physical(p)

    p = sub.add_parser("simulate-bd", help="integrate the truncated discrete system")
    common(p)
    physical(p)
    p.add_argument("--kmax", type=int, default=400)
    p.add_argument("--horizon", type=float, default=100.0)
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--stride", type=int, default=10)
    p.add_argument("--closure", choices=("absorbing", "closed"), default="absorbing")
    p.add_argument("--init", choices=("equilibrium", "monomers"), default="monomers")
    p.add_argument("--init-n1bar", type=float, default=0.9,
                   help="monomer level of the equilibrium-shaped initial data")
    p.add_argument("--rho", type=float, default=0.5,
                   help="initial mass for the all-monomer initial data")
    p.add_argument("--source", type=parse_number, default=0,
                   help="monomer source rate S")
    p.add_argument("--removal", type=parse_number, default=0,
                   help="removal rate R")

    p = sub.add_parser("simulate-limit", help="integrate the rescaled limit model")
    common(p)
    physical(p)
    p.add_argument("--horizon", type=float, default=600.0)
    p.add_argument("--dtau", type=float, default=0.01)
    p.add_argument("--stride", type=int, default=10)
    p.add_argument("--u-init", type=float, default=None,
                   help="initial excess (default: steady value plus one)")
    p.add_argument("--snapshots", default="523,533,543,553,563",
                   help="comma list of flux snapshot times")
    p.add_argument("--x-max", type=float, default=1000.0)
    p.add_argument("--x-points", type=int, default=1001)

    p = sub.add_parser("simulate-moments", help="integrate the moment ODE system")
    common(p)
    physical(p)
    p.add_argument("--horizon", type=float, default=100.0)
    p.add_argument("--dtau", type=float, default=0.01)
    p.add_argument("--stride", type=int, default=10)
    p.add_argument("--kick-u", type=float, default=0.0,
                   help="offset added to the steady-state u")

    p = sub.add_parser("simulate-peak", help="event-driven sharp-peak sawtooth")
    common(p)
    p.add_argument("--f0", type=float, default=2.0)
    p.add_argument("--u-nucl", type=float, default=0.0)
    p.add_argument("--transit", type=float, default=1.0, help="transit length L")
    p.add_argument("--u-init", type=float, default=-0.5)
    p.add_argument("--horizon", type=float, default=20.0)

    p = sub.add_parser("crossings", help="imaginary-axis eigenvalue crossings")
    common(p)
    p.add_argument("--beta", type=parse_number, default=Fraction(1))
    p.add_argument("--nu", type=parse_number, default=Fraction(1, 2))
    p.add_argument("--t-max", type=float, default=60.0)
    p.add_argument("--n-grid", type=int, default=4000)

    p = sub.add_parser("sweep", help="primary bifurcation point per (beta, nu)")
    common(p)
    p.add_argument("--beta", default="0:0.5:10",
                   help="beta grid as start:step:stop or a comma list")
    p.add_argument("--nu", default="1/9,3/7,1,7/3,9", help="comma list of nu")
    p.add_argument("--t-max", type=float, default=60.0)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("odd-beta", help="crossing cascade for odd beta, nu = 0")
    common(p)
    p.add_argument("--beta", type=int, default=3)
    p.add_argument("--count", type=int, default=11)
    p.add_argument("--t-max", type=float, default=60.0)

    return parser


def _resolve_params(args) -> ModelParams:
    defaults = {"alpha": Fraction(1, 3), "gamma": Fraction(1, 3), "q": 1,
                "epsilon": Fraction(1, 10), "eta": Fraction(1, 10),
                "r": Fraction(2, 3)}
    if getattr(args, "config", None):
        try:
            defaults.update(load_config(args.config))
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            defaults[key] = value
    extra = {}
    if getattr(args, "source", None) is not None:
        extra["S"] = args.source
    if getattr(args, "removal", None) is not None:
        extra["R"] = args.removal
    return ModelParams(alpha=defaults["alpha"], gamma=defaults["gamma"],
                       epsilon=defaults["epsilon"], q=defaults["q"],
                       r=defaults["r"], eta=defaults["eta"], **extra)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("" if v is None else repr(float(v)) for v in row) + "\n")


def _cmd_scales(args, out):
    scales = compute_scales(_resolve_params(args))
    path = out / "scales.csv"
    rows = [("k_crit", math_log_or_none(scales.k_crit), scales.k_crit),
            ("J_inf", scales.log_J_inf, try_exp(scales.log_J_inf)),
            ("X", scales.log_X, try_exp(scales.log_X)),
            ("T", scales.log_T, try_exp(scales.log_T)),
            ("F", scales.log_F, try_exp(scales.log_F)),
            ("S", scales.log_S, try_exp(scales.log_S)),
            ("R", scales.log_R, try_exp(scales.log_R))]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("quantity,log_value,value\n")
        for name, logv, v in rows:
            fh.write(f"{name},{logv!r},{'' if v is None else repr(v)}\n")
    return [path]


def math_log_or_none(x):
    import math
    return math.log(x)


def try_exp(logv):
    import math
    try:
        return math.exp(logv)
    except OverflowError:
        return None


def _cmd_simulate_bd(args, out):
    params = _resolve_params(args)
    if args.init == "equilibrium":
        state = equilibrium(params, args.kmax, args.init_n1bar)
        n = state.n
    else:
        n = np.zeros(args.kmax)
        n[0] = args.rho
    initial = make_cluster_state(params, n, closure=args.closure)
    trace = simulate(params, initial, args.horizon, args.dt,
                     stride=args.stride, closure=args.closure)
    path = out / "bd-trace.csv"
    trace.to_csv(path)
    return [path]


def _cmd_simulate_limit(args, out):
    params = _resolve_params(args)
    trace = simulate_limit(params, args.horizon, args.dtau,
                           u_init=args.u_init, stride=args.stride)
    u_path = out / "simu-u.csv"
    trace.to_u_csv(u_path)
    times = [float(t) for t in str(args.snapshots).split(",")
             if t.strip() and float(t) <= args.horizon]
    f_path = out / "simu-f.csv"
    trace.write_flux_csv(f_path, times,
                         np.linspace(0.0, args.x_max, args.x_points))
    return [u_path, f_path]


def _cmd_simulate_moments(args, out):
    params = _resolve_params(args)
    steady = moment_steady_state(params.eta)
    initial = MomentState(steady.N, steady.A, steady.R, steady.u + args.kick_u)
    trace = simulate_moments(params.eta, initial, args.horizon, args.dtau,
                             stride=args.stride)
    path = out / "moments.csv"
    trace.to_csv(path)
    return [path]


def _cmd_simulate_peak(args, out):
    result = simulate_sharp_peak(
        SharpPeakParams(args.f0, args.u_nucl, args.transit, args.u_init),
        args.horizon)
    path = out / "peak.csv"
    result.to_csv(path)
    return [path]


def _cmd_crossings(args, out):
    points = find_crossings(float(args.beta), float(args.nu),
                            t_range=(1e-3, args.t_max), n_grid=args.n_grid)
    points = [hopf_coefficients(p) for p in points]
    path = out / "crossings.csv"
    _write_csv(path,
               ["t0", "vartheta0", "eta0", "kappa0", "eta2", "kappa2",
                "rehatg11", "abshatL2", "primary"],
               [(p.t0, p.vartheta0, p.eta0, p.kappa0, p.eta2, p.kappa2,
                 p.g1hat1.real, p.abs_L2hat, 1.0 if p.primary else 0.0)
                for p in points])
    return [path]


def _cmd_sweep(args, out):
    result = sweep(_number_range(args.beta), _number_list(args.nu),
                   t_range=(1e-3, args.t_max), workers=args.workers)
    tk = out / "theta-kappa.csv"
    rt = out / "resonance-transversality.csv"
    result.write_theta_kappa_csv(tk)
    result.write_resonance_csv(rt)
    return [tk, rt]


def _cmd_odd_beta(args, out):
    points, relerr = odd_beta_study(args.beta, args.count,
                                    t_range=(1e-3, args.t_max))
    path = out / f"odd_beta{args.beta}.csv"
    write_odd_beta_csv(path, points, relerr)
    return [path]


_DISPATCH = {
    "scales": _cmd_scales,
    "simulate-bd": _cmd_simulate_bd,
    "simulate-limit": _cmd_simulate_limit,
    "simulate-moments": _cmd_simulate_moments,
    "simulate-peak": _cmd_simulate_peak,
    "crossings": _cmd_crossings,
    "sweep": _cmd_sweep,
    "odd-beta": _cmd_odd_beta,
}


def _sha256(path) -> str:
    digest = hashlib.sha256()
    digest.update(Path(path).read_bytes())
    return digest.hexdigest()


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    if argv and not argv[0].startswith("-") and argv[0] not in SUBCOMMANDS:
        print(f"unknown subcommand {argv[0]!r}; expected one of "
              f"{', '.join(SUBCOMMANDS)}", file=sys.stderr)
        return 64
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    if args.command is None:
        parser.print_help()
        return 0
    started = time.monotonic()
    try:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = _DISPATCH[args.command](args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 66
    except ValueError as exc:
        print(f"parameter error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    manifest = {
        "subcommand": args.command,
        "arguments": {k: str(v) for k, v in sorted(vars(args).items())
                      if k != "command"},
        "config": getattr(args, "config", None),
        "version": __version__,
        "duration_seconds": time.monotonic() - started,
        "outputs": [{"name": Path(f).name, "sha256": _sha256(f)}
                    for f in files],
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
