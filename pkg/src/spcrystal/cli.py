"""Command line front end: ``spcrystal {solve,check,green,sweep}``.

Exit codes: 0 success, 1 not converged / check failed, 2 bad input.
"""

import argparse
import logging
import os
import sys
import time

import numpy as np
import scipy.fft

from . import diagnose
from .config import (
    FIELD_HEADER,
    ConfigError,
    Summary,
    build_config,
    field_rows,
    load_config,
    load_state,
    override,
    save_state,
    write_csv,
)
from .coulomb import green_G, grad_G, regularized_D
from .errors import SPError
from .lattice import minimum_image
from .optimize import initial_psi, minimize

log = logging.getLogger("spcrystal")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

GREEN_HEADER = ["t", "x", "y", "z", "G", "D", "grad_G_norm"]
SWEEP_HEADER = ["parameter", "E_r", "e1", "e2", "e3", "e4", "lambda",
                "res_schrodinger", "res_force", "res_poisson", "res_neutrality", "converged"]


def run_solve(cfg, verbose=False):
    solver = cfg.solver
    if verbose:
        solver.verbose = True
    psi0 = initial_psi(cfg.grid, cfg.ions.Z, seed=solver.seed, noise=solver.noise)
    t0 = time.perf_counter()
    state = minimize(psi0, cfg.ions, cfg.units, cfg.ewald, solver)
    return state, Summary.from_state(state, cfg, time.perf_counter() - t0)


def _out_dir(args, cfg):
    path = args.out or cfg.out_dir
    os.makedirs(path, exist_ok=True)
    return path


def green_table(cfg, start, stop, points, cartesian=False):
    """Rows (t, x, y, z, G, D, |grad G|) along the segment start -> stop."""
    lat = cfg.lattice
    start, stop = np.asarray(start, float), np.asarray(stop, float)
    t = np.linspace(0.0, 1.0, points)
    pts = start + t[:, None] * (stop - start)
    xyz = pts if cartesian else lat.to_cartesian(pts)
    r = np.linalg.norm(np.atleast_2d(minimum_image(lat, lat.to_fractional(xyz))), axis=1)
    D = np.atleast_1d(regularized_D(lat, lat.dual, cfg.ewald, xyz))
    G = np.full(points, np.inf)
    gn = np.full(points, np.inf)
    ok = r > 1e-10 * lat.scale
    if ok.any():
        G[ok] = green_G(lat, lat.dual, cfg.ewald, xyz[ok])
        gn[ok] = np.linalg.norm(np.atleast_2d(grad_G(lat, lat.dual, cfg.ewald, xyz[ok])), axis=1)
    return [(t[i], *xyz[i], G[i], D[i], gn[i]) for i in range(points)]


def cmd_solve(args):
    cfg = load_config(args.config)
    state, summary = run_solve(cfg, args.verbose)
    out = _out_dir(args, cfg)
    with open(os.path.join(out, "summary.json"), "w") as fh:
        fh.write(summary.to_json())
    if cfg.dump_state:
        save_state(os.path.join(out, "state.npz"), state, cfg)
    if cfg.dump_fields:
        write_csv(os.path.join(out, "fields.csv"), FIELD_HEADER, field_rows(state, cfg.units))
    if cfg.dump_green:
        start, stop, points, cart = _segment(args, cfg)
        write_csv(os.path.join(out, "green.csv"), GREEN_HEADER, green_table(cfg, start, stop, points, cart))
    rep = diagnose.report(state, cfg.units, cfg.ewald, cfg.solver.tol_psi, cfg.solver.tol_force,
                          include_force=cfg.solver.relax_ions)
    for line in rep.lines():
        print(line)
    e = state.energy
    print(f"E_r\t{e.total:.17g}\tconverged\t{state.converged}\titerations\t{state.iterations}")
    return EXIT_OK if state.converged else EXIT_FAIL


def cmd_check(args):
    path = args.state
    if not os.path.isfile(path):
        print(f"error: state dump {path!r} not found", file=sys.stderr)
        return EXIT_INPUT
    try:
        state, p, ew, (tol_psi, tol_force) = load_state(path)
    except (OSError, ValueError, KeyError, SPError) as exc:
        print(f"error: cannot read state dump {path!r}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    tol_psi = args.tol_psi or tol_psi
    tol_force = args.tol_force or tol_force
    rep = diagnose.report(state, p, ew, tol_psi, tol_force, include_force=not args.no_force)
    for line in rep.lines():
        print(line)
    print("PASS" if rep.passed else "FAIL")
    return EXIT_OK if rep.passed else EXIT_FAIL


def _segment(args, cfg):
    g = cfg.green
    start = getattr(args, "start", None) or g.get("from", [-0.5, 0.0, 0.0])
    stop = getattr(args, "stop", None) or g.get("to", [0.5, 0.0, 0.0])
    points = getattr(args, "points", None) or g.get("points", 101)
    cart = getattr(args, "cartesian", False) or bool(g.get("cartesian", False))
    try:
        start = [float(v) for v in start]
        stop = [float(v) for v in stop]
        points = int(points)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field 'green': bad segment specification: {exc}") from exc
    if len(start) != 3 or len(stop) != 3 or points < 2:
        raise ConfigError("field 'green': need 3-vectors 'from'/'to' and points >= 2")
    return start, stop, points, cart


def cmd_green(args):
    cfg = load_config(args.config)
    start, stop, points, cart = _segment(args, cfg)
    out = _out_dir(args, cfg)
    path = os.path.join(out, "green.csv")
    write_csv(path, GREEN_HEADER, green_table(cfg, start, stop, points, cart))
    print(path)
    return EXIT_OK


def _number(text):
    # integer literals stay integers so they can drive integer options (seed, max_iter)
    try:
        return int(text)
    except ValueError:
        return float(text)


def _sweep_values(args, sweep):
    if args.values is not None:
        try:
            vals = [_number(v) for v in args.values.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"--values expects comma separated numbers, got {args.values!r}") from exc
    elif args.range is not None:
        try:
            a, b, n = args.range.split(":")
            vals = [float(v) for v in np.linspace(float(a), float(b), int(n))]
        except ValueError as exc:
            raise ConfigError(f"--range expects start:stop:num, got {args.range!r}") from exc
    elif "values" in sweep:
        vals = list(sweep["values"])
    elif "range" in sweep:
        r = sweep["range"]
        try:
            vals = [float(v) for v in np.linspace(float(r["start"]), float(r["stop"]), int(r["num"]))]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"field 'sweep.range': expected {{start, stop, num}}, got {r!r}") from exc
    else:
        vals = []
    if not vals:
        raise ConfigError("field 'sweep': empty parameter range")
    return vals


def _separation_config(cfg, d, sweep):
    """Config with ion ``sweep.ion`` (default 1) placed at distance d from ion 0."""
    idx = int(sweep.get("ion", 1))
    if len(cfg.ions) <= idx:
        raise ConfigError(f"field 'sweep': separation sweep needs at least {idx + 1} ions")
    direction = np.asarray(sweep.get("direction", [1.0, 0.0, 0.0]), float)
    direction = direction / np.linalg.norm(direction)
    lat = cfg.lattice
    base = lat.to_cartesian(cfg.ions.positions[0])
    frac = lat.to_fractional(base + d * lat.scale * direction)
    raw = override(cfg.raw, f"ions.{idx}.position", [float(v) for v in frac])
    if not sweep.get("relax_ions", False):
        raw = override(raw, "solver.relax_ions", False)
    return build_config(raw, source="<sweep>")


def cmd_sweep(args):
    cfg = load_config(args.config)
    sweep = dict(cfg.sweep)
    param = args.param or sweep.get("parameter")
    if not param:
        raise ConfigError("field 'sweep.parameter': missing (or pass --param)")
    values = _sweep_values(args, sweep)
    rows = []
    ok = True
    for v in values:
        if param == "separation":
            sub = _separation_config(cfg, v, sweep)
        else:
            sub = build_config(override(cfg.raw, param, v), source=f"<sweep {param}={v}>")
        state, _ = run_solve(sub, args.verbose)
        ok &= state.converged
        e, r = state.energy, state.residuals
        rows.append((v, e.total, e.e1, e.e2, e.e3, e.e4, state.lam, r["schrodinger"],
                     r["force"], r["poisson"], r["neutrality"], state.converged))
    out = _out_dir(args, cfg)
    path = os.path.join(out, "sweep.csv")
    write_csv(path, SWEEP_HEADER, rows)
    print(path)
    return EXIT_OK if ok else EXIT_FAIL


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="cap FFT worker threads")
    common.add_argument("--verbose", action="store_true", help="print progress lines")
    common.add_argument("--out", default=None, help="output directory (overrides config)")

    parser = argparse.ArgumentParser(prog="spcrystal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="compute a ground state")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check", parents=[common], help="verify a saved state")
    p.add_argument("state", help="state.npz written by solve")
    p.add_argument("--tol-psi", type=float, default=None)
    p.add_argument("--tol-force", type=float, default=None)
    p.add_argument("--no-force", action="store_true", help="skip the force balance check")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("green", parents=[common], help="tabulate G and D along a segment")
    p.add_argument("--config", required=True)
    p.add_argument("--from", dest="start", type=float, nargs=3, default=None)
    p.add_argument("--to", dest="stop", type=float, nargs=3, default=None)
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--cartesian", action="store_true", help="segment ends are Cartesian")
    p.set_defaults(func=cmd_green)

    p = sub.add_parser("sweep", parents=[common], help="solve over a parameter range")
    p.add_argument("--config", required=True)
    p.add_argument("--param", default=None, help="'separation' or a dotted config key")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--values", default=None, help="comma separated values")
    g.add_argument("--range", default=None, help="start:stop:num")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    workers = args.threads if args.threads else 1
    try:
        with scipy.fft.set_workers(workers):
            return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
