"""
Command-line interface: ``stiefel-log <subcommand> ...``.

Exit codes are 0 on success, 2 on usage or input errors and 3 when the
logarithm does not converge (its diagnostics are still written).
"""

import argparse
import csv
import io
import json
import math
import sys
import warnings

import numpy as np

from . import __version__
from .convergence import max_feasible_delta, scan_region
from .experiments import (
    DEFAULT_RADIUS_GRID,
    BenchmarkSpec,
    estimate_radius,
    run_benchmark,
    strategy_sweep,
)
from .geometry import check_stiefel, stiefel_exp, tangent_from_embedded, tangent_project
from .matio import MatrixFormatError, format_matrix, read_matrix
from .solver import SolverConfig, Strategy, stiefel_log

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOT_CONVERGED = 3


class InputError(Exception):
    """Bad command-line input; reported with exit code 2."""


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _dumps(doc):
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _table(rows, columns, fmt):
    if fmt == "json":
        return _dumps({"schema": 1, "rows": [{c: r[c] for c in columns} for r in rows]})
    buf = io.StringIO()
    if fmt == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    else:
        buf.write(" ".join(columns) + "\n")
        for r in rows:
            buf.write(" ".join(_fmt(r[c]) for c in columns) + "\n")
    return buf.getvalue()


def _matrix_text(M, fmt):
    if fmt == "json":
        M = np.atleast_2d(M)
        return _dumps({"schema": 1, "n": M.shape[0], "p": M.shape[1], "data": M})
    if fmt == "csv":
        return "".join(",".join(_fmt(v) for v in row) + "\n" for row in np.atleast_2d(M))
    return format_matrix(M)


def _emit(text, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _load(path, label):
    try:
        return read_matrix(path)
    except FileNotFoundError:
        raise InputError(f"{label}: file not found: {path}") from None
    except MatrixFormatError as exc:
        raise InputError(f"{label}: {exc}") from None


def _load_point(path, label):
    M = _load(path, label)
    try:
        return check_stiefel(M, tol=1e-10 * max(1, M.shape[1] if M.ndim == 2 else 1))
    except ValueError as exc:
        raise InputError(f"{label}: {exc}") from None


def _same_shape(U, W, label):
    if W.shape[0] != U.shape[0]:
        raise InputError(f"{label} has n = {W.shape[0]} rows but U has n = {U.shape[0]}")
    if W.shape[1] != U.shape[1]:
        raise InputError(f"{label} has p = {W.shape[1]} columns but U has p = {U.shape[1]}")


def _config(args):
    try:
        return SolverConfig(beta=args.beta, tol=args.tol, max_iterations=args.max_iter,
                            strategy=Strategy.parse(args.strategy))
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _check_log_shape(U):
    n, p = U.shape
    if n < 2 * p:
        raise InputError(f"the logarithm needs n >= 2p, got n = {n} < 2p = {2 * p}")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_exp(args):
    U = _load_point(args.U, "U")
    D = _load(args.Delta, "Delta")
    _same_shape(U, D, "Delta")
    if not args.beta > 0:
        raise InputError(f"beta must be positive, got {args.beta}")
    try:
        x = tangent_from_embedded(U, D, tol=1e-8)
    except ValueError as exc:
        warnings.warn(f"{exc}; projecting onto the tangent space", stacklevel=1)
        x = tangent_project(U, D)
    _emit(_matrix_text(stiefel_exp(x, args.beta, args.t), args.format), args.out)
    return EXIT_OK


def _solve(args):
    U = _load_point(args.U, "U")
    Ut = _load_point(args.U_tilde, "U_tilde")
    _same_shape(U, Ut, "U_tilde")
    _check_log_shape(U)
    return stiefel_log(U, Ut, _config(args))


def _write_diagnostics(res, args):
    doc = res.to_dict(include_time=args.timing)
    doc["config"]["tol"] = args.tol
    doc["config"]["max_iterations"] = args.max_iter
    text = _dumps(doc)
    path = args.diagnostics
    if path is None and args.out not in (None, "-"):
        path = args.out + ".json"
    if path is None:
        sys.stderr.write(text)
    else:
        _emit(text, path)


def cmd_log(args):
    res = _solve(args)
    _emit(_matrix_text(res.delta.embedded(), args.format), args.out)
    _write_diagnostics(res, args)
    if not res.converged:
        sys.stderr.write(f"not converged: {res.failure}\n")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_distance(args):
    res = _solve(args)
    if args.format == "json":
        doc = res.to_dict(include_time=args.timing)
        text = _dumps(doc)
    else:
        text = _fmt(res.distance()) + "\n"
    _emit(text, args.out)
    if not res.converged:
        sys.stderr.write(f"not converged: {res.failure}\n")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_condition_scan(args):
    if args.n_beta < 1 or args.n_delta < 1:
        raise InputError("grid sizes must be positive")
    if not (args.beta_max > args.beta_min and args.delta_max > args.delta_min):
        raise InputError("ranges must satisfy min < max")
    if args.summary:
        betas = np.linspace(args.beta_min, args.beta_max, args.n_beta + 1)[1:]
        rows = [{"beta": b, "max_feasible_delta": max_feasible_delta(b, args.n_delta)} for b in betas]
        _emit(_table(rows, ["beta", "max_feasible_delta"], args.format), args.out)
        return EXIT_OK
    betas, deltas, feasible, rate = scan_region((args.beta_min, args.beta_max), (args.delta_min, args.delta_max),
                                                args.n_beta, args.n_delta)
    rows = [{"beta": b, "delta": d, "feasible": bool(feasible[i, j]),
             "rate": rate[i, j] if feasible[i, j] else math.nan}
            for i, b in enumerate(betas) for j, d in enumerate(deltas)]
    _emit(_table(rows, ["beta", "delta", "feasible", "rate"], args.format), args.out)
    return EXIT_OK


def cmd_benchmark(args):
    try:
        with open(args.spec) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"benchmark spec not found: {args.spec}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"benchmark spec is not valid JSON: {exc}") from None
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        spec = BenchmarkSpec.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise InputError(f"benchmark spec: {exc}") from None
    rows = run_benchmark(spec)
    _emit(_table(rows, ["strategy", "beta", "t_M", "failures", "mean_iterations"], args.format), args.out)
    return EXIT_OK


def _grid(args):
    if args.grid_points < 1:
        raise InputError("grid-points must be positive")
    if args.grid_points == len(DEFAULT_RADIUS_GRID):
        return DEFAULT_RADIUS_GRID
    return tuple(np.linspace(0.05, 0.95, args.grid_points))


def cmd_radius(args):
    if not args.n >= 2 * args.p >= 2:
        raise InputError(f"radius estimation needs n >= 2p >= 2, got n = {args.n}, p = {args.p}")
    betas = args.betas
    for b in betas:
        if not b > 0.25:
            raise InputError(f"beta must exceed 1/4, got {b}")
    rows = estimate_radius(args.n, args.p, betas, _grid(args), args.samples_per_point, args.seed,
                           Strategy.parse(args.strategy), args.tol, args.max_iter)
    for r in rows:
        r["radius99_fraction"] = r["radius99"] / (2.0 * math.sqrt(args.p))
    cols = ["beta", "theta0", "theta1", "r2", "radius99", "radius99_fraction", "r2_mcfadden", "samples", "skipped"]
    _emit(_table(rows, cols, args.format), args.out)
    return EXIT_OK


def cmd_sweep(args):
    if not args.n >= 2 * args.p >= 2:
        raise InputError(f"a sweep needs n >= 2p >= 2, got n = {args.n}, p = {args.p}")
    try:
        strategies = [Strategy.parse(s) for s in args.strategies]
    except ValueError as exc:
        raise InputError(str(exc)) from None
    bundle = strategy_sweep(args.n, args.p, args.fractions, args.betas, strategies, args.samples,
                            args.seed, args.tol, args.max_iter)
    if args.format == "json":
        _emit(_dumps(bundle.to_dict()), args.out)
    else:
        _emit(_table(bundle.summary, ["fraction", "beta", "strategy", "median_iterations", "failures"],
                     args.format), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _strategy_arg(text):
    try:
        return str(Strategy.parse(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    parser = argparse.ArgumentParser(prog="stiefel-log",
                                     description="Exponential, logarithm and distance on the Stiefel manifold.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fmt_default):
        p.add_argument("--out", "-o", default=None, help="output path (default: stdout)")
        p.add_argument("--format", choices=("csv", "json", "text"), default=fmt_default)

    def solver_flags(p):
        p.add_argument("--beta", type=float, default=1.0, help="metric parameter (> 1/4)")
        p.add_argument("--tol", type=float, default=1e-10)
        p.add_argument("--max-iter", type=int, default=200)
        p.add_argument("--strategy", type=_strategy_arg, default="accel",
                       help="backward, fixed, pseudo:<s> or accel")

    p = sub.add_parser("exp", help="Riemannian exponential")
    p.add_argument("U")
    p.add_argument("Delta")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--t", type=float, default=1.0, help="geodesic time")
    common(p, "text")
    p.set_defaults(func=cmd_exp)

    for name, func, help_ in (("log", cmd_log, "Riemannian logarithm"),
                              ("distance", cmd_distance, "geodesic distance")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("U")
        p.add_argument("U_tilde")
        solver_flags(p)
        p.add_argument("--seed", type=int, default=None, help="accepted for uniformity; the solve is deterministic")
        p.add_argument("--timing", action="store_true", help="include wall time in JSON output")
        if name == "log":
            p.add_argument("--diagnostics", default=None, help="diagnostics JSON path (default: OUT.json or stderr)")
        common(p, "text")
        p.set_defaults(func=func)

    p = sub.add_parser("condition-scan", help="admissible (beta, delta) region")
    p.add_argument("--beta-min", type=float, default=0.25)
    p.add_argument("--beta-max", type=float, default=1.25)
    p.add_argument("--n-beta", type=int, default=200)
    p.add_argument("--delta-min", type=float, default=0.0)
    p.add_argument("--delta-max", type=float, default=1.0)
    p.add_argument("--n-delta", type=int, default=200)
    p.add_argument("--summary", action="store_true", help="one row per beta with the largest admissible delta")
    common(p, "csv")
    p.set_defaults(func=cmd_condition_scan)

    p = sub.add_parser("benchmark", help="min-of-repetitions timing from a JSON spec")
    p.add_argument("spec")
    p.add_argument("--seed", type=int, default=None, help="overrides the spec seed")
    common(p, "csv")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("radius", help="logistic convergence radius")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--p", type=int, default=8)
    p.add_argument("--betas", type=float, nargs="+", default=[1.0])
    p.add_argument("--samples-per-point", type=int, default=40)
    p.add_argument("--grid-points", type=int, default=len(DEFAULT_RADIUS_GRID))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strategy", type=_strategy_arg, default="pseudo:2")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=200)
    common(p, "csv")
    p.set_defaults(func=cmd_radius)

    p = sub.add_parser("sweep", help="iteration counts per strategy")
    p.add_argument("--n", type=int, default=60)
    p.add_argument("--p", type=int, default=30)
    p.add_argument("--fractions", type=float, nargs="+", default=[0.19])
    p.add_argument("--betas", type=float, nargs="+", default=[1.0])
    p.add_argument("--strategies", nargs="+", default=["fixed", "pseudo:2", "accel"])
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=200)
    common(p, "csv")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
