"""Command-line front end: generate, estimate, certify, bounds, experiment.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure,
4 enumeration cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import bounds_report, normalize_columns
from .certificates import affine_necessary, certify, check_multi_optimal, check_regularized_kkt, check_regularized_unique
from .datamodel import Dataset, GenSpec, MultiDataset, MultiTruth, Truth, generate, generate_multi
from .errors import CapExceededError, RobustL1Error
from .experiments import ExperimentConfig, run_experiment
from .solvers import SolverOptions, solve_l1, solve_regularized, solve_reweighted_l1, solve_sum_of_norms

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_CAP = 0, 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# file formats


def _invocation(argv):
    return {"argv": ["robustl1"] + list(argv), "version": __version__}


def _sidecar(path: Path, what: str) -> Path:
    return path.with_name(f"{path.stem}.{what}.csv")


def write_dataset(path, ds, invocation=None):
    """CSV with header y,x1..xn (or y1..ym,x1..xn); truth goes to sidecar files."""
    path = Path(path)
    if isinstance(ds, MultiDataset):
        ycols = [f"y{i + 1}" for i in range(ds.m)]
        Y = ds.outputs.T
    else:
        ycols = ["y"]
        Y = ds.outputs[:, None]
    header = ycols + [f"x{i + 1}" for i in range(ds.n)]
    with open(path, "w", newline="") as fh:
        if invocation is not None:
            fh.write("# invocation: " + json.dumps(invocation) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.hstack([Y, ds.regressors.T]):
            w.writerow([repr(float(v)) for v in row])
    if ds.truth is not None:
        if isinstance(ds, MultiDataset):
            theta0, gross = ds.truth.A0, ds.truth.F.T
        else:
            theta0, gross = ds.truth.theta0, ds.truth.gross
        np.savetxt(_sidecar(path, "theta0"), np.atleast_1d(theta0), delimiter=",", fmt="%.17g")
        np.savetxt(_sidecar(path, "f"), np.atleast_1d(gross), delimiter=",", fmt="%.17g")


def read_dataset(path):
    path = Path(path)
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise UsageError(f"{path}: empty dataset file")
    rows = list(csv.reader(io.StringIO("".join(lines))))
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise UsageError(f"{path}: non-numeric entry ({exc})") from None
    if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] != len(header):
        raise UsageError(f"{path}: expected {len(header)} columns per row")
    ycols = [i for i, h in enumerate(header) if h == "y" or (h.startswith("y") and h[1:].isdigit())]
    xcols = [i for i, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()]
    if not ycols or not xcols or len(ycols) + len(xcols) != len(header):
        raise UsageError(f"{path}: header must be y,x1,...,xn or y1,...,ym,x1,...,xn")
    X = data[:, xcols].T
    multi = header[ycols[0]] != "y"
    t0p, fp = _sidecar(path, "theta0"), _sidecar(path, "f")
    truth = None
    if multi:
        Y = data[:, ycols].T
        mtruth = None
        if t0p.exists() and fp.exists():
            A0 = np.loadtxt(t0p, delimiter=",", ndmin=2).reshape(Y.shape[0], X.shape[0])
            F = np.loadtxt(fp, delimiter=",", ndmin=2).reshape(X.shape[1], Y.shape[0]).T
            mtruth = MultiTruth(A0, F, Y - A0 @ X - F)
        return MultiDataset(X, Y, mtruth)
    y = data[:, ycols[0]]
    if t0p.exists() and fp.exists():
        theta0 = np.atleast_1d(np.loadtxt(t0p, delimiter=","))
        f = np.atleast_1d(np.loadtxt(fp, delimiter=","))
        truth = Truth(theta0, f, y - X.T @ theta0 - f)
    return Dataset(X, y, truth)


def _write_json(path, payload):
    text = json.dumps(payload, indent=2, default=_json_default)
    if path is None or str(path) == "-":
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def _check_inputs(*paths):
    for p in paths:
        if not Path(p).is_file():
            raise UsageError(f"input file not found: {p}")


def _check_output(path):
    if path is None or str(path) == "-":
        return
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise UsageError(f"output directory does not exist: {parent}")


def _envelope(argv, **fields):
    return {"schema_version": SCHEMA_VERSION, "invocation": _invocation(argv), **fields}


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args, argv):
    _check_inputs(args.spec)
    _check_output(args.out)
    try:
        spec = GenSpec.from_dict(_load_json(args.spec))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{args.spec}: {exc}") from None
    ds = generate_multi(spec, args.m) if args.m > 1 else generate(spec)
    write_dataset(args.out, ds, _invocation(argv))
    return EXIT_OK


def _opts(args):
    return SolverOptions(opt_tol=args.opt_tol, max_iter=args.max_iter, method=args.solver)


def cmd_estimate(args, argv):
    _check_inputs(args.data)
    _check_output(args.out)
    ds = read_dataset(args.data)
    opts = _opts(args)
    method = args.method
    if isinstance(ds, MultiDataset) and method != "sum-of-norms":
        raise UsageError("multi-output data supports only --method sum-of-norms")
    if method == "sum-of-norms":
        md = ds if isinstance(ds, MultiDataset) else MultiDataset.from_dataset(ds)
        est = solve_sum_of_norms(md, opts)
        cert = check_multi_optimal(md, est.A)
        payload = _envelope(argv, method=method, estimate=est.to_dict(),
                            certificate={"t3_value": cert.t3_value, "optimal": cert.optimal,
                                         "unique": cert.unique, "rank_I0": cert.rank_I0})
        _write_json(args.out, payload)
        return EXIT_OK
    if method == "regularized":
        if args.lam is None:
            raise UsageError("--method regularized needs --lambda")
        sol = solve_regularized(ds, args.lam, opts)
        payload = _envelope(argv, method=method, estimate=sol.to_dict(), theta=sol.theta,
                            certificate={"kkt": check_regularized_kkt(ds, args.lam, sol, max(opts.opt_tol, 1e-7)),
                                         "unique": check_regularized_unique(ds, sol)})
        _write_json(args.out, payload)
        return EXIT_OK
    if method == "reweighted":
        est = solve_reweighted_l1(ds, args.rmax, args.delta, opts)
    else:
        est = solve_l1(ds, opts)
    cert = certify(ds, est.theta)
    payload = _envelope(argv, method=method, estimate=est.to_dict(), theta=est.theta,
                        certificate=cert.to_dict())
    if ds.truth is not None:
        payload["error_to_truth"] = float(np.linalg.norm(est.theta - ds.truth.theta0))
    _write_json(args.out, payload)
    return EXIT_OK


def _read_theta(path):
    d = _load_json(path)
    if isinstance(d, list):
        return np.asarray(d, dtype=float)
    for key in ("theta", "A"):
        if key in d:
            return np.asarray(d[key], dtype=float)
    if "estimate" in d:
        for key in ("theta", "A"):
            if key in d["estimate"]:
                return np.asarray(d["estimate"][key], dtype=float)
    raise UsageError(f"{path}: no 'theta' or 'A' entry")


def cmd_certify(args, argv):
    _check_inputs(args.data, args.theta)
    _check_output(args.out)
    ds = read_dataset(args.data)
    theta = _read_theta(args.theta)
    if isinstance(ds, MultiDataset) or theta.ndim == 2:
        md = ds if isinstance(ds, MultiDataset) else MultiDataset.from_dataset(ds)
        theta = theta.reshape(md.m, md.n)
        c = check_multi_optimal(md, theta, args.tol)
        _write_json(args.out, _envelope(argv, t3_value=c.t3_value, optimal=c.optimal, unique=c.unique,
                                        rank_I0=c.rank_I0, zero=c.zero))
        return EXIT_OK
    if theta.shape != (ds.n,):
        raise UsageError(f"theta must have length {ds.n}")
    cert = certify(ds, theta, args.tol)
    payload = _envelope(argv, **cert.to_dict())
    if ds.is_affine():
        payload["affine_necessary"] = affine_necessary(ds, theta)
    _write_json(args.out, payload)
    return EXIT_OK


def cmd_bounds(args, argv):
    _check_inputs(args.data)
    _check_output(args.out)
    ds = read_dataset(args.data)
    X = ds.regressors
    if args.normalize:
        X = normalize_columns(X)
    rep = bounds_report(X, exact_cap=args.exact_cap, seed=args.seed)
    if args.require_exact:
        inexact = sorted(k for k, v in rep.exactness.items() if v not in ("exact", "undefined"))
        if inexact:
            raise CapExceededError(f"not computable exactly within --exact-cap {args.exact_cap}: {', '.join(inexact)}")
    _write_json(args.out, _envelope(argv, normalized=bool(args.normalize), **rep.to_dict()))
    return EXIT_OK


def cmd_experiment(args, argv):
    _check_inputs(args.config)
    _check_output(args.out)
    raw = _load_json(args.config)
    if args.workers is not None:
        raw["workers"] = args.workers
    try:
        config = ExperimentConfig.from_dict(raw)
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"{args.config}: {exc}") from None
    table = run_experiment(config)
    fmt = args.format or ("json" if str(args.out).endswith(".json") else "csv")
    inv = _invocation(argv)
    if fmt == "json":
        table.to_json(args.out, extra={"schema_version": SCHEMA_VERSION, "invocation": inv})
    else:
        table.to_csv(args.out, comments=["invocation: " + json.dumps(inv)])
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="robustl1", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a dataset from a GenSpec JSON file")
    g.add_argument("--spec", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--m", type=int, default=1, help="output dimension (static kinds only)")
    g.set_defaults(func=cmd_generate)

    def solver_flags(sp):
        sp.add_argument("--solver", choices=("exact_lp", "first_order"), default="exact_lp")
        sp.add_argument("--opt-tol", type=float, default=1e-9)
        sp.add_argument("--max-iter", type=int, default=20000)

    e = sub.add_parser("estimate", help="fit a robust estimator")
    e.add_argument("--data", required=True)
    e.add_argument("--method", choices=("l1", "reweighted", "regularized", "sum-of-norms"), default="l1")
    e.add_argument("--lambda", dest="lam", type=float)
    e.add_argument("--rmax", type=int, default=2)
    e.add_argument("--delta", type=float)
    e.add_argument("--out", required=True)
    solver_flags(e)
    e.set_defaults(func=cmd_estimate)

    c = sub.add_parser("certify", help="check optimality and uniqueness of a parameter vector")
    c.add_argument("--data", required=True)
    c.add_argument("--theta", required=True, help="JSON file with a 'theta' (or 'A') entry")
    c.add_argument("--tol", type=float, default=1e-8)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_certify)

    b = sub.add_parser("bounds", help="genericity measures and recovery thresholds")
    b.add_argument("--data", required=True)
    b.add_argument("--exact-cap", type=int, default=15)
    b.add_argument("--normalize", action="store_true", help="scale columns to unit 2-norm first")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--require-exact", action="store_true",
                   help="fail with exit code 4 unless every field is exact")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bounds)

    x = sub.add_parser("experiment", help="run a Monte Carlo sweep from a config JSON file")
    x.add_argument("--config", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--format", choices=("csv", "json"))
    x.add_argument("--workers", type=int)
    x.set_defaults(func=cmd_experiment)
    return p


def dispatch(argv) -> int:
    argv = list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"robustl1: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapExceededError as exc:
        print(f"robustl1: cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (RobustL1Error, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"robustl1: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"robustl1: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv=None):
    sys.exit(dispatch(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
