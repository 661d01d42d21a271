"""Monte Carlo harness for recovery, noisy-error, bound and consistency sweeps.

Every trial draws its data from a seed derived from
``(master seed, seed label, sweep index, trial index)``, so tables are
bitwise reproducible and independent of the number of workers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import __version__
from .bounds import coherence_bound, normalize_columns, r_value, rn_value
from .datamodel import ARXParams, GenSpec, derive_seed, generate, generate_multi
from .errors import RobustL1Error
from .solvers import (
    SolverOptions,
    least_squares_oracle,
    solve_l1,
    solve_regularized,
    solve_reweighted_l1,
    solve_sum_of_norms,
)

SCENARIOS = (
    "static_linear",
    "static_affine",
    "static_affine_positive",
    "static_linear_positive",
    "noisy_static",
    "arx",
    "arx_reweighted",
    "bound_comparison",
    "multivariable",
    "asymptotic_consistency",
)

RECOVERY_SCENARIOS = ("static_linear", "static_affine", "static_affine_positive",
                      "static_linear_positive", "arx", "arx_reweighted")

# fixed dynamic system used by the bound comparison:
# y_t = -0.40 y_{t-1} + 0.25 y_{t-2} - 0.15 u_{t-1}
BOUND_ARX = ARXParams(n_a=2, n_b=1, n_u=1, a=(-0.40, 0.25), b=(0.0, -0.15))


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    gen: GenSpec
    fractions: tuple = (0.0,)
    sizes: tuple = ()
    trials: int = 50
    recovery_tol: float = 1e-5
    lam: Optional[float] = None
    r_max: Optional[int] = None
    delta: Optional[float] = None
    seed: int = 0
    seed_label: Optional[str] = None
    m: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if int(self.trials) < 1:
            raise ValueError("trials must be >= 1")
        fr = list(self.fractions)
        if any(not 0.0 <= f <= 1.0 for f in fr):
            raise ValueError("fractions must lie in [0, 1]")
        if any(b <= a for a, b in zip(fr, fr[1:])):
            raise ValueError("fractions must be strictly increasing")
        if any(int(s) < 1 for s in self.sizes):
            raise ValueError("sizes must be positive")
        if self.scenario in ("bound_comparison", "asymptotic_consistency") and not self.sizes:
            raise ValueError(f"{self.scenario} needs a list of sizes")
        if self.scenario == "noisy_static" and (self.lam is None or self.gen.noise_snr_db is None):
            raise ValueError("noisy_static needs lambda and gen.noise_snr_db")
        if self.delta is not None and not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.m < 1:
            raise ValueError("m must be >= 1")

    @property
    def label(self) -> str:
        return self.seed_label or self.scenario

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "gen": self.gen.to_dict(),
            "fractions": list(self.fractions),
            "sizes": list(self.sizes),
            "trials": self.trials,
            "recovery_tol": self.recovery_tol,
            "lambda": self.lam,
            "r_max": self.r_max,
            "delta": self.delta,
            "seed": self.seed,
            "seed_label": self.seed_label,
            "m": self.m,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {"scenario", "gen", "fractions", "sizes", "trials", "recovery_tol", "lambda",
                 "r_max", "delta", "seed", "seed_label", "m", "workers"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        gen = d.pop("gen")
        lam = d.pop("lambda", None)
        return cls(gen=GenSpec.from_dict(gen), lam=lam,
                   fractions=tuple(d.pop("fractions", (0.0,))),
                   sizes=tuple(int(s) for s in d.pop("sizes", ())), **d)


@dataclass
class ResultTable:
    x_name: str
    columns: list
    rows: list                      # list of dicts: {"x": ..., metric: value}
    metadata: dict = field(default_factory=dict)

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    @property
    def x(self):
        return self.column("x")

    def to_csv(self, path=None, comments=()) -> str:
        buf = io.StringIO()
        for c in comments:
            buf.write(f"# {c}\n")
        buf.write("# metadata: " + json.dumps(self.metadata, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x"] + self.columns)
        for r in self.rows:
            w.writerow([repr(float(r["x"]))] + [repr(float(r[c])) for c in self.columns])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        return {"x_name": self.x_name, "columns": list(self.columns),
                "rows": [{k: float(v) for k, v in r.items()} for r in self.rows],
                "metadata": self.metadata}

    def to_json(self, path=None, extra=None) -> str:
        d = self.to_dict()
        if extra:
            d.update(extra)
        text = json.dumps(d, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _run_id(config: ExperimentConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha1(blob).hexdigest()[:12]


def _metadata(config: ExperimentConfig) -> dict:
    return {"config": config.to_dict(), "run_id": _run_id(config), "version": __version__}


# ---------------------------------------------------------------------------
# trial machinery


def _call(args):
    fn, config, i, x, j = args
    seed = derive_seed(config.seed, config.label, i, j)
    try:
        return fn(config, x, seed), None
    except (RobustL1Error, FloatingPointError, RuntimeError, np.linalg.LinAlgError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _grid(config: ExperimentConfig, xs, fn: Callable, x_name: str, prob_keys=()) -> ResultTable:
    jobs = [(fn, config, i, x, j) for i, x in enumerate(xs) for j in range(config.trials)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_call, jobs, chunksize=max(1, len(jobs) // (4 * config.workers))))
    else:
        results = [_call(job) for job in jobs]
    rows = []
    columns = None
    notes = {}
    for i, x in enumerate(xs):
        chunk = results[i * config.trials:(i + 1) * config.trials]
        ok = [r for r, err in chunk if err is None]
        errs = [err for r, err in chunk if err is not None]
        if errs:
            notes[str(x)] = errs[:3]
        keys = list(ok[0].keys()) if ok else list(prob_keys)
        row = {"x": float(x)}
        for k in keys:
            vals = np.array([r[k] for r in ok], dtype=float)
            if k in prob_keys:
                # failed trials count as not recovered
                row[k] = float(vals.sum() / config.trials)
            else:
                row[k] = float(vals.mean()) if vals.size else float("nan")
        row["failures"] = float(len(errs))
        row["trials"] = float(config.trials)
        if columns is None and ok:
            columns = keys + ["failures", "trials"]
        rows.append(row)
    if columns is None:
        columns = list(prob_keys) + ["failures", "trials"]
    for r in rows:
        for c in columns:
            r.setdefault(c, float("nan"))
    meta = _metadata(config)
    if notes:
        meta["failures"] = notes
    return ResultTable(x_name, columns, rows, meta)


def _opts():
    return SolverOptions()


def _recovered(err, tol):
    return 1.0 if err <= tol else 0.0


def _recovery_trial(config, fraction, seed):
    spec = config.gen.with_(outlier_fraction=fraction, seed=seed)
    ds = generate(spec)
    theta0 = ds.truth.theta0
    est = solve_l1(ds, _opts())
    err = float(np.linalg.norm(est.theta - theta0))
    out = {"recovery_probability": _recovered(err, config.recovery_tol),
           "certified_fraction": 1.0 if est.status == "optimal" else 0.0}
    if config.scenario == "arx_reweighted":
        rw = solve_reweighted_l1(ds, config.r_max if config.r_max is not None else 2, config.delta, _opts())
        err_rw = float(np.linalg.norm(rw.theta - theta0))
        out = {"recovery_probability": _recovered(err_rw, config.recovery_tol),
               "l1_recovery_probability": out["recovery_probability"],
               "certified_fraction": out["certified_fraction"]}
    return out


def run_recovery_curve(config: ExperimentConfig) -> ResultTable:
    """Empirical probability of exact recovery against the outlier fraction."""
    if config.scenario not in RECOVERY_SCENARIOS:
        raise ValueError(f"{config.scenario} is not a recovery scenario")
    if config.gen.noise_snr_db is not None:
        raise ValueError("recovery curves need noise-free data")
    return _grid(config, config.fractions, _recovery_trial, "outlier_fraction",
                 prob_keys=("recovery_probability", "l1_recovery_probability", "certified_fraction"))


def _noisy_trial(config, fraction, seed):
    ds = generate(config.gen.with_(outlier_fraction=fraction, seed=seed))
    theta0 = ds.truth.theta0
    denom = float(np.linalg.norm(theta0))
    l1 = solve_l1(ds, _opts()).theta
    reg = solve_regularized(ds, config.lam, _opts()).theta
    inliers = np.flatnonzero(ds.truth.gross == 0)
    orc = least_squares_oracle(ds, inliers).theta
    return {
        "l1_relative_error": float(np.linalg.norm(l1 - theta0)) / denom,
        "regularized_relative_error": float(np.linalg.norm(reg - theta0)) / denom,
        "oracle_relative_error": float(np.linalg.norm(orc - theta0)) / denom,
    }


def run_noisy_error_curve(config: ExperimentConfig) -> ResultTable:
    """Mean relative error of l1, regularized l1 and the inlier oracle per fraction."""
    return _grid(config, config.fractions, _noisy_trial, "outlier_fraction")


def _bound_counts(X):
    X = normalize_columns(X)
    try:
        cb = coherence_bound(X)
    except RobustL1Error:
        cb = float("nan")
    return 0.5 / r_value(X), 0.5 / rn_value(X), cb


def _bound_trial(config, N, seed):
    N = int(N)
    n = config.gen.n
    static = generate(GenSpec(n=n, N=N, regressor_kind="gaussian", seed=seed))
    dyn_p = config.gen.arx_params or BOUND_ARX
    dynamic = generate(GenSpec(n=dyn_p.n, N=N, regressor_kind="arx", arx_params=dyn_p, seed=seed))
    s = _bound_counts(static.regressors)
    d = _bound_counts(dynamic.regressors)
    return {
        "static_r_count": s[0], "static_rn_count": s[1], "static_coherence_count": s[2],
        "arx_r_count": d[0], "arx_rn_count": d[1], "arx_coherence_count": d[2],
    }


def run_bound_comparison(config: ExperimentConfig) -> ResultTable:
    """Average correctable-outlier counts 1/(2r), 1/(2r_n) and (1 + 1/mu)/2 per N.

    Columns are normalized to unit 2-norm first.  The static arm draws Gaussian
    n x N regressors with n = gen.n; the dynamic arm uses gen.arx_params, or the
    fixed second-order system above when none is given.
    """
    return _grid(config, config.sizes, _bound_trial, "N")


def _consistency_trial(config, N, seed):
    base = config.gen.with_(N=int(N), outlier_mean=0.0)
    out = {}
    for arm, mode in (("symmetric", "two_sided"), ("asymmetric", "positive_only")):
        ds = generate(base.with_(sign_mode=mode, seed=seed))
        theta0 = ds.truth.theta0
        err = float(np.linalg.norm(solve_l1(ds, _opts()).theta - theta0))
        out[f"{arm}_mean_error"] = err
        out[f"{arm}_relative_error"] = err / float(np.linalg.norm(theta0))
    return out


def run_asymptotic_consistency(config: ExperimentConfig) -> ResultTable:
    """Mean l1 error against N with zero-mean symmetric outliers, plus a one-sided control.

    Both arms use ``gen`` with the outlier mean set to zero; the control folds
    the outlier values to be positive, which breaks the symmetry assumption.
    """
    return _grid(config, config.sizes, _consistency_trial, "N")


def _multi_trial(config, fraction, seed):
    md = generate_multi(config.gen.with_(outlier_fraction=fraction, seed=seed), config.m)
    est = solve_sum_of_norms(md, _opts())
    err = float(np.linalg.norm(est.A - md.truth.A0))
    return {"recovery_probability": _recovered(err, config.recovery_tol),
            "certified_fraction": 1.0 if est.status == "optimal" else 0.0}


def run_multivariable_curve(config: ExperimentConfig) -> ResultTable:
    """Recovery probability of the sum-of-norms estimator with whole-column corruption."""
    return _grid(config, config.fractions, _multi_trial, "outlier_fraction",
                 prob_keys=("recovery_probability", "certified_fraction"))


_DISPATCH = {
    "noisy_static": run_noisy_error_curve,
    "bound_comparison": run_bound_comparison,
    "asymptotic_consistency": run_asymptotic_consistency,
    "multivariable": run_multivariable_curve,
}


def run_experiment(config: ExperimentConfig) -> ResultTable:
    return _DISPATCH.get(config.scenario, run_recovery_curve)(config)


def default_config(scenario: str, **overrides) -> ExperimentConfig:
    """Desk-scale defaults (50 trials, N = 200) for each scenario."""
    fr = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    arx22 = ARXParams(n_a=2, n_b=2)
    base = {
        "static_linear": dict(gen=GenSpec(n=4, N=200)),
        "static_linear_positive": dict(gen=GenSpec(n=4, N=200, sign_mode="positive_only")),
        "static_affine": dict(gen=GenSpec(n=4, N=200, regressor_kind="affine_gaussian")),
        "static_affine_positive": dict(gen=GenSpec(n=4, N=200, regressor_kind="affine_gaussian",
                                                   sign_mode="positive_only")),
        "noisy_static": dict(gen=GenSpec(n=4, N=200, noise_snr_db=20.0), lam=0.10,
                             fractions=(0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)),
        "arx": dict(gen=GenSpec(n=arx22.n, N=200, regressor_kind="arx", arx_params=arx22)),
        "arx_reweighted": dict(gen=GenSpec(n=arx22.n, N=200, regressor_kind="arx", arx_params=arx22),
                               r_max=2),
        "bound_comparison": dict(gen=GenSpec(n=BOUND_ARX.n, N=100, arx_params=None),
                                 sizes=(50, 100, 200, 400), trials=20, fractions=(0.0,)),
        "multivariable": dict(gen=GenSpec(n=3, N=200), m=3),
        "asymptotic_consistency": dict(gen=GenSpec(n=3, N=250, regressor_kind="affine_gaussian",
                                                   outlier_fraction=0.9, outlier_mean=0.0),
                                       sizes=(250, 500, 1000, 2000), fractions=(0.9,)),
    }
    if scenario not in base:
        raise ValueError(f"unknown scenario {scenario!r}")
    kw = dict(scenario=scenario, fractions=fr)
    kw.update(base[scenario])
    kw.update(overrides)
    return ExperimentConfig(**kw)
