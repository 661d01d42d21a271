"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and replayed in the terminal summary (see conftest).
Two criteria are known to be unattainable as stated; they run at full strength,
print FAIL, and are marked strict xfail so an unexpected pass is also reported.
The analysis for both is in the decisions ledger kept next to the repository.
"""

import math
import time

import numpy as np
import pytest

import oracles
from conftest import l1_objective
from robustl1.bounds import (
    error_bound_constants, evaluate_error_bound, genericity_index, k2_value, l0_brute_force,
    r_value, sufficient_threshold_r,
)
from robustl1.certificates import check_optimal, check_regularized_kkt, check_regularized_unique
from robustl1.datamodel import Dataset, GenSpec, Truth, generate
from robustl1.experiments import default_config, run_experiment
from robustl1.solvers import geometric_median, solve_l1, solve_regularized

RESULTS = []


def report(tag, title, ok, detail):
    line = f"[{tag}] {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def test_ac01_median_equivalence():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(500):
        N = 2 * int(rng.integers(0, 40)) + 1
        y = rng.standard_cauchy(N) * rng.uniform(0.1, 100)
        theta = solve_l1(Dataset(np.ones((1, N)), y)).theta[0]
        bad += abs(theta - np.median(y)) > 1e-9
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 5.0
    assert report("AC-01", "median equivalence", ok, f"{500 - bad}/500 within 1e-9 in {dt:.2f} s (limit 5 s)")


@pytest.mark.slow
def test_ac02_static_recovery_curve():
    t0 = time.perf_counter()
    t = run_experiment(default_config("static_linear", fractions=(0.2, 0.5), trials=50, seed=2))
    dt = time.perf_counter() - t0
    p02, p05 = t.column("recovery_probability")
    ok = p02 >= 0.95 and p05 >= 0.9 and dt < 180
    assert report("AC-02", "static recovery n=4 N=200", ok,
                  f"P(0.2)={p02:.2f} (>=0.95), P(0.5)={p05:.2f} (>=0.9), {dt:.1f} s")


@pytest.mark.slow
def test_ac03_affine_same_sign_ceiling():
    t0 = time.perf_counter()
    t = run_experiment(default_config("static_affine_positive", fractions=(0.6,), trials=50, seed=3))
    dt = time.perf_counter() - t0
    p = t.column("recovery_probability")[0]
    ok = p <= 0.1 and dt < 180
    assert report("AC-03", "affine all-positive outliers at 0.6", ok, f"P={p:.2f} (<=0.1), {dt:.1f} s")


def test_ac04_certificate_soundness():
    rng = np.random.default_rng(404)
    fractions = (0.0, 0.2, 0.4, 0.6)
    solver_ok = 0
    confirmed = 0
    for i in range(200):
        n = int(rng.integers(1, 5))
        N = int(rng.integers(4 * n + 4, 60))
        ds = generate(GenSpec(n=n, N=N, outlier_fraction=fractions[i % 4], seed=int(rng.integers(2**63))))
        est = solve_l1(ds)
        solver_ok += check_optimal(ds, est.theta, tol=1e-8).optimal
        theta = ds.truth.theta0 + rng.standard_normal(n) * 10 ** rng.uniform(-3, 0)
        worse = l1_objective(ds, theta) > est.objective + 1e-8 * (1 + est.objective)
        verdict = check_optimal(ds, theta, tol=1e-8).optimal
        confirmed += worse and not verdict
    ok = solver_ok == 200 and confirmed == 200
    assert report("AC-04", "certificate soundness", ok,
                  f"solver output certified {solver_ok}/200; perturbations rejected and confirmed worse {confirmed}/200")


def test_ac05_l0_l1_equivalence():
    rng = np.random.default_rng(505)
    good = count = 0
    while count < 100:
        n = int(rng.integers(1, 4))
        N = int(rng.integers(n + 2, 13))
        X = rng.standard_normal((n, N))
        k = math.ceil(1 / (2 * r_value(X))) - 1     # largest count with N - k > threshold
        if k < 1:
            continue
        theta0 = rng.standard_normal(n)
        f = np.zeros(N)
        f[rng.choice(N, k, replace=False)] = rng.normal(100, math.sqrt(1000), k)
        ds = Dataset(X, X.T @ theta0 + f)
        assert N - k > sufficient_threshold_r(X)
        l0 = l0_brute_force(ds)
        est = solve_l1(ds)
        good += (len(l0.minimizers) == 1 and np.linalg.norm(l0.minimizers[0] - theta0) <= 1e-6
                 and np.linalg.norm(est.theta - theta0) <= 1e-5)
        count += 1
    assert report("AC-05", "l0/l1 equivalence above the r threshold", good == 100, f"{good}/100 instances")


def _full_rank_instances():
    rng = np.random.default_rng(606)
    out = []
    while len(out) < 200:
        n = int(rng.integers(1, 5))
        N = int(rng.integers(n + 1, 16))
        X = rng.standard_normal((n, N))
        if len(out) % 5 == 0 and N > n + 1:
            X[:, -1] = 1.5 * X[:, 0]
        if np.linalg.matrix_rank(X) == n:
            out.append(X)
    return out


def test_ac06a_genericity_inequality():
    viol = 0
    for X in _full_rank_instances():
        g = genericity_index(X)
        assert g.exactness == "exact"
        viol += 1 / r_value(X) > X.shape[1] - g.nu_n + 1 + 1e-9
    assert report("AC-06a", "1/r <= N - nu + 1", viol == 0, f"{viol} violations / 200")


@pytest.mark.xfail(strict=True, reason="the stated k2 inequality is false for non-integer N - 1/(2r); "
                   "see the decisions ledger and test_k2_ceiling_form")
def test_ac06b_k2_inequality():
    viol = 0
    example = None
    for X in _full_rank_instances():
        N = X.shape[1]
        thr = N - 1 / (2 * r_value(X))
        k2 = k2_value(X)
        if thr < k2 - 1e-9:
            viol += 1
            example = example or (X.shape, k2, thr)
    detail = f"{viol} violations / 200"
    if example:
        detail += f"; e.g. shape {example[0]}: k2={example[1]} > {example[2]:.3f}"
    assert report("AC-06b", "N - 1/(2r) >= k2", viol == 0, detail)


def test_k2_ceiling_form():
    viol = 0
    for X in _full_rank_instances():
        viol += k2_value(X) > math.ceil(X.shape[1] - 1 / (2 * r_value(X)) - 1e-12)
    assert report("AC-06c", "supplementary: k2 <= ceil(N - 1/(2r))", viol == 0, f"{viol} violations / 200")


def test_ac07_regularized_kkt_and_closed_form():
    rng = np.random.default_rng(707)
    kkt = match = 0
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 4))
        N = int(rng.integers(n + 1, 9))
        X = rng.standard_normal((n, N))
        f = np.zeros(N)
        k = int(rng.integers(0, N - n + 1))
        f[rng.choice(N, k, replace=False)] = rng.normal(0, 10, k)
        y = X.T @ rng.standard_normal(n) + f + rng.normal(0, 0.1, N)
        lam = float(rng.uniform(0.05, 2.0))
        ds = Dataset(X, y)
        sol = solve_regularized(ds, lam)
        kkt += check_regularized_kkt(ds, lam, sol, 1e-7)
        best, _, _ = oracles.regularized_enumeration(X, y, lam)
        gap = oracles.regularized_objective(X, y, lam, sol.theta, sol.phi) - best
        worst = max(worst, gap)
        match += gap <= 1e-6
    ok = kkt == 100 and match == 100
    assert report("AC-07", "regularized KKT and closed-form optimum", ok,
                  f"KKT {kkt}/100, objective within 1e-6 {match}/100 (worst gap {worst:.1e})")


def test_ac08_error_bound_validity():
    rng = np.random.default_rng(808)
    viol = uniq = 0
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 4))
        N = int(rng.integers(n + 2, 13))
        X = rng.standard_normal((n, N))
        theta0 = rng.standard_normal(n)
        f = np.zeros(N)
        k = int(rng.integers(0, (N - n) // 2 + 1))
        out = rng.choice(N, k, replace=False)
        f[out] = rng.normal(0, 10, k)
        e = rng.uniform(-0.1, 0.1, N)
        ds = Dataset(X, X.T @ theta0 + f + e, Truth(theta0, f, e))
        lam = 0.1
        sol = solve_regularized(ds, lam)
        uniq += check_regularized_unique(ds, sol)
        c = error_bound_constants(X)
        assert c.exactness == "exact"
        bound = evaluate_error_bound(c.K1, c.K2, c.J, np.abs(e).max(), np.abs(f).max(), lam, out)
        err = np.linalg.norm(sol.theta - theta0)
        viol += err > bound
        worst = max(worst, err / bound)
    assert report("AC-08", "regularized error bound", viol == 0,
                  f"{viol} violations / 50 (unique solutions {uniq}/50, max error/bound {worst:.3f})")


@pytest.mark.slow
def test_ac09_noisy_curve():
    t0 = time.perf_counter()
    cfg = default_config("noisy_static", fractions=(0.0, 0.1, 0.2, 0.3, 0.4, 0.5), trials=50, lam=0.10, seed=9)
    t = run_experiment(cfg)
    dt = time.perf_counter() - t0
    l1 = np.array(t.column("l1_relative_error"))
    reg = np.array(t.column("regularized_relative_error"))
    orc = np.array(t.column("oracle_relative_error"))
    d_reg = float(np.abs(l1 - reg).max())
    d_orc = float(np.abs(l1 - orc).max())
    ok = d_reg <= 0.05 and d_orc <= 0.1 and dt < 300
    assert report("AC-09", "noisy error curve at 20 dB", ok,
                  f"max |l1-reg|={d_reg:.4f} (<=0.05), max |l1-oracle|={d_orc:.4f} (<=0.1), {dt:.1f} s")


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="with the default delta the plain l1 vertex stays optimal for every "
                   "reweighted problem and l1 already recovers at 0.3; see the decisions ledger and "
                   "test_reweighting_gain_with_larger_delta")
def test_ac10_reweighting_gain():
    t = run_experiment(default_config("arx_reweighted", fractions=(0.3,), trials=50, seed=10))
    p_rw = t.column("recovery_probability")[0]
    p_l1 = t.column("l1_recovery_probability")[0]
    assert report("AC-10", "reweighting gain, ARX 2/2 at 0.3", p_rw > p_l1,
                  f"reweighted {p_rw:.2f} vs plain l1 {p_l1:.2f} (needs strictly greater)")


@pytest.mark.slow
def test_reweighting_gain_with_larger_delta():
    t = run_experiment(default_config("arx_reweighted", fractions=(0.5,), trials=50, delta=20.0, seed=0))
    p_rw = t.column("recovery_probability")[0]
    p_l1 = t.column("l1_recovery_probability")[0]
    assert report("AC-10s", "supplementary: reweighting gain at 0.5 with delta=20", p_rw > p_l1,
                  f"reweighted {p_rw:.2f} vs plain l1 {p_l1:.2f}")


@pytest.mark.slow
def test_ac11_bound_ordering():
    t = run_experiment(default_config("bound_comparison", sizes=(50, 100, 200, 400), trials=20, seed=11))
    rn_ge_r = all(r["static_rn_count"] >= r["static_r_count"] for r in t.rows)
    arx_le = all(r[f"arx_{b}_count"] <= r[f"static_{b}_count"] for r in t.rows for b in ("r", "rn", "coherence"))
    last = t.rows[-1]
    detail = (f"rn>=r at every N: {rn_ge_r}; arx<=static for all three bounds: {arx_le} "
              f"(N=400: static r/rn {last['static_r_count']:.1f}/{last['static_rn_count']:.1f}, "
              f"arx r/rn {last['arx_r_count']:.1f}/{last['arx_rn_count']:.1f})")
    assert report("AC-11", "bound comparison ordering", rn_ge_r and arx_le, detail)


@pytest.mark.slow
def test_ac12_multivariable_reduction():
    fr = (0.0, 0.2, 0.4, 0.6, 0.8)
    base = default_config("static_linear", fractions=fr, trials=20, seed=12)
    son = default_config("multivariable", fractions=fr, trials=20, seed=12, m=1, gen=base.gen,
                         seed_label="static_linear")
    p_l1 = [float(v) for v in run_experiment(base).column("recovery_probability")]
    p_son = [float(v) for v in run_experiment(son).column("recovery_probability")]
    rng = np.random.default_rng(1212)
    a0 = rng.standard_normal(3)
    P = np.vstack([np.tile(a0, (12, 1)), rng.normal(0, 20, (8, 3))])   # 60% coincident
    gm_err = float(np.linalg.norm(geometric_median(P) - a0))
    ok = p_l1 == p_son and gm_err <= 1e-6
    assert report("AC-12", "multivariable reduction", ok,
                  f"m=1 curve {p_son} vs l1 {p_l1}; geometric median error {gm_err:.1e}")


@pytest.mark.slow
def test_ac13_asymptotic_consistency():
    t = run_experiment(default_config("asymptotic_consistency", seed=13))
    sym = [float(v) for v in t.column("symmetric_mean_error")]
    rel = [float(v) for v in t.column("symmetric_relative_error")]
    asym = [float(v) for v in t.column("asymmetric_relative_error")]
    mono = all(b < a for a, b in zip(sym, sym[1:]))
    ok = mono and rel[-1] <= 0.05 and asym[-1] > 0.05
    assert report("AC-13", "asymptotic consistency with 90% symmetric outliers", ok,
                  f"mean errors {[round(v, 4) for v in sym]} (monotone: {mono}); relative at N=2000 "
                  f"{rel[-1]:.4f} (<=0.05); asymmetric control {asym[-1]:.2f}")
