import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from robustl1.bounds import (
    bounds_report, coherence_bound, error_bound_constants, evaluate_error_bound, genericity_index,
    k1_value, k2_value, l0_brute_force, mutual_coherence, r_value, rn_value, sufficient_threshold_r,
    v1_value, v2_value, v2_value_enumerated,
)
from robustl1.datamodel import Dataset, GenSpec, generate
from robustl1.errors import CapExceededError, CoherenceUndefinedError, RankDeficientError

FIXTURE = np.array([[1, 0, 1, -1], [0, 1, 1, 1.0]])
# entries rounded to 3 decimals from default_rng(20240607).standard_normal((2, 8))
X28 = np.array([[-0.086, -0.429, -2.873, 3.245, 0.147, 1.312, 0.351, -0.72],
                [0.817, -2.118, 0.294, 0.564, -0.979, -1.001, 0.572, 0.592]])


def random_X(rng, n, N, degenerate=False):
    X = rng.standard_normal((n, N))
    if degenerate and N > n + 1:
        X[:, -1] = 2.0 * X[:, 0]
    return X


def test_genericity_examples():
    assert genericity_index(np.eye(3)).nu_n == 3
    assert genericity_index(np.array([[1, 0, 1], [0, 1, 1.0]])).nu_n == 2
    assert genericity_index(np.array([[1, 0, 1], [0, 1, 0.0]])).nu_n == 3
    r = genericity_index(np.array([[1, 0, 1], [0, 1, 0.0]]), method="subsets")
    assert r.nu_n == 3 and r.exactness == "exact"


def test_genericity_cap_and_sampled():
    X = np.random.default_rng(0).standard_normal((3, 30))
    with pytest.raises(CapExceededError):
        genericity_index(X, method="subsets")
    s = genericity_index(X, mode="sampled", trials=200)
    assert s.exactness == "sampled_lower_bound"
    assert 3 <= s.nu_n <= genericity_index(X).nu_n


@given(st.integers(1, 3), st.integers(2, 9), st.booleans(), st.integers(0, 2**32))
def test_genericity_matches_oracle(n, extra, degenerate, seed):
    X = random_X(np.random.default_rng(seed), n, n + extra, degenerate)
    assert genericity_index(X).nu_n == oracles.genericity(X)
    assert genericity_index(X, method="subsets").nu_n == oracles.genericity(X)


def test_r_examples():
    assert r_value(np.eye(3)) == pytest.approx(1.0)
    assert rn_value(np.eye(3)) == pytest.approx(1.0)
    assert r_value(np.array([[1, 1, 0], [0, 1, 1.0]])) == pytest.approx(2 / 3, abs=1e-15)
    assert sufficient_threshold_r(np.eye(4)) == pytest.approx(3.5)
    with pytest.raises(RankDeficientError):
        r_value(np.array([[1, 2, 3], [2, 4, 6.0]]))


@given(st.integers(1, 4), st.integers(1, 20), st.integers(0, 2**32))
def test_r_range_and_invariance(n, extra, seed):
    rng = np.random.default_rng(seed)
    N = n + extra
    X = rng.standard_normal((n, N))
    r = r_value(X)
    assert n / N - 1e-12 <= r <= 1 + 1e-12
    T = rng.standard_normal((n, n)) + 3 * np.eye(n)
    assert r_value(T @ X) == pytest.approx(r, abs=1e-10)
    assert rn_value(T @ X) == pytest.approx(rn_value(X), abs=1e-10)
    assert sufficient_threshold_r(X) < N


def test_projection_identities():
    X = np.random.default_rng(1).standard_normal((3, 12))
    Psi = np.eye(12) - oracles.projection(X)
    np.testing.assert_allclose(Psi @ Psi, Psi, atol=1e-10)
    np.testing.assert_allclose(Psi, Psi.T, atol=1e-12)
    np.testing.assert_allclose(Psi @ X.T, 0, atol=1e-10)


def test_coherence():
    with pytest.raises(CoherenceUndefinedError):
        coherence_bound(np.eye(3))
    X = np.array([[1.0, 1.0, 0.3, -2.0], [0.0, 0.0, 1.0, 0.5]])
    assert mutual_coherence(X) == pytest.approx(1.0)
    assert coherence_bound(X) == pytest.approx(1.0)
    X = np.random.default_rng(7).standard_normal((3, 20))
    mu = oracles.coherence(X)
    assert mutual_coherence(X) == pytest.approx(mu, rel=1e-12)
    assert coherence_bound(X) == pytest.approx(0.5 * (1 + 1 / mu), rel=1e-12)


def test_v_k_fixture():
    assert k1_value(FIXTURE) == 3
    assert k2_value(FIXTURE) == 4
    np.testing.assert_allclose([v2_value(FIXTURE, k) for k in range(5)], [4 / 3, 4 / 3, 1, 2 / 3, 0], atol=1e-14)
    assert v1_value(FIXTURE, 2) == pytest.approx(3.0)
    assert v1_value(FIXTURE, 3) == pytest.approx(1.0)


def test_v_k_identity():
    for n in (2, 3, 4):
        assert k1_value(np.eye(n)) == n
        assert k2_value(np.eye(n)) == n


def test_v1_below_genericity_rejected():
    with pytest.raises(ValueError):
        v1_value(FIXTURE, 1)


@given(st.integers(1, 3), st.integers(1, 6), st.booleans(), st.integers(0, 2**32))
def test_thresholds_match_partition_oracle(n, extra, degenerate, seed):
    X = random_X(np.random.default_rng(seed), n, n + extra, degenerate)
    assert k1_value(X) == oracles.k1(X)
    assert k2_value(X) == oracles.k2(X)
    for k in range(X.shape[1] + 1):
        assert v2_value(X, k) == pytest.approx(oracles.v2(X, k), rel=1e-10, abs=1e-12)
        assert v2_value_enumerated(X, k) == pytest.approx(v2_value(X, k), rel=1e-10, abs=1e-12)


@given(st.integers(1, 3), st.integers(1, 10), st.integers(0, 2**32))
def test_v2_nonincreasing(n, extra, seed):
    X = np.random.default_rng(seed).standard_normal((n, n + extra))
    v = [v2_value(X, k) for k in range(n + extra + 1)]
    assert all(b <= a + 1e-12 for a, b in zip(v, v[1:]))


def test_thresholds_left_invariant():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((2, 9))
    T = np.array([[2.0, 1.0], [-0.5, 3.0]])
    assert k1_value(T @ X) == k1_value(X)
    assert k2_value(T @ X) == k2_value(X)
    assert genericity_index(T @ X).nu_n == genericity_index(X).nu_n


def test_k1_cap():
    with pytest.raises(CapExceededError):
        k1_value(np.random.default_rng(0).standard_normal((2, 20)))
    assert k2_value(np.random.default_rng(0).standard_normal((2, 60))) <= 60


def test_error_constants_identity_and_frozen():
    c = error_bound_constants(np.eye(3))
    assert c.K1 == pytest.approx(np.sqrt(3)) and c.K2 == pytest.approx(np.sqrt(3))
    assert c.J == (0, 1, 2)
    c = error_bound_constants(X28)
    # frozen from the independent subset oracle
    assert c.K1 == pytest.approx(37384397332.32052, rel=1e-7)
    assert c.K2 == pytest.approx(50.65802487084062, rel=1e-9)
    assert c.J == (0, 4)


def test_error_constants_dominate_members():
    X = np.random.default_rng(3).standard_normal((2, 7))
    c = error_bound_constants(X)
    nu = genericity_index(X).nu_n
    J = list(range(nu))
    val = np.sqrt(nu) * np.linalg.norm(np.linalg.solve(X @ X.T, X[:, J]), 2)
    assert c.K1 >= val - 1e-9


@given(st.integers(1, 2), st.integers(1, 5), st.integers(0, 2**32))
def test_error_constants_match_oracle(n, extra, seed):
    X = np.random.default_rng(seed).standard_normal((n, n + extra))
    c = error_bound_constants(X)
    K1, K2, J = oracles.error_constants(X)
    assert c.K1 == pytest.approx(K1, rel=1e-6)
    assert c.K2 == pytest.approx(K2, rel=1e-6)


def test_evaluate_error_bound():
    assert evaluate_error_bound(2.0, 3.0, (0, 1), 0.0, 0.0, 0.1, ()) == pytest.approx(0.3)
    assert evaluate_error_bound(2.0, 3.0, (0, 1), 0.5, 9.0, 0.1, (4, 5)) == pytest.approx(1.3)
    assert evaluate_error_bound(2.0, 3.0, (0, 1), 0.5, 9.0, 0.1, (0, 1)) == pytest.approx(1.3 + 18.0)
    assert evaluate_error_bound(2.0, 3.0, (0, 1, 2, 3), 0.0, 1.0, 0.0, (0,)) == pytest.approx(1.0)


def test_l0_examples():
    ds = generate(GenSpec(n=2, N=10, seed=1))
    res = l0_brute_force(ds)
    assert res.objective == 0 and len(res.minimizers) == 1
    np.testing.assert_allclose(res.minimizers[0], ds.truth.theta0, atol=1e-9)
    two = l0_brute_force(Dataset(np.ones((1, 2)), [0.0, 1.0]))
    assert two.objective == 1
    assert sorted(float(m[0]) for m in two.minimizers) == pytest.approx([0.0, 1.0])
    with pytest.raises(CapExceededError):
        l0_brute_force(generate(GenSpec(n=1, N=25, seed=1)))


@given(st.integers(1, 3), st.integers(4, 11), st.integers(0, 2**32))
def test_l0_matches_oracle_and_unique_with_enough_zeros(n, N, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, N))
    nu = oracles.genericity(X)
    k_out = rng.integers(0, N // 2 + 1)
    f = np.zeros(N)
    f[rng.choice(N, k_out, replace=False)] = rng.normal(0, 10, k_out)
    theta0 = rng.standard_normal(n)
    ds = Dataset(X, X.T @ theta0 + f)
    res = l0_brute_force(ds)
    best, found = oracles.l0_minimizers(X, ds.outputs)
    assert res.objective == best and len(res.minimizers) == len(found)
    if N - k_out >= (N + nu) / 2:
        assert len(res.minimizers) == 1
        np.testing.assert_allclose(res.minimizers[0], theta0, atol=1e-7)


def test_bounds_report_flags():
    X = np.random.default_rng(0).standard_normal((4, 30))
    rep = bounds_report(X, exact_cap=15)
    assert rep.exactness["nu_n"] == "exact"
    assert rep.k1 is None and rep.exactness["k1"] == "absent"
    assert rep.k2 is not None and rep.exactness["k2"] == "exact"
    assert 4 <= rep.nu_n <= 30
    assert rep.threshold_r < 30
    d = rep.to_dict()
    assert set(d) >= {"nu_n", "r", "r_n", "coherence_bound", "threshold_r", "k1", "k2", "exactness"}
    small = bounds_report(FIXTURE)
    assert (small.k1, small.k2) == (3, 4)
