"""Data containers, sign partitions and scenario generators.

The measurement model is ``y_t = x_t' theta0 + f_t + e_t`` with regressors stored
column-wise in an ``n x N`` matrix ``X``.  Indices are 0-based throughout.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError

DEFAULT_PARTITION_TOL = 1e-7
REGRESSOR_KINDS = ("gaussian", "affine_gaussian", "arx", "state_estimation")
SIGN_MODES = ("two_sided", "positive_only")


def _as_matrix(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Truth:
    theta0: np.ndarray
    gross: np.ndarray
    noise: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Regressors ``X`` (n x N), outputs ``y`` (N,), optional ground truth."""

    regressors: np.ndarray
    outputs: np.ndarray
    truth: Optional[Truth] = None
    labels: Optional[tuple] = None

    def __post_init__(self):
        X = _as_matrix(self.regressors, "regressors")
        y = np.asarray(self.outputs, dtype=float).reshape(-1)
        n, N = X.shape
        if n < 1 or N < 1:
            raise DimensionError(f"need n >= 1 and N >= 1, got {X.shape}")
        if y.shape != (N,):
            raise DimensionError(f"outputs has length {y.size}, regressors have {N} columns")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite values")
        if self.truth is not None:
            t = self.truth
            th = np.asarray(t.theta0, dtype=float).reshape(-1)
            f = np.asarray(t.gross, dtype=float).reshape(-1)
            e = np.asarray(t.noise, dtype=float).reshape(-1)
            if th.shape != (n,) or f.shape != (N,) or e.shape != (N,):
                raise DimensionError("truth record shapes do not match the dataset")
            recon = X.T @ th + f + e
            if np.any(np.abs(recon - y) > 1e-12 * np.maximum(1.0, np.abs(y)) * max(1.0, n)):
                raise ValueError("truth record does not reproduce the outputs")
            object.__setattr__(self, "truth", Truth(th, f, e))
        object.__setattr__(self, "regressors", X)
        object.__setattr__(self, "outputs", y)
        X.setflags(write=False)
        y.setflags(write=False)

    @property
    def n(self) -> int:
        return self.regressors.shape[0]

    @property
    def N(self) -> int:
        return self.regressors.shape[1]

    def residuals(self, theta):
        """phi(theta) = y - X' theta."""
        return self.outputs - self.regressors.T @ np.asarray(theta, dtype=float)

    def is_affine(self) -> bool:
        return bool(np.all(self.regressors[-1] == 1.0))


@dataclass(frozen=True)
class MultiTruth:
    A0: np.ndarray
    F: np.ndarray
    E: np.ndarray


@dataclass(frozen=True)
class MultiDataset:
    """Regressors ``X`` (n x N) and outputs ``Y`` (m x N)."""

    regressors: np.ndarray
    outputs: np.ndarray
    truth: Optional[MultiTruth] = None

    def __post_init__(self):
        X = _as_matrix(self.regressors, "regressors")
        Y = _as_matrix(self.outputs, "outputs")
        if Y.shape[1] != X.shape[1]:
            raise DimensionError(f"Y has {Y.shape[1]} columns, X has {X.shape[1]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("dataset contains non-finite values")
        if self.truth is not None:
            A0 = _as_matrix(self.truth.A0, "A0")
            F = _as_matrix(self.truth.F, "F")
            E = _as_matrix(self.truth.E, "E")
            if A0.shape != (Y.shape[0], X.shape[0]) or F.shape != Y.shape or E.shape != Y.shape:
                raise DimensionError("truth record shapes do not match the dataset")
            recon = A0 @ X + F + E
            if np.any(np.abs(recon - Y) > 1e-12 * np.maximum(1.0, np.abs(Y)) * max(1, X.shape[0])):
                raise ValueError("truth record does not reproduce the outputs")
            object.__setattr__(self, "truth", MultiTruth(A0, F, E))
        object.__setattr__(self, "regressors", X)
        object.__setattr__(self, "outputs", Y)

    @property
    def n(self) -> int:
        return self.regressors.shape[0]

    @property
    def m(self) -> int:
        return self.outputs.shape[0]

    @property
    def N(self) -> int:
        return self.regressors.shape[1]

    def residuals(self, A):
        return self.outputs - np.asarray(A, dtype=float) @ self.regressors

    @classmethod
    def from_dataset(cls, ds: Dataset) -> "MultiDataset":
        truth = None
        if ds.truth is not None:
            t = ds.truth
            truth = MultiTruth(t.theta0[None, :], t.gross[None, :], t.noise[None, :])
        return cls(ds.regressors, ds.outputs[None, :], truth)


@dataclass(frozen=True)
class IndexPartition:
    """Sign partition of the sample indices induced by a candidate parameter.

    ``plus`` holds indices with ``x_t' theta - y_t`` above the threshold,
    ``minus`` those below minus the threshold, ``zero`` the rest.
    """

    plus: np.ndarray
    minus: np.ndarray
    zero: np.ndarray
    tol: float

    @property
    def N(self) -> int:
        return self.plus.size + self.minus.size + self.zero.size

    def counts(self):
        return self.plus.size, self.minus.size, self.zero.size


def partition_indices(dataset: Dataset, theta, tol: float = DEFAULT_PARTITION_TOL) -> IndexPartition:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape != (dataset.n,):
        raise DimensionError(f"theta has length {theta.size}, expected {dataset.n}")
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite")
    y = dataset.outputs
    r = dataset.regressors.T @ theta - y
    zero = np.abs(r) <= tol * (1.0 + np.abs(y))
    plus = ~zero & (r > 0)
    minus = ~zero & (r < 0)
    return IndexPartition(np.flatnonzero(plus), np.flatnonzero(minus), np.flatnonzero(zero), float(tol))


def multi_partition(mdataset: MultiDataset, A, tol: float = DEFAULT_PARTITION_TOL):
    """Split columns into (nonzero-residual, zero-residual) index arrays for the matrix model."""
    R = mdataset.residuals(A)
    norms = np.linalg.norm(R, axis=0)
    scale = 1.0 + np.linalg.norm(mdataset.outputs, axis=0)
    zero = norms <= tol * scale
    return np.flatnonzero(~zero), np.flatnonzero(zero)


# ---------------------------------------------------------------------------
# regressor construction and problem reformulations


def _as_series(u, name):
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.ndim != 2:
        raise DimensionError(f"{name} must be a 1-D or (T, channels) array")
    return u


def build_regressor_matrix(outputs, inputs, n_a: int, n_b: int) -> np.ndarray:
    """Stack ARX regressors ``[y_{t-1..t-n_a}, u_t, u_{t-1}, ..., u_{t-n_b}]`` column-wise.

    Columns are emitted for every ``t`` with a full history, i.e. ``t = max(n_a, n_b), ..., T-1``.
    """
    y = np.asarray(outputs, dtype=float).reshape(-1)
    u = _as_series(inputs, "inputs")
    if u.shape[0] != y.size:
        raise DimensionError(f"input has {u.shape[0]} samples, output has {y.size}")
    if n_a < 0 or n_b < 0:
        raise ValueError("lags must be nonnegative")
    start = max(n_a, n_b)
    T = y.size
    if T <= start:
        raise ValueError(f"series of length {T} is too short for lags n_a={n_a}, n_b={n_b}")
    n_u = u.shape[1]
    cols = T - start
    X = np.empty((n_a + n_u * (n_b + 1), cols))
    ts = np.arange(start, T)
    for j in range(1, n_a + 1):
        X[j - 1] = y[ts - j]
    for i in range(n_b + 1):
        X[n_a + i * n_u: n_a + (i + 1) * n_u] = u[ts - i].T
    return X


def sensor_fault_to_equation_error(w, theta0, n_a: int) -> np.ndarray:
    """Equation error induced by an additive sensor fault sequence ``w``."""
    w = np.asarray(w, dtype=float).reshape(-1)
    theta0 = np.asarray(theta0, dtype=float).reshape(-1)
    if n_a > theta0.size:
        raise ValueError(f"n_a={n_a} exceeds the parameter length {theta0.size}")
    f = w.copy()
    for j in range(1, n_a + 1):
        f[j:] -= theta0[j - 1] * w[:-j] if j < w.size else 0.0
    return f


def build_state_estimation_problem(A, B, C, inputs, observed) -> Dataset:
    """Recast finite-horizon initial-state estimation as a linear regression.

    With ``z_{t+1} = A z_t + B u_t`` and ``ytilde_t = C' z_t + f_t``, sample ``t`` (from 0)
    has regressor ``(A^t)' C`` and output ``ytilde_t - C' sum_{j<t} A^{t-1-j} B u_j``.
    The unknown is ``z_0``.
    """
    A = _as_matrix(A, "A")
    k = A.shape[0]
    if A.shape != (k, k):
        raise DimensionError("A must be square")
    C = np.asarray(C, dtype=float).reshape(-1)
    if C.shape != (k,):
        raise DimensionError(f"C must have length {k}")
    yt = np.asarray(observed, dtype=float).reshape(-1)
    N = yt.size
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[0] != k:
        raise DimensionError(f"B must have {k} rows")
    u = _as_series(inputs, "inputs")
    if u.shape[1] != B.shape[1]:
        raise DimensionError(f"inputs have {u.shape[1]} channels, B has {B.shape[1]} columns")
    if u.shape[0] < max(N - 1, 0):
        raise DimensionError("not enough input samples for the horizon")
    X = np.empty((k, N))
    y = np.empty(N)
    At_C = C.copy()          # (A^t)' C
    forced = np.zeros(k)     # sum_{j<t} A^{t-1-j} B u_j
    for t in range(N):
        X[:, t] = At_C
        y[t] = yt[t] - C @ forced
        At_C = A.T @ At_C
        if t < u.shape[0]:
            forced = A @ forced + B @ u[t]
    return Dataset(X, y)


# ---------------------------------------------------------------------------
# generation

@dataclass(frozen=True)
class ARXParams:
    n_a: int
    n_b: int
    n_u: int = 1
    a: Optional[tuple] = None   # output lag coefficients, length n_a
    b: Optional[tuple] = None   # input coefficients for u_t..u_{t-n_b}, length n_u*(n_b+1)

    @property
    def n(self) -> int:
        return self.n_a + self.n_u * (self.n_b + 1)


@dataclass(frozen=True)
class LTIParams:
    A: tuple
    B: tuple
    C: tuple


@dataclass(frozen=True)
class GenSpec:
    n: int
    N: int
    regressor_kind: str = "gaussian"
    outlier_fraction: float = 0.0
    outlier_mean: float = 100.0
    outlier_std: float = math.sqrt(1000.0)
    sign_mode: str = "two_sided"
    noise_snr_db: Optional[float] = None
    seed: int = 0
    arx_params: Optional[ARXParams] = None
    lti_params: Optional[LTIParams] = None

    def __post_init__(self):
        if self.regressor_kind not in REGRESSOR_KINDS:
            raise ValueError(f"unknown regressor_kind {self.regressor_kind!r}")
        if self.sign_mode not in SIGN_MODES:
            raise ValueError(f"unknown sign_mode {self.sign_mode!r}")
        if self.n < 1 or self.N < 1:
            raise ValueError("n and N must be positive")
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise ValueError("outlier_fraction must lie in [0, 1]")
        if self.outlier_fraction > 0 and not self.outlier_std > 0:
            raise ValueError("outlier_std must be positive when outliers are requested")
        if self.regressor_kind == "arx":
            if self.arx_params is None:
                raise ValueError("arx generation needs arx_params")
            if self.arx_params.n != self.n:
                raise ValueError(f"arx regressor dimension is {self.arx_params.n}, spec says n={self.n}")
        if self.regressor_kind == "state_estimation":
            if self.lti_params is None:
                raise ValueError("state_estimation generation needs lti_params")
            if np.asarray(self.lti_params.A).shape[0] != self.n:
                raise ValueError("state dimension must equal n")
        if self.regressor_kind == "affine_gaussian" and self.n < 1:
            raise ValueError("affine models need n >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def outlier_count(self) -> int:
        return round_half_away(self.outlier_fraction * self.N)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GenSpec":
        d = dict(d)
        if d.get("arx_params") is not None:
            p = dict(d["arx_params"])
            for key in ("a", "b"):
                if p.get(key) is not None:
                    p[key] = tuple(float(v) for v in p[key])
            d["arx_params"] = ARXParams(**p)
        if d.get("lti_params") is not None:
            p = d["lti_params"]
            d["lti_params"] = LTIParams(**{k: _freeze(p[k]) for k in ("A", "B", "C")})
        return cls(**d)

    def with_(self, **changes) -> "GenSpec":
        return replace(self, **changes)


def _freeze(a):
    a = np.asarray(a, dtype=float)
    return tuple(map(tuple, a)) if a.ndim == 2 else tuple(a.tolist())


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


# Substream identifiers; each purpose gets its own independent Philox stream so
# that e.g. changing the outlier fraction does not perturb the regressors.
_STREAMS = {"theta": 0, "regressors": 1, "locations": 2, "values": 3, "noise": 4, "system": 5}


def substream(seed: int, purpose: str) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(_STREAMS[purpose],))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(master_seed: int, label: str, *indices: int) -> int:
    """Deterministic 64-bit child seed for (label, indices) under a master seed."""
    key = (zlib.crc32(label.encode()),) + tuple(int(i) for i in indices)
    state = np.random.SeedSequence(int(master_seed), spawn_key=key).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def sample_stable_arx(n_a: int, n_b: int, n_u: int, rng, radius: float = 0.95, max_tries: int = 10000):
    """Random ARX coefficients with the output polynomial's spectral radius below ``radius``."""
    for _ in range(max_tries):
        a = rng.uniform(-1.0, 1.0, size=n_a)
        if n_a == 0 or _spectral_radius(a) < radius:
            b = rng.standard_normal(n_u * (n_b + 1))
            return a, b
    raise RuntimeError("could not sample a stable ARX system")


def _spectral_radius(a):
    n_a = a.size
    comp = np.zeros((n_a, n_a))
    comp[0] = a
    comp[1:, :-1] = np.eye(n_a - 1)
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def _simulate_arx(a, b, u, fe, n_a, n_b):
    n_u = u.shape[1]
    T = u.shape[0]
    y = np.zeros(T)
    B = b.reshape(n_b + 1, n_u)
    for t in range(T):
        acc = fe[t]
        for j in range(1, n_a + 1):
            if t - j >= 0:
                acc += a[j - 1] * y[t - j]
        for i in range(n_b + 1):
            if t - i >= 0:
                acc += B[i] @ u[t - i]
        y[t] = acc
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("ARX recursion produced non-finite values")
    return y


def _gross_errors(spec: GenSpec, m: int) -> np.ndarray:
    F = np.zeros((m, spec.N))
    k = spec.outlier_count
    if k == 0:
        return F
    loc = substream(spec.seed, "locations").choice(spec.N, size=k, replace=False)
    vals = substream(spec.seed, "values").normal(spec.outlier_mean, spec.outlier_std, size=(k, m))
    if spec.sign_mode == "positive_only":
        vals = np.abs(vals)
    F[:, loc] = vals.T
    return F


def _noise_std(spec: GenSpec, clean_signal) -> float:
    if spec.noise_snr_db is None:
        return 0.0
    power = float(np.mean(np.square(clean_signal)))
    return math.sqrt(power / 10.0 ** (spec.noise_snr_db / 10.0))


def _generate_static(spec: GenSpec, m: int):
    rng_x = substream(spec.seed, "regressors")
    n, N = spec.n, spec.N
    if spec.regressor_kind == "gaussian":
        X = rng_x.standard_normal((n, N))
    else:
        X = np.vstack([rng_x.standard_normal((n - 1, N)), np.ones((1, N))])
    A0 = substream(spec.seed, "theta").standard_normal((m, n))
    F = _gross_errors(spec, m)
    clean = A0 @ X
    E = _noise_std(spec, clean) * substream(spec.seed, "noise").standard_normal((m, N))
    return X, A0, F, E


def _generate_arx(spec: GenSpec):
    p = spec.arx_params
    burn = max(p.n_a, p.n_b)
    T = spec.N + burn
    if p.a is None or p.b is None:
        a, b = sample_stable_arx(p.n_a, p.n_b, p.n_u, substream(spec.seed, "system"))
        a = np.asarray(p.a, dtype=float) if p.a is not None else a
        b = np.asarray(p.b, dtype=float) if p.b is not None else b
    else:
        a, b = np.asarray(p.a, dtype=float), np.asarray(p.b, dtype=float)
    if a.size != p.n_a or b.size != p.n_u * (p.n_b + 1):
        raise ValueError("ARX coefficient vectors have the wrong length")
    theta0 = np.concatenate([a, b])
    u = substream(spec.seed, "regressors").standard_normal((T, p.n_u))
    f = np.zeros(T)
    f[burn:] = _gross_errors(spec, 1)[0]
    e = np.zeros(T)
    if spec.noise_snr_db is not None:
        y_clean = _simulate_arx(a, b, u, np.zeros(T), p.n_a, p.n_b)
        sigma = _noise_std(spec, y_clean[burn:])
        e[burn:] = sigma * substream(spec.seed, "noise").standard_normal(spec.N)
    y = _simulate_arx(a, b, u, f + e, p.n_a, p.n_b)
    X = build_regressor_matrix(y, u, p.n_a, p.n_b)
    yt = y[burn:]
    # re-derive the noise so the truth identity holds to rounding of the recursion
    return Dataset(X, yt, Truth(theta0, f[burn:], yt - X.T @ theta0 - f[burn:]))


def _generate_state_estimation(spec: GenSpec):
    p = spec.lti_params
    A = np.asarray(p.A, dtype=float)
    B = np.asarray(p.B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    C = np.asarray(p.C, dtype=float).reshape(-1)
    k, N = A.shape[0], spec.N
    z0 = substream(spec.seed, "theta").standard_normal(k)
    u = substream(spec.seed, "regressors").standard_normal((N, B.shape[1]))
    z = z0.copy()
    clean = np.empty(N)
    for t in range(N):
        clean[t] = C @ z
        z = A @ z + B @ u[t]
    f = _gross_errors(spec, 1)[0]
    x_part = build_state_estimation_problem(A, B, C, u, clean)
    e = _noise_std(spec, x_part.regressors.T @ z0) * substream(spec.seed, "noise").standard_normal(N)
    ds = build_state_estimation_problem(A, B, C, u, clean + f + e)
    return Dataset(ds.regressors, ds.outputs, Truth(z0, f, ds.outputs - ds.regressors.T @ z0 - f))


def generate(spec: GenSpec) -> Dataset:
    """Draw one dataset for ``spec``; bitwise reproducible for a fixed seed."""
    if spec.regressor_kind == "arx":
        return _generate_arx(spec)
    if spec.regressor_kind == "state_estimation":
        return _generate_state_estimation(spec)
    X, A0, F, E = _generate_static(spec, 1)
    y = A0[0] @ X + F[0] + E[0]
    return Dataset(X, y, Truth(A0[0], F[0], E[0]))


def generate_multi(spec: GenSpec, m: int) -> MultiDataset:
    """Multivariable analogue of :func:`generate`: whole columns ``f_t`` are corrupted.

    For ``m = 1`` the draw coincides with :func:`generate` for the static kinds.
    """
    if spec.regressor_kind not in ("gaussian", "affine_gaussian"):
        raise ValueError("multivariable generation supports static regressor kinds only")
    X, A0, F, E = _generate_static(spec, m)
    return MultiDataset(X, A0 @ X + F + E, MultiTruth(A0, F, E))
