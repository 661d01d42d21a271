import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from robustl1.datamodel import Dataset, Truth

settings.register_profile(
    "robustl1",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("robustl1")


def make_dataset(X, theta0, f=None):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    theta0 = np.asarray(theta0, dtype=float)
    N = X.shape[1]
    f = np.zeros(N) if f is None else np.asarray(f, dtype=float)
    y = X.T @ theta0 + f
    return Dataset(X, y, Truth(theta0, f, np.zeros(N)))


def l1_objective(ds, theta):
    return float(np.abs(ds.outputs - ds.regressors.T @ np.asarray(theta, dtype=float)).sum())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
