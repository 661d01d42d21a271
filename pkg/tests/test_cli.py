import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from robustl1.cli import dispatch, read_dataset, write_dataset
from robustl1.datamodel import Dataset, GenSpec, generate

DATA = Path(__file__).parent / "data"


def run(*argv):
    return dispatch([str(a) for a in argv])


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


@pytest.fixture
def clean(tmp_path):
    spec = write_json(tmp_path / "spec.json", {"n": 3, "N": 40, "seed": 17})
    out = tmp_path / "data.csv"
    assert run("generate", "--spec", spec, "--out", out) == 0
    return out


def test_round_trip_clean(clean, tmp_path):
    est = tmp_path / "est.json"
    assert run("estimate", "--data", clean, "--out", est) == 0
    e = json.loads(est.read_text())
    assert e["schema_version"] == 1 and e["certificate"]["optimal"] is True
    assert e["error_to_truth"] <= 1e-8
    cert = tmp_path / "cert.json"
    assert run("certify", "--data", clean, "--theta", est, "--out", cert) == 0
    c = json.loads(cert.read_text())
    assert c["optimal"] is True and c["unique"] is True
    theta0 = np.loadtxt(clean.with_name("data.theta0.csv"))
    assert np.linalg.norm(np.array(e["theta"]) - theta0) <= 1e-8


def test_certify_perturbed_is_data_not_error(clean, tmp_path):
    theta0 = np.loadtxt(clean.with_name("data.theta0.csv"), ndmin=1)
    th = write_json(tmp_path / "th.json", {"theta": (theta0 + [0.1, 0, 0]).tolist()})
    out = tmp_path / "cert.json"
    assert run("certify", "--data", clean, "--theta", th, "--out", out) == 0
    assert json.loads(out.read_text())["optimal"] is False


@pytest.mark.parametrize("method,extra", [("reweighted", ["--rmax", "2"]), ("regularized", ["--lambda", "0.1"]),
                                          ("sum-of-norms", [])])
def test_estimate_methods(clean, tmp_path, method, extra):
    out = tmp_path / "e.json"
    assert run("estimate", "--data", clean, "--method", method, *extra, "--out", out) == 0
    d = json.loads(out.read_text())
    assert d["method"] == method and d["invocation"]["argv"][1] == "estimate"


def test_bounds_fixture_cap_behaviour(tmp_path):
    out = tmp_path / "b.json"
    assert run("bounds", "--data", DATA / "bounds_4x30.csv", "--exact-cap", "15", "--out", out) == 0
    b = json.loads(out.read_text())
    assert b["nu_n"] == 4 and b["exactness"]["nu_n"] == "exact"
    assert b["k1"] is None and b["exactness"]["k1"] == "absent"
    assert b["k2"] == 29 and b["exactness"]["k2"] == "exact"
    assert run("bounds", "--data", DATA / "bounds_4x30.csv", "--require-exact", "--out", out) == 4


def test_exit_codes(clean, tmp_path, capsys):
    assert run("estimate", "--data", tmp_path / "missing.csv", "--out", tmp_path / "o.json") == 2
    assert run("frobnicate") == 2
    assert run("estimate", "--data", clean, "--method", "regularized", "--out", tmp_path / "o.json") == 2
    bad = tmp_path / "bad.csv"
    write_dataset(bad, Dataset(np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]), np.zeros(3)))
    assert run("estimate", "--data", bad, "--out", tmp_path / "o.json") == 3
    err = capsys.readouterr().err.strip().splitlines()
    assert err and all(line.startswith("robustl1:") for line in err if line.startswith("robustl1"))


def test_experiment_outputs_embed_invocation(tmp_path):
    cfg = {"scenario": "static_linear", "gen": {"n": 2, "N": 30}, "fractions": [0.0, 0.4], "trials": 3}
    path = write_json(tmp_path / "exp.json", cfg)
    csv_out, json_out = tmp_path / "t.csv", tmp_path / "t.json"
    assert run("experiment", "--config", path, "--out", csv_out) == 0
    lines = csv_out.read_text().splitlines()
    assert lines[0].startswith("# invocation:") and lines[1].startswith("# metadata:")
    assert lines[2].split(",")[:2] == ["x", "recovery_probability"]
    assert run("experiment", "--config", path, "--out", json_out, "--workers", "2") == 0
    d = json.loads(json_out.read_text())
    assert d["invocation"]["argv"][-1] == "2" and d["rows"][0]["recovery_probability"] == 1.0
    bad = write_json(tmp_path / "bad.json", {**cfg, "trials": 0})
    assert run("experiment", "--config", bad, "--out", csv_out) == 2


def test_dataset_csv_round_trip(tmp_path):
    ds = generate(GenSpec(n=3, N=12, outlier_fraction=0.25, seed=2))
    write_dataset(tmp_path / "d.csv", ds)
    back = read_dataset(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.regressors, ds.regressors)
    np.testing.assert_array_equal(back.outputs, ds.outputs)
    np.testing.assert_array_equal(back.truth.gross, ds.truth.gross)


def test_multi_output_generate_estimate(tmp_path):
    spec = write_json(tmp_path / "spec.json", {"n": 2, "N": 30, "outlier_fraction": 0.3, "seed": 1})
    data = tmp_path / "m.csv"
    assert run("generate", "--spec", spec, "--m", "2", "--out", data) == 0
    out = tmp_path / "e.json"
    assert run("estimate", "--data", data, "--method", "sum-of-norms", "--out", out) == 0
    assert json.loads(out.read_text())["certificate"]["optimal"] is True
    assert run("estimate", "--data", data, "--out", out) == 2


def test_console_entry_point(clean, tmp_path):
    out = tmp_path / "b.json"
    proc = subprocess.run([sys.executable, "-m", "robustl1.cli", "bounds", "--data", str(clean), "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(out.read_text())["invocation"]["argv"][1] == "bounds"
