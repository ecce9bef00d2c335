import json
import math
import os
import subprocess

import numpy as np
import pytest

import geobias


def test_version():
    assert geobias.__version__.count(".") == 2


def test_spearman_brown_and_alpha():
    assert 0.61 <= geobias.spearman_brown(0.98, 576, 20) <= 0.65
    rng = np.random.default_rng(1)
    f = rng.normal(size=(100, 1))
    x = f + rng.normal(size=(100, 5))
    k = x.shape[1]
    expected = k / (k - 1) * (1 - x.var(axis=0, ddof=1).sum() / x.sum(axis=1).var(ddof=1))
    assert geobias.cronbach_alpha(x) == pytest.approx(expected, rel=1e-12)


def test_ols_matches_numpy():
    rng = np.random.default_rng(2)
    x = np.column_stack([np.ones(50), rng.normal(size=(50, 2))])
    y = x @ np.array([1.0, 2.0, -0.5]) + rng.normal(size=50)
    fit = geobias.ols_fit(x, y, ["const", "a", "b"])
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    got = [c["coef"] for c in fit["coefficients"]]
    assert np.allclose(got, beta, rtol=1e-10, atol=1e-12)
    assert fit["n"] == 50 and fit["dof"] == 47


def test_errors_map_to_python():
    with pytest.raises(ValueError):
        geobias.ols_fit(np.ones((2, 2)), np.ones(2), ["a", "b"])
    with pytest.raises(ArithmeticError):
        geobias.ols_fit(np.ones((5, 2)), np.arange(5.0), ["a", "b"])


def test_factor_recovery():
    rng = np.random.default_rng(3)
    l = rng.uniform(0.5, 2.0, size=20)
    x = rng.normal(size=(150, 1)) * l + 0.25 * rng.normal(size=(150, 20))
    sol = geobias.principal_factors(x, 1)
    assert abs(np.corrcoef(sol["raw_loadings"][:, 0], l)[0, 1]) > 0.98
    assert sol["eigenvalues"][0] > 5 * sol["eigenvalues"][1]


def test_geometry():
    assert geobias.haversine_miles(0, 0, 0, 1) == pytest.approx(3958.8 * math.pi / 180)
    square = [(0, 0), (0, 1), (1, 1), (1, 0)]
    assert geobias.boundary_distance_degrees(0.5, 0.5, square) == 0.0
    assert geobias.boundary_distance_degrees(0.5, 2.0, square) == pytest.approx(1.0)


def test_synth_pipeline_round_trip(tmp_path):
    cfg = {"n_users": 2000, "seed": 5, "grid": {"rows": 6, "cols": 6}, "usage_beta": 0.02}
    m = geobias.synth(cfg, tmp_path / "in")
    assert m["seed"] == 5
    scores = geobias.composite_dci(str(tmp_path / "in" / "dci_metrics.csv"))
    assert sorted(scores.values()) == pytest.approx([100 * i / 35 for i in range(36)])
    p = geobias.pipeline(tmp_path / "in", tmp_path / "out")
    assert p["subcommand"] == "pipeline"
    header = (tmp_path / "out" / "audit" / "bin_summary.csv").read_text().splitlines()[0]
    assert "geo_mean_error" in header
    with pytest.raises(ValueError):
        geobias.synth({"n_users": 10, "bogus": 1}, tmp_path / "bad")


def test_run_exit_codes(tmp_path):
    assert geobias.run(["reconcile", "--out-dir", str(tmp_path)]) == 1
    assert geobias.run(["reconcile", "--users", str(tmp_path / "none.csv"), "--out-dir", str(tmp_path)]) == 2


@pytest.mark.skipif("GEOBIAS_CLI" not in os.environ, reason="CLI path not provided")
def test_cli_binary(tmp_path):
    cli = os.environ["GEOBIAS_CLI"]
    (tmp_path / "cfg.json").write_text(json.dumps({"n_users": 500, "seed": 1}))
    subprocess.run([cli, "synth", "--config", str(tmp_path / "cfg.json"), "--out-dir", str(tmp_path / "s")], check=True)
    manifest = json.loads((tmp_path / "s" / "manifest.json").read_text())
    assert manifest["generator"] == "mt19937_64/splitmix64-streams"
    assert subprocess.run([cli, "--version"], capture_output=True).returncode == 0
