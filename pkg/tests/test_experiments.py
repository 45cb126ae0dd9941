#!/usr/bin/env python3
"""
Test suite for configuration, experiment runners, persistence and the CLI.
"""

import sys
import os
import json
import math

# Add the repository root and scripts directory to the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'scripts'))

# Conditional imports to handle missing dependencies
try:
    import pytest
    import numpy as np
    import pandas as pd
    from pydantic import ValidationError
    from isac import cli, experiments
    from isac.config import ExperimentConfig, load_config
    from isac.schemas import RESULT_SCHEMAS, columns_for, validate_table
    import generate_docs
    DEPENDENCIES_AVAILABLE = True
except ImportError:
    pytest = None
    np = None
    pd = None
    DEPENDENCIES_AVAILABLE = False

SMALL = {"M": 16, "N": 8, "l_max": 4, "n_b": 2, "n_i1": 2, "n_i2": 2}


def small_config(kind, **overrides):
    values = dict(SMALL, kind=kind, trials=3, snr_db=[20.0])
    values.update(overrides)
    return ExperimentConfig(**values)


def test_config_defaults():
    """Test that the defaults reproduce the reference setup"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    config = ExperimentConfig()
    assert (config.M, config.N, config.delta_f_hz, config.l_max) == (64, 16, 15e3, 8)
    assert (config.n_b, config.n_i1 * config.n_i2, config.l_ui, config.l_ib) == (4, 64, 4, 4)
    assert (config.t1, config.eps1, config.gamma1, config.snr_db) == (10, 1e-6, 1e-3, [20.0])
    assert config.f_c_hz == 28e9 and config.v_max_kmh == 120.0
    # Check that sigma2 follows x_p^2 / 10^(snr/10)
    assert config.sigma2(10.0) == pytest.approx(0.1)


def test_config_snr_forms():
    """Test scalar, list and range SNR specifications"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    assert ExperimentConfig(snr_db=15).snr_db == [15.0]
    assert ExperimentConfig(snr_db=[5, 10]).snr_db == [5.0, 10.0]
    assert ExperimentConfig(snr_db={"start": 0, "stop": 30, "step": 10}).snr_db == [0.0, 10.0, 20.0, 30.0]
    with pytest.raises(ValidationError):
        ExperimentConfig(snr_db={"start": 0, "stop": 30})
    with pytest.raises(ValidationError):
        ExperimentConfig(snr_db=[])


def test_config_errors_name_the_field():
    """Test that invalid configs report the offending field"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    with pytest.raises(ValidationError) as info:
        ExperimentConfig(trials=0)
    assert "trials" in str(info.value)
    with pytest.raises(ValidationError) as info:
        ExperimentConfig(n_antennas=4)
    assert "n_antennas" in str(info.value)
    with pytest.raises(ValidationError):
        ExperimentConfig(M=16, l_max=8)
    with pytest.raises(ValidationError):
        ExperimentConfig(kind="dashboard")


def test_config_hash_and_loading(tmp_path):
    """Test config files, overrides and the provenance hash"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    path = tmp_path / "config.json"
    path.write_text(json.dumps({"trials": 7, "seed": 3}))
    config = load_config(path, kind="estimate", trials=None, seed=5)

    # Check that None overrides are ignored and others win
    assert config.trials == 7 and config.seed == 5
    assert len(config.config_hash()) == 16
    assert config.config_hash() == load_config(path, kind="estimate", seed=5).config_hash()
    assert config.config_hash() != load_config(path, kind="estimate", seed=6).config_hash()

    path.write_text("[1, 2]")
    with pytest.raises(ValueError):
        load_config(path)


def test_schema_column_order():
    """Test that every schema ends in config_hash and rejects reordered columns"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    for kind in RESULT_SCHEMAS:
        assert columns_for(kind)[-1] == "config_hash"
    assert columns_for("prob-sweep") == ["snr_db", "p_eff_mc", "p_eff_closed", "ci95", "config_hash"]

    table = pd.DataFrame({"iter": [0], "rate": [1.0], "objective": [2.0], "config_hash": ["0" * 16]})
    with pytest.raises(ValueError):
        validate_table("convergence", table)


def test_emit_csv_round_trip_and_empty(tmp_path):
    """Test header-only CSVs for empty tables and a parse round trip"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    empty = pd.DataFrame(columns=columns_for("rate-sweep"))
    path = experiments.emit_csv(empty, tmp_path / "out" / "empty.csv")
    assert path.read_text().strip().split("\n") == [",".join(columns_for("rate-sweep"))]

    table = experiments.run_experiment(small_config("convergence", trials=2, t1=3))
    path = experiments.emit_csv(table, tmp_path / "convergence.csv")
    parsed = pd.read_csv(path, dtype={"config_hash": str})
    pd.testing.assert_frame_equal(parsed, table, check_dtype=False)


def test_emit_csv_unwritable_path(tmp_path):
    """Test that an unwritable output path is reported"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        experiments.emit_csv(pd.DataFrame(columns=["a"]), blocker / "out.csv")


def test_plot_script_references_only_csv(tmp_path):
    """Test that the emitted plot script is standalone"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    script = experiments.emit_plot_script("mse-sweep", tmp_path / "mse.csv", tmp_path / "plot_mse.py")
    text = script.read_text()
    assert "mse.csv" in text
    assert "import isac" not in text
    assert 'set_yscale("log")' in text
    compile(text, str(script), "exec")


def test_estimate_run():
    """Test the full-pipeline estimate experiment with and without the IRS"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    config = small_config("estimate", snr_db=[30.0])
    table = experiments.run_experiment(config)
    assert list(table.columns) == columns_for("estimate")
    assert len(table) == 3
    np.testing.assert_allclose(table["err"], table["nu_hat"] - table["nu_true"])
    assert (table["config_hash"] == config.config_hash()).all()

    no_irs = experiments.run_experiment(small_config("estimate", irs=False))
    assert np.isfinite(no_irs["nu_hat"]).all()


def test_runs_are_deterministic_across_workers(tmp_path, monkeypatch):
    """Test byte-identical CSVs for repeated runs and different worker counts"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    config = small_config("prob-sweep", trials=50, snr_db=[5.0, 15.0])
    monkeypatch.setenv("ISAC_THREADS", "1")
    first = experiments.emit_csv(experiments.run_experiment(config), tmp_path / "a.csv")
    second = experiments.emit_csv(experiments.run_experiment(config), tmp_path / "b.csv")
    monkeypatch.setenv("ISAC_THREADS", "4")
    threaded = experiments.emit_csv(experiments.run_experiment(config), tmp_path / "c.csv")

    assert first.read_bytes() == second.read_bytes() == threaded.read_bytes()


def test_worker_count_from_environment(monkeypatch):
    """Test ISAC_THREADS parsing"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    monkeypatch.setenv("ISAC_THREADS", "0")
    assert experiments.worker_count() == 1
    monkeypatch.setenv("ISAC_THREADS", "many")
    with pytest.raises(ValueError):
        experiments.worker_count()


def test_prob_sweep_matches_closed_form():
    """Test Monte Carlo against the closed-form sensing probability at N_B = 16, SNR = 10 dB"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    config = ExperimentConfig(kind="prob-sweep", n_b=16, snr_db=[10.0], trials=10_000, seed=1)
    row = experiments.run_experiment(config).iloc[0]

    # Check the closed form against 98.03% and Monte Carlo against the closed form
    assert abs(row["p_eff_closed"] - 0.9803) < 0.005
    assert abs(row["p_eff_mc"] - row["p_eff_closed"]) < 0.01
    assert row["ci95"] == pytest.approx(1.96 * math.sqrt(row["p_eff_mc"] * (1 - row["p_eff_mc"]) / 10_000))


def test_conditional_mse_matches_approximation():
    """Test conditional Monte Carlo MSE within 3 dB of the approximation"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    config = ExperimentConfig(kind="mse-sweep", snr_db=[10, 15, 20, 25, 30], trials=10_000, seed=2)
    table = experiments.run_experiment(config)

    for _, row in table.iterrows():
        gap_db = 10 * math.log10(row["mse_cond_mc"] / row["mse_approx"])
        assert abs(gap_db) <= 3.0, row["snr_db"]
        assert row["mse_approx"] <= row["mse_upper"]
        assert row["delta_lower"] < row["mse_upper"] - row["mse_approx"] < row["delta_upper"]


def test_mse_sweep_rejects_on_grid_offset():
    """Test that a zero fractional offset is rejected"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    with pytest.raises(ValueError):
        experiments.run_experiment(small_config("mse-sweep", fraction=0.0))


def test_prob_sweep_fixed_offsets():
    """Test that prob-sweep rejects an on-grid offset and handles fixed fractional offsets"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    with pytest.raises(ValueError, match="on-grid"):
        experiments.run_experiment(small_config("prob-sweep", fraction=0.0))

    # Check that mirrored offsets give complementary closed forms
    right = experiments.run_experiment(small_config("prob-sweep", fraction=0.25)).iloc[0]
    left = experiments.run_experiment(small_config("prob-sweep", fraction=-0.25)).iloc[0]
    assert 0.0 <= right["p_eff_closed"] <= 1.0
    assert right["p_eff_closed"] == pytest.approx(left["p_eff_closed"], abs=1e-12)


def test_beamform_and_rate_runs():
    """Test the beamforming, rate and convergence experiments on a small grid"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    beams = experiments.run_experiment(small_config("beamform", trials=2, n_b=4, n_i1=4, n_i2=4))
    assert list(beams.columns) == columns_for("beamform")
    assert (beams["objective_final"] >= beams["objective_init"] * (1 - 1e-8)).all()
    assert (beams["rate_lower_bound"] <= beams["rate"] + 1e-12).all()

    rates = experiments.run_experiment(small_config("rate-sweep", trials=2))
    assert list(rates.columns) == columns_for("rate-sweep")
    assert len(rates) == 1

    convergence = experiments.run_experiment(small_config("convergence", trials=2, t1=4))
    assert list(convergence["iter"]) == [0, 1, 2, 3, 4]
    assert convergence["objective"].is_monotonic_increasing


def test_velocity_sweep_aliasing():
    """Test that the ratio estimate beats the on-grid one until the Doppler aliases"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    config = ExperimentConfig(kind="velocity-sweep", trials=50, velocities_kmh=[60.0, 720.0])
    table = experiments.run_experiment(config).set_index("velocity_kmh")

    assert table.loc[60.0, "mse_ratio"] < table.loc[60.0, "mse_integer"]
    # Check that 720 km/h lies past the velocity limit and aliases
    assert table.loc[720.0, "mse_ratio"] > 1e6


def test_cli_success(tmp_path, monkeypatch):
    """Test a CLI run writing the CSV and the plot script"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    monkeypatch.chdir(tmp_path)
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(dict(SMALL, snr_db=[20.0])))
    code = cli.main(["estimate", "--config", str(config_path), "--trials", "2", "--seed", "4",
                     "--out", "results/estimate.csv", "--plot", "results/plot_estimate.py"])

    assert code == cli.EXIT_OK
    table = pd.read_csv(tmp_path / "results" / "estimate.csv")
    assert list(table.columns) == columns_for("estimate")
    assert len(table) == 2
    assert (tmp_path / "results" / "plot_estimate.py").exists()
    assert (tmp_path / "logs" / "isac.log").exists()


def test_cli_config_errors(tmp_path, monkeypatch):
    """Test exit code 2 for invalid, malformed and missing configs"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    monkeypatch.chdir(tmp_path)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"M": 0}))
    assert cli.main(["estimate", "--config", str(bad)]) == cli.EXIT_CONFIG

    malformed = tmp_path / "malformed.json"
    malformed.write_text("{not json")
    assert cli.main(["estimate", "--config", str(malformed)]) == cli.EXIT_CONFIG

    assert cli.main(["estimate", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG
    assert cli.main(["estimate", "--trials", "0"]) == cli.EXIT_CONFIG


def test_cli_infeasible(tmp_path, monkeypatch):
    """Test exit code 3 when the MSE target needs more LoS gain than achievable"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    monkeypatch.chdir(tmp_path)
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(dict(SMALL, gamma1=1e-12)))
    assert cli.main(["beamform", "--config", str(config_path), "--trials", "1"]) == cli.EXIT_INFEASIBLE


def test_generate_results_dictionary(tmp_path):
    """Test that the results dictionary documents every table and column"""
    if not DEPENDENCIES_AVAILABLE:
        pytest.skip("Dependencies not available")

    output = generate_docs.generate_results_dictionary(str(tmp_path / "docs" / "results_dictionary.md"))
    text = open(output, encoding="utf-8").read()
    for kind, schema in RESULT_SCHEMAS.items():
        assert f"## {kind}" in text
        for column in schema.columns:
            assert f"| {column} |" in text


if __name__ == "__main__":
    pytest.main([__file__])
