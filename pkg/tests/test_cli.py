"""Tests for the command-line interface and its exit codes."""

import json

import numpy as np
import pandas as pd
import pytest

from tcentre_hyperpol import __version__
from tcentre_hyperpol.cli import (
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VALIDATION,
    dispatch,
)
from tcentre_hyperpol.core.contracts import FitResult, SpectrumData
from tcentre_hyperpol.core.exceptions import NumericalError
from tcentre_hyperpol.utils.config import CONFIG_ENV_VAR, RunConfig
from tcentre_hyperpol.utils.datafiles import write_spectrum_csv


@pytest.fixture(autouse=True)
def no_env_config(monkeypatch):
    monkeypatch.delenv(CONFIG_ENV_VAR, raising=False)


@pytest.fixture
def sweep_csv(tmp_path):
    """Noiseless sweep with a 250 MHz homogeneous width along [100]."""
    path = str(tmp_path / "sweep.csv")
    code = dispatch(["simulate-sweep", "--gamma-mhz", "250", "--b-max", "1000",
                     "--n-points", "51", "-o", path])
    assert code == EXIT_OK
    return path


def stub_result(converged):
    return FitResult(
        params={"gamma_mhz": 300.0},
        sigmas={"gamma_mhz": 5.0},
        covariance=np.array([[25.0]]),
        chi2_reduced=1.0,
        converged=converged,
        n_iter=3,
        message="stub",
    )


def read_json(capsys):
    return json.loads(capsys.readouterr().out)


def test_version():
    """Test that --version exits cleanly."""
    assert dispatch(["--version"]) == EXIT_OK
    assert __version__ == "0.1.0"


def test_unknown_command():
    """Test that an unknown command is a usage error."""
    assert dispatch(["frobnicate"]) == EXIT_USAGE


def test_missing_required_option():
    assert dispatch(["indist"]) == EXIT_USAGE


def test_gfactors_table(tmp_path):
    """Test the [100] g-factor table written to CSV."""
    path = tmp_path / "g.csv"
    assert dispatch(["gfactors", "--dir", "1,0,0", "-o", str(path)]) == EXIT_OK

    frame = pd.read_csv(path)
    assert list(frame["multiplicity"]) == [4, 8]
    assert frame["g_h"].tolist() == pytest.approx([0.91, 2.55], abs=0.02)


def test_gfactors_with_alignment_error(tmp_path):
    """Test Monte-Carlo uncertainties on the table."""
    path = tmp_path / "g.csv"
    code = dispatch(["gfactors", "--incl-err-deg", "10", "--azim-err-deg", "10",
                     "--samples", "100", "--seed", "3", "-o", str(path)])

    assert code == EXIT_OK
    frame = pd.read_csv(path)
    assert frame["multiplicity"].sum() == 12
    assert (frame["sigma"] > 0).all()


def test_bad_direction_is_usage_error():
    assert dispatch(["gfactors", "--dir", "1,0"]) == EXIT_USAGE


def test_zero_direction_is_invalid_input():
    assert dispatch(["gfactors", "--dir", "0,0,0"]) == EXIT_VALIDATION


def test_fit_sweep_recovers_width(sweep_csv, capsys):
    """Test the simulate then fit round trip through the CLI."""
    capsys.readouterr()
    assert dispatch(["fit-sweep", sweep_csv]) == EXIT_OK

    payload = read_json(capsys)
    assert payload["converged"] is True
    assert payload["params"]["gamma_mhz"] == pytest.approx(250.0, rel=1e-4)
    assert payload["gamma_sd_mhz"] == pytest.approx(250.0, rel=1e-4)


def test_fit_sweep_subtracts_thermal_width(sweep_csv, capsys):
    capsys.readouterr()
    assert dispatch(["fit-sweep", sweep_csv, "--temperature-k", "4.2"]) == EXIT_OK
    assert read_json(capsys)["gamma_sd_mhz"] == pytest.approx(20.0, abs=0.05)


def test_fit_sweep_writes_output_file(sweep_csv, tmp_path):
    path = tmp_path / "out" / "fit.json"
    assert dispatch(["fit-sweep", sweep_csv, "-o", str(path)]) == EXIT_OK
    assert json.loads(path.read_text())["params"]["gamma_mhz"] == pytest.approx(250.0, rel=1e-4)


def test_not_converged_exit_code(sweep_csv, mocker, capsys):
    """Test that a fit reporting converged False exits with 3."""
    mocker.patch("tcentre_hyperpol.cli.fit_gamma_sd", return_value=stub_result(False))
    capsys.readouterr()

    assert dispatch(["fit-sweep", sweep_csv]) == EXIT_NOT_CONVERGED
    assert read_json(capsys)["converged"] is False


def test_numerical_error_exit_code(sweep_csv, mocker):
    mocker.patch("tcentre_hyperpol.cli.fit_gamma_sd",
                 side_effect=NumericalError("quadrature did not converge"))
    assert dispatch(["fit-sweep", sweep_csv]) == EXIT_NOT_CONVERGED


def test_malformed_sweep_is_invalid_input(tmp_path):
    """Test that a bad data file exits with 2."""
    path = tmp_path / "bad.csv"
    path.write_text("b_gauss,amplitude\n0,1\n10,oops\n20,0.5\n30,0.2\n")
    assert dispatch(["fit-sweep", str(path)]) == EXIT_VALIDATION


def test_missing_file_is_invalid_input(tmp_path):
    assert dispatch(["fit-sweep", str(tmp_path / "absent.csv")]) == EXIT_VALIDATION


def test_simulate_map_then_linewidths(tmp_path):
    """Test map generation and Lorentzian linecuts."""
    map_path = tmp_path / "map.csv"
    widths_path = tmp_path / "widths.csv"
    assert dispatch(["simulate-map", "--gamma-mhz", "250", "--b-max", "200", "--n-b", "5",
                     "--delta-max", "2000", "--n-delta", "201", "-o", str(map_path)]) == EXIT_OK
    assert dispatch(["map-linewidths", str(map_path), "-o", str(widths_path)]) == EXIT_OK

    frame = pd.read_csv(widths_path)
    assert len(frame) == 5
    assert frame["fwhm_mhz"].iloc[0] == pytest.approx(250.0, rel=1e-5)
    assert frame["fwhm_mhz"].is_monotonic_increasing


def test_indist(capsys):
    """Test the indistinguishability document."""
    assert dispatch(["indist", "--gamma-sd-mhz", "16"]) == EXIT_OK
    payload = read_json(capsys)
    assert payload["value"] == pytest.approx(2.42e-3, rel=0.01)
    assert payload["xi"] == 0.23


def test_init_config_then_use_it(tmp_path, capsys):
    """Test writing the default config and reading it back through --config."""
    path = tmp_path / "config.json"
    assert dispatch(["init-config", "-o", str(path)]) == EXIT_OK
    assert RunConfig.from_file(str(path)) == RunConfig()

    data = json.loads(path.read_text())
    data["constants"]["xi"] = 0.5
    path.write_text(json.dumps(data))
    capsys.readouterr()

    assert dispatch(["--config", str(path), "indist", "--gamma-sd-mhz", "16"]) == EXIT_OK
    assert read_json(capsys)["xi"] == 0.5


def test_config_from_environment(tmp_path, monkeypatch, capsys):
    path = tmp_path / "env.json"
    RunConfig.from_dict({"constants": {"gamma1_mhz": 1.0}}).save(str(path))
    monkeypatch.setenv(CONFIG_ENV_VAR, str(path))
    capsys.readouterr()

    assert dispatch(["indist", "--gamma-sd-mhz", "16"]) == EXIT_OK
    assert read_json(capsys)["gamma1_mhz"] == 1.0


def test_invalid_config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text('{"holes": {"doublet": "middle"}}')
    assert dispatch(["--config", str(path), "indist", "--gamma-sd-mhz", "16"]) == EXIT_VALIDATION


def test_calibrate_g_wiring(tmp_path, mocker, capsys):
    """Test that calibrate-g passes the measured table and axis to the fit."""
    measured = tmp_path / "measured.csv"
    measured.write_text("g_h,multiplicity,sigma\n1.0,6,0.01\n2.0,6,0.01\n")
    fit = mocker.patch("tcentre_hyperpol.cli.fit_gfactor_calibration",
                       return_value=stub_result(True))
    capsys.readouterr()

    assert dispatch(["calibrate-g", str(measured), "--axis", "1,1,0"]) == EXIT_OK

    args, kwargs = fit.call_args
    assert list(args[0]) == [1.0] * 6 + [2.0] * 6
    assert kwargs["nominal_axis"] == (1.0, 1.0, 0.0)
    assert read_json(capsys)["params"] == {"gamma_mhz": 300.0}


def test_fit_spectrum_in_ghz(tmp_path, capsys):
    """Test a Lorentzian linewidth fit of a spectrum stored in GHz."""
    delta_ghz = np.linspace(-2.0, 2.0, 201)
    counts = 5.0 + 100.0 / (1.0 + 4.0 * (delta_ghz - 0.03) ** 2 / 0.33 ** 2)
    path = str(tmp_path / "spectrum.csv")
    write_spectrum_csv(SpectrumData(delta_ghz, counts, np.ones_like(counts)), path)
    capsys.readouterr()

    assert dispatch(["fit-spectrum", path, "--unit", "ghz"]) == EXIT_OK
    payload = read_json(capsys)
    assert payload["params"]["lambda_mhz"] == pytest.approx(330.0, rel=1e-5)
    assert payload["params"]["centre_mhz"] == pytest.approx(30.0, abs=1e-3)
    assert payload["extras"]["kind"] == "lorentzian"


def test_orientation_bound(sweep_csv, tmp_path, capsys):
    """Test the orientation sweep summary and its per-direction table."""
    map_path = tmp_path / "orientation.csv"
    capsys.readouterr()

    assert dispatch(["orientation-bound", sweep_csv, "--grid", "2x2",
                     "--map-output", str(map_path)]) == EXIT_OK
    payload = read_json(capsys)
    assert payload["n_points"] == 4
    assert payload["max_point"]["gamma_sd_mhz"] > 0
    assert len(pd.read_csv(map_path)) == 4


def test_bad_grid_is_usage_error(sweep_csv, tmp_path):
    assert dispatch(["orientation-bound", sweep_csv, "--grid", "eight",
                     "--map-output", str(tmp_path / "m.csv")]) == EXIT_USAGE
