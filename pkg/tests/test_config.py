"""Tests for configuration management."""

import json

import pytest

from tcentre_hyperpol.analyzers.fitkit import FitOptions
from tcentre_hyperpol.core.exceptions import ValidationError
from tcentre_hyperpol.core.spinham import Doublet
from tcentre_hyperpol.utils.config import CONFIG_ENV_VAR, RunConfig


def test_config_defaults():
    """Test creating the default configuration."""
    config = RunConfig()

    assert config.constants.g_e == 2.005
    assert config.constants.xi == 0.23
    assert config.constants.gamma1_mhz == 0.169
    assert config.strain.eps_yy == -0.65e-3
    assert config.fit.mask_chi2 == 10.0

    model = config.hole_model()
    assert model.g1 == 1.505
    assert model.g2 == -0.138
    assert model.doublet is Doublet.LOWER


def test_config_from_dict_partial():
    """Test that omitted sections keep their defaults."""
    config = RunConfig.from_dict({
        "holes": {"g1": 1.3, "g2": -0.1},
        "fit": {"gamma_bounds_mhz": [1.0, 1e4]},
    })

    assert config.holes.g1 == 1.3
    assert config.fit.gamma_bounds_mhz == (1.0, 1e4)
    assert config.fit.max_iter == FitOptions().max_iter
    assert config.constants.g_e == 2.005


def test_config_from_empty_dict():
    """Test that an empty document is valid."""
    assert RunConfig.from_dict({}) == RunConfig()
    assert RunConfig.from_dict(None) == RunConfig()


@pytest.mark.parametrize("data", [
    {"constants": {"g_e": -2.0}},
    {"constants": {"unknown": 1.0}},
    {"holes": {"doublet": "middle"}},
    {"strain": {"tilt_deg": 120.0}},
    {"constant": {"g_e": 1.0}},
])
def test_config_invalid(data):
    """Test that bad values surface as ValidationError."""
    with pytest.raises(ValidationError):
        RunConfig.from_dict(data)


def test_config_save_and_load(tmp_path):
    """Test saving and loading configuration."""
    config = RunConfig.from_dict({"holes": {"g1": 1.45}, "strain": {"tilt_deg": 5.0}})
    path = tmp_path / "config.json"
    config.save(str(path))

    data = json.loads(path.read_text())
    assert data["holes"]["g1"] == 1.45
    assert data["fit"]["gamma_bounds_mhz"] == [1e-3, 1e6]

    assert RunConfig.from_file(str(path)) == config


def test_config_yaml_document(tmp_path):
    """Test that a YAML document is accepted."""
    path = tmp_path / "config.yaml"
    path.write_text("holes:\n  g1: 1.4\n  doublet: upper\nfit:\n  max_iter: 50\n")

    config = RunConfig.from_file(str(path))
    assert config.holes.g1 == 1.4
    assert config.hole_model().doublet is Doublet.UPPER
    assert config.fit.max_iter == 50


def test_config_json_exponent_floats(tmp_path):
    """Test that exponent-only floats keep their numeric type."""
    path = tmp_path / "config.json"
    path.write_text('{"fit": {"gamma_bounds_mhz": [1e-05, 1e+06]}}')
    assert RunConfig.from_file(str(path)).fit.gamma_bounds_mhz == (1e-5, 1e6)


def test_config_file_errors(tmp_path):
    """Test missing, malformed and non-mapping documents."""
    with pytest.raises(ValidationError):
        RunConfig.from_file(str(tmp_path / "missing.json"))

    bad = tmp_path / "bad.json"
    bad.write_text("holes: [unclosed")
    with pytest.raises(ValidationError):
        RunConfig.from_file(str(bad))

    listing = tmp_path / "list.json"
    listing.write_text("[1, 2, 3]")
    with pytest.raises(ValidationError):
        RunConfig.from_file(str(listing))


def test_config_empty_file(tmp_path):
    """Test that an empty file gives the defaults."""
    path = tmp_path / "empty.json"
    path.write_text("")
    assert RunConfig.from_file(str(path)) == RunConfig()


def test_config_from_env(tmp_path, monkeypatch):
    """Test loading the file named by the environment variable."""
    path = tmp_path / "env.json"
    RunConfig.from_dict({"constants": {"xi": 0.5}}).save(str(path))

    monkeypatch.setenv(CONFIG_ENV_VAR, str(path))
    assert RunConfig.from_env().constants.xi == 0.5

    monkeypatch.delenv(CONFIG_ENV_VAR)
    assert RunConfig.from_env() == RunConfig()
