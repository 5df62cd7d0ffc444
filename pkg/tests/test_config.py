"""Test environment configuration and run-configuration validation."""

import pytest
from pydantic import ValidationError

import config
from cli.run_config import DEFAULT_MONITORS, ModulusBlock, MonitorsBlock, RunConfig, load_run_config
from core.exceptions import ConfigError

GRID = {"n": 64, "dx": 0.25, "x0": -8.0}


def test_default_config_is_valid():
    assert config.validate_config() == []
    summary = config.get_config_summary()
    assert summary["effective_threads"] >= 1
    assert summary["quadrature_tolerance"] == config.QUADRATURE_TOLERANCE


def test_invalid_environment_values(monkeypatch):
    """Out-of-range settings are reported, one message each."""
    monkeypatch.setattr(config, "DEFAULT_CFL", 2.0)
    monkeypatch.setattr(config, "LOG_LEVEL", "LOUD")
    errors = config.validate_config()
    assert len(errors) == 2
    assert any("CFL" in error for error in errors)


def test_effective_threads(monkeypatch):
    monkeypatch.setattr(config, "MUSKAT_THREADS", 3)
    assert config.effective_threads() == 3


def test_minimal_run_config():
    """An empty document is valid; defaults fill the optional blocks."""
    rc = RunConfig.model_validate({})
    assert rc.schema_version == 1
    assert rc.monitors.enabled == list(DEFAULT_MONITORS)
    assert rc.scenario is None
    with pytest.raises(ConfigError):
        rc.effective_stepper


def test_unknown_keys_and_versions_are_rejected():
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"schema_version": 2})
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"solver": {}})


def test_scenario_and_grid_go_together():
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"scenario": {"name": "gaussian"}})
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"grid": GRID})


def test_scenario_checked_against_grid():
    """A periodic-only scenario on a compact grid is a validation error."""
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"scenario": {"name": "sine"}, "grid": GRID})
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"scenario": {"name": "gaussian", "params": {"height": 2.0}}, "grid": GRID})


def test_truncation_radius_checked_against_grid():
    with pytest.raises(ValidationError):
        RunConfig.model_validate(
            {"scenario": {"name": "gaussian"}, "grid": GRID, "quadrature": {"truncation_radius": 1.0}}
        )


def test_output_stride_overrides_stepper():
    rc = RunConfig.model_validate({"stepper": {"t_end": 1.0, "output_stride": 10}, "output": {"stride": 3}})
    assert rc.effective_stepper.output_stride == 3
    assert rc.stepper.output_stride == 10


def test_modulus_block_rules():
    """lambda > 0, Lambda >= lambda, explicit mode needs delta and gamma, exponents ordered."""
    assert ModulusBlock.model_validate({"lambda": 0.5}).lambda_ == 0.5
    with pytest.raises(ValidationError):
        ModulusBlock.model_validate({"lambda": -1.0})
    with pytest.raises(ValidationError):
        ModulusBlock.model_validate({"lambda": 2.0, "Lambda": 1.0})
    with pytest.raises(ValidationError):
        ModulusBlock.model_validate({"mode": "explicit", "delta": 0.01})
    with pytest.raises(ValidationError):
        ModulusBlock.model_validate({"exponents": [8, 5]})


def test_monitors_block_rules():
    with pytest.raises(ValidationError):
        MonitorsBlock(enabled=["modulus", "modulus"])
    with pytest.raises(ValidationError):
        MonitorsBlock(enabled=["energy"])
    with pytest.raises(ValidationError):
        MonitorsBlock(tolerances={"modulus": -1.0})
    assert MonitorsBlock(tolerances={"curvature": 0.2}).tolerances == {"curvature": 0.2}


def test_load_run_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text('{"stepper": {"t_end": 0.5}}', encoding="utf-8")
    assert load_run_config(path).stepper.t_end == 0.5
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "absent.json")
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ValidationError):
        load_run_config(path)
