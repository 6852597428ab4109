"""Test run configuration loading"""
from __future__ import annotations

from pathlib import Path

import pytest

from sparklingmri.exceptions import ConfigurationException
from sparklingmri.settings import load_run_config, parse_run_config


def test_defaults() -> None:
    """No file means documented defaults"""
    cfg = load_run_config(None)
    assert cfg.n == 320
    assert cfg.n_shots == 16
    assert cfg.n_samples == 512
    assert cfg.pipe_iters == 10
    assert cfg.workers >= 1
    assert cfg.recon().wavelet.family == "sym8"
    assert cfg.recon(lam=0.5).lam == 0.5
    assert cfg.nufft().kernel_width == 8


def test_loupe_budget_defaults_to_inverse_acceleration() -> None:
    """R = 2.5 gives a sparsity of 0.4"""
    assert load_run_config(None).loupe().target_sparsity == pytest.approx(0.4)


def test_flat_toml(tmp_path: Path) -> None:
    """Keys override defaults"""
    path = tmp_path / "run.toml"
    path.write_text('n = 64\nn_shots = 8\nnufft_mode = "exact"\nlam = 0.01\n')
    cfg = load_run_config(path)
    assert cfg.n == 64
    assert cfg.trajectory_spec().n_shots == 8
    assert cfg.nufft().mode == "exact"
    assert cfg.recon().lam == 0.01


@pytest.mark.parametrize(
    "text",
    [
        "unknown_key = 1\n",
        "n = -4\n",
        'init = "file"\n',
        "lambda_min = 1.0\nlambda_max = 0.1\n",
        "dwell_dt = 3.0\n",
        'nufft_mode = "fast"\n',
        "[hardware]\nn = 64\n",
        "n = \n",
    ],
)
def test_invalid_configs(tmp_path: Path, text: str) -> None:
    """Unknown keys, bad values, missing init_file, tables and bad TOML"""
    path = tmp_path / "run.toml"
    path.write_text(text)
    with pytest.raises(ConfigurationException):
        load_run_config(path)


def test_missing_file(tmp_path: Path) -> None:
    """Reported as a configuration error"""
    with pytest.raises(ConfigurationException):
        load_run_config(tmp_path / "absent.toml")


def test_anchor_follows_config() -> None:
    """anchor_center pins the middle sample"""
    assert parse_run_config({}).constraint_set().anchors[0].index == 256
    assert parse_run_config({"anchor_center": False}).constraint_set().anchors == ()
