"""Test the command line interface"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from sparklingmri.cli import run
from sparklingmri.modules.core import HardwareConfig, Trajectory, TrajectorySpec
from sparklingmri.utilities.tensor import read_tensor, write_tensor

TINY = """\
n = 32
n_shots = 4
n_samples = 32
dwell_dt = 5.0
n_levels = 2
iters_per_level = 3
max_iter = 5
n_scales = 2
pipe_iters = 3
lambda_count = 2
lambda_min = 0.001
lambda_max = 0.01
workers = 1
"""


@pytest.fixture
def config(tmp_path: Path) -> Path:
    """Tiny flat run configuration"""
    path = tmp_path / "run.toml"
    path.write_text(TINY)
    return path


@pytest.fixture
def phantom_file(tmp_path: Path) -> Path:
    """Phantom written by the CLI"""
    path = tmp_path / "phantom.bin"
    assert run(["phantom", "-o", str(path), "--n", "32"]) == 0
    return path


def test_phantom(phantom_file: Path, tmp_path: Path) -> None:
    """Shepp-Logan slice or a seeded variant"""
    tensor = read_tensor(phantom_file)
    assert tensor.data.shape == (32, 32)
    assert tensor.meta == {"contrast": "t1"}
    seeded = tmp_path / "seeded.bin"
    assert run(["phantom", "-o", str(seeded), "--n", "32", "--seed", "2"]) == 0
    assert not np.array_equal(read_tensor(seeded).data, tensor.data)
    assert run(["phantom", "-o", str(seeded), "--contrast", "pd"]) == 2


def test_score_prints_json(
    phantom_file: Path,
    capsys: pytest.CaptureFixture[str],
) -> None:
    """Identical images score SSIM 1 and infinite PSNR"""
    capsys.readouterr()
    assert run(["score", "--ref", str(phantom_file), "--test", str(phantom_file)]) == 0
    payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert payload["ssim"] == pytest.approx(1.0)
    assert payload["psnr_infinite"] is True


def test_density_vds(tmp_path: Path, config: Path) -> None:
    """Density of the configured side summing to one"""
    output = tmp_path / "rho.bin"
    assert run(["density", "vds", "-o", str(output), "--config", str(config)]) == 0
    tensor = read_tensor(output)
    assert tensor.data.shape == (32, 32)
    assert np.sum(tensor.data) == pytest.approx(1.0)
    assert tensor.meta["method"] == "vds"


def test_density_needs_training_images(tmp_path: Path) -> None:
    """Missing required options are usage errors"""
    assert run(["density", "spectrum", "-o", str(tmp_path / "rho.bin")]) == 1


def test_unknown_command() -> None:
    """Usage error"""
    assert run(["transmogrify"]) == 1


def _trajectory_file(path: Path, points: np.ndarray) -> None:
    spec = TrajectorySpec(
        n_shots=points.shape[0],
        n_samples=points.shape[1],
        hardware=HardwareConfig(n=32, dwell_dt=5.0),
    )
    t = Trajectory(points, spec)
    write_tensor(path, t.points, meta=t.meta)


def test_traj_check(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """Feasible trajectories exit 0, violations exit 2"""
    still = tmp_path / "still.bin"
    _trajectory_file(still, np.zeros((2, 8, 2)))
    capsys.readouterr()
    assert run(["traj", "check", str(still)]) == 0
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert report["feasible"] is True

    jumpy = tmp_path / "jumpy.bin"
    points = np.zeros((2, 8, 2))
    points[:, ::2, 0] = 0.9
    _trajectory_file(jumpy, points)
    assert run(["traj", "check", str(jumpy)]) == 2
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert report["feasible"] is False
    assert report["max_speed_ratio"] > 1.0


def test_pipeline(
    tmp_path: Path,
    config: Path,
    phantom_file: Path,
    capsys: pytest.CaptureFixture[str],
) -> None:
    """Density, trajectory, acquisition and reconstructions end to end"""
    cfg = ["--config", str(config)]
    rho = tmp_path / "rho.bin"
    traj = tmp_path / "traj.bin"
    kspace = tmp_path / "kspace.bin"
    maps = tmp_path / "maps.bin"
    image = tmp_path / "image.bin"
    log = tmp_path / "iterations.csv"
    assert run(["density", "vds", "-o", str(rho), *cfg]) == 0
    assert run(["sparkling", "generate", "-d", str(rho), "-o", str(traj), *cfg]) == 0
    assert read_tensor(traj).data.shape == (4, 32, 2)
    assert run(["traj", "check", str(traj), *cfg]) == 0

    assert run(
        [
            "acquire", "-i", str(phantom_file), "-t", str(traj), "-o", str(kspace),
            "--coils", "2", "--maps-output", str(maps), *cfg,
        ]
    ) == 0
    assert read_tensor(kspace).data.shape == (2, 4 * 32 * 2)

    assert run(
        [
            "recon", "cs", "-k", str(kspace), "--traj", str(traj), "-o", str(image),
            "--maps", str(maps), "--lambda", "0.001", "--iteration-log", str(log), *cfg,
        ]
    ) == 0
    assert read_tensor(image).data.shape == (32, 32)
    rows = log.read_text().splitlines()
    assert rows[0] == "iteration,objective,elapsed_s"
    assert len(rows) >= 2

    searched = tmp_path / "searched.bin"
    recon = ["recon", "cs", "-k", str(kspace), "--traj", str(traj), "-o", str(searched)]
    search = ["--lambda", "search", "--ref", str(phantom_file)]
    assert run([*recon, "--maps", str(maps), *search, *cfg]) == 0
    assert read_tensor(searched).data.shape == (32, 32)
    assert run([*recon, "--lambda", "search", *cfg]) == 1
    assert run([*recon, "--lambda", "lots", *cfg]) == 1
    assert run([*recon, "--lambda=-1", *cfg]) == 1

    adjoint = tmp_path / "adjoint.bin"
    assert run(
        ["recon", "adjoint", "-k", str(kspace), "-t", str(traj), "-o", str(adjoint), *cfg]
    ) == 0
    assert read_tensor(adjoint).data.shape == (32, 32)

    capsys.readouterr()
    assert run(
        [
            "recon", "sweep", "-k", str(kspace), "-t", str(traj),
            "--ref", str(phantom_file), "--maps", str(maps), *cfg,
        ]
    ) == 0
    lines = [json.loads(line) for line in capsys.readouterr().out.strip().splitlines()]
    assert [line["lambda"] for line in lines] == pytest.approx([1e-3, 1e-2])
    assert sum(line["best"] for line in lines) == 1


@pytest.mark.parametrize("kind", ["density", "trajectory", "image"])
def test_plot_rejects_corrupt_input(kind: str, tmp_path: Path) -> None:
    """Corrupt tensors exit 2 and leave no output behind"""
    source = tmp_path / "broken.bin"
    source.write_bytes(b"not a tensor")
    output = tmp_path / "figure.png"
    assert run(["plot", kind, "-i", str(source), "-o", str(output)]) == 2
    assert sorted(path.name for path in tmp_path.iterdir()) == ["broken.bin"]


def test_plot_image(phantom_file: Path, tmp_path: Path) -> None:
    """PNG written for a valid image"""
    output = tmp_path / "phantom.png"
    assert run(["plot", "image", "-i", str(phantom_file), "-o", str(output)]) == 0
    assert output.read_bytes().startswith(b"\x89PNG")


def test_plot_wrong_shape(phantom_file: Path, tmp_path: Path) -> None:
    """An image is not a trajectory"""
    output = tmp_path / "traj.png"
    assert run(["plot", "trajectory", "-i", str(phantom_file), "-o", str(output)]) == 2
    assert not output.exists()


def test_study_retro(tmp_path: Path, config: Path, phantom_file: Path) -> None:
    """A manifest study writes its tables"""
    manifest = tmp_path / "study.toml"
    manifest.write_text(
        f'config = "{config.name}"\ndensity_methods = ["vds"]\nlam = 0.001\n'
        f'output_dir = "out"\n[[slices]]\nfile = "{phantom_file.name}"\n'
    )
    assert run(["study", "retro", "-m", str(manifest)]) == 0
    assert (tmp_path / "out" / "results.csv").is_file()
    assert (tmp_path / "out" / "summary.csv").is_file()
    assert run(["study", "retro", "-m", str(tmp_path / "absent.toml")]) == 2


def test_density_vds_search(
    tmp_path: Path,
    config: Path,
    phantom_file: Path,
    capsys: pytest.CaptureFixture[str],
) -> None:
    """One JSON line per candidate and the winning density on disk"""
    output = tmp_path / "rho.bin"
    capsys.readouterr()
    assert run(
        [
            "density", "vds-search", "-i", str(phantom_file), "-o", str(output),
            "--cutoff", "0.2", "--decay", "1", "--decay", "2", "--config", str(config),
        ]
    ) == 0
    lines = [json.loads(line) for line in capsys.readouterr().out.strip().splitlines()]
    assert [(line["cutoff"], line["decay"]) for line in lines] == [(0.2, 1.0), (0.2, 2.0)]
    assert sum(line["best"] for line in lines) == 1
    best = next(line for line in lines if line["best"])
    assert best["ssim_median"] == max(line["ssim_median"] for line in lines)
    tensor = read_tensor(output)
    assert tensor.data.shape == (32, 32)
    assert tensor.meta["decay"] == best["decay"]


@pytest.mark.slow
def test_default_hardware_trajectory_passes_check(
    tmp_path: Path,
    capsys: pytest.CaptureFixture[str],
) -> None:
    """16 shots of 512 samples at 320 x 320 keep both hardware bounds"""
    config = tmp_path / "run.toml"
    config.write_text("n_levels = 4\niters_per_level = 5\n")
    cfg = ["--config", str(config)]
    rho = tmp_path / "rho.bin"
    traj = tmp_path / "traj.bin"
    assert run(["density", "vds", "-o", str(rho), *cfg]) == 0
    assert run(["sparkling", "generate", "-d", str(rho), "-o", str(traj), *cfg]) == 0
    assert read_tensor(traj).data.shape == (16, 512, 2)

    capsys.readouterr()
    assert run(["traj", "check", str(traj), "--tol", "1e-6", *cfg]) == 0
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert report["max_speed_ratio"] <= 1.0 + 1e-6
    assert report["max_accel_ratio"] <= 1.0 + 1e-6
