"""SPARKLING MRI: Command Line Interface"""
from collections.abc import Callable
import csv
from functools import wraps
from json import dumps
import logging
from pathlib import Path
import sys
from typing import Any, Optional

import click
import numpy as np
import typer

from .const import (
    CONTRAST_T1,
    DENSITY_LOG_SPECTRUM,
    DENSITY_LOUPE_LITE,
    DENSITY_SPECTRUM,
    DENSITY_VDS,
    EXIT_DATA_ERROR,
    EXIT_NUMERICAL_ERROR,
    EXIT_SUCCESS,
    EXIT_USAGE,
    LAMBDA_SEARCH,
)
from .exceptions import DataException, FormatException, NumericalException
from .logger import setup_logger
from .modules import build_density
from .modules.constraints import ConstraintSet, is_feasible
from .modules.core import DensityGrid, Trajectory, acceleration_factor
from .modules.metrics import score as score_images
from .modules.phantom import coil_maps, random_phantom, shepp_logan
from .modules.recon import (
    SensitivityMaps,
    cs_reconstruct,
    dc_adjoint_reconstruct,
    estimate_sensitivities,
    lambda_grid,
    lambda_search,
)
from .modules.sparkling import SparklingGenerator
from .settings import RunConfig, load_run_config
from .study import (
    dwell_plan,
    load_manifest,
    read_image,
    run_retrospective,
    simulate_acquisition,
    vds_search,
)
from .utilities.plot import plot_density, plot_image, plot_trajectory
from .utilities.tensor import read_tensor, write_tensor

app = typer.Typer(help="SPARKLING trajectory design and reconstruction")
density_app = typer.Typer(help="Build target sampling densities")
sparkling_app = typer.Typer(help="Optimize trajectories")
traj_app = typer.Typer(help="Inspect trajectories")
recon_app = typer.Typer(help="Reconstruct images from k-space")
study_app = typer.Typer(help="Retrospective studies")
plot_app = typer.Typer(help="Render figures")
app.add_typer(density_app, name="density")
app.add_typer(sparkling_app, name="sparkling")
app.add_typer(traj_app, name="traj")
app.add_typer(recon_app, name="recon")
app.add_typer(study_app, name="study")
app.add_typer(plot_app, name="plot")

logger = logging.getLogger(__name__)

ConfigOption = typer.Option(None, "--config", help="Flat TOML run config")
TrajectoryOption = typer.Option(
    ..., "--traj", "--trajectory", "-t", help="Trajectory tensor"
)


class ExitCode(Exception):
    """Carries a process exit code out of a command"""

    def __init__(self, code: int) -> None:
        """Initialize"""
        super().__init__(code)
        self.code = code


def handle_errors(func: Callable[..., Any]) -> Callable[..., Any]:
    """Map domain exceptions to exit codes"""

    @wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except DataException as error:
            logger.error("%s: %s", type(error).__name__, error)
            raise ExitCode(EXIT_DATA_ERROR) from error
        except NumericalException as error:
            logger.error("%s: %s", type(error).__name__, error)
            raise ExitCode(EXIT_NUMERICAL_ERROR) from error
        except (OSError, ValueError) as error:
            logger.error("%s", error)
            raise ExitCode(EXIT_DATA_ERROR) from error

    return wrapper


@app.callback()
def main(
    log_level: str = typer.Option("INFO", "--log-level", help="Logging level"),
    log_file: Optional[str] = typer.Option(None, "--log-file", help="Also log to file"),
) -> None:
    """SPARKLING MRI"""
    setup_logger(log_level, "sparklingmri", log_file)


def _load_trajectory(path: Path, cfg: RunConfig) -> Trajectory:
    tensor = read_tensor(path)
    points = tensor.data
    if np.iscomplexobj(points) or points.ndim != 3 or points.shape[-1] != 2:
        raise FormatException(f"{path} is not a real [Nc][Ns][2] trajectory")
    meta = tensor.meta or {"hardware": cfg.hardware().model_dump()}
    return Trajectory.from_meta(points, meta)


def _write_trajectory(path: Path, trajectory: Trajectory) -> None:
    write_tensor(path, trajectory.points, meta=trajectory.meta)


def _load_density(path: Path) -> DensityGrid:
    tensor = read_tensor(path)
    if np.iscomplexobj(tensor.data) or tensor.data.ndim != 2:
        raise FormatException(f"{path} is not a real [n][n] density")
    return DensityGrid.from_weights(tensor.data, **tensor.meta)


def _density(
    method: str,
    config: Optional[Path],
    images: Optional[list[Path]],
    output: Path,
) -> None:
    cfg = load_run_config(config)
    training = [read_image(path, cfg.n) for path in images or []]
    rho = build_density(method, cfg.n, training, vds=cfg.vds(), loupe=cfg.loupe())
    write_tensor(output, rho.values, meta=rho.meta)
    logger.info("Wrote %s density to %s", method, output)


@density_app.command("vds")
@handle_errors
def density_vds(
    output: Path = typer.Option(..., "--output", "-o"),
    config: Optional[Path] = ConfigOption,
) -> None:
    """Radially decaying density"""
    _density(DENSITY_VDS, config, None, output)


@density_app.command("spectrum")
@handle_errors
def density_spectrum(
    images: list[Path] = typer.Option(..., "--image", "-i", help="Training image"),
    output: Path = typer.Option(..., "--output", "-o"),
    config: Optional[Path] = ConfigOption,
) -> None:
    """Average power spectrum of a training set"""
    _density(DENSITY_SPECTRUM, config, images, output)


@density_app.command("log-spectrum")
@handle_errors
def density_log_spectrum(
    images: list[Path] = typer.Option(..., "--image", "-i", help="Training image"),
    output: Path = typer.Option(..., "--output", "-o"),
    config: Optional[Path] = ConfigOption,
) -> None:
    """Flattened log power spectrum of a training set"""
    _density(DENSITY_LOG_SPECTRUM, config, images, output)


@density_app.command("loupe-lite")
@handle_errors
def density_loupe_lite(
    images: list[Path] = typer.Option(..., "--image", "-i", help="Training image"),
    output: Path = typer.Option(..., "--output", "-o"),
    config: Optional[Path] = ConfigOption,
) -> None:
    """Learned Cartesian probability map"""
    _density(DENSITY_LOUPE_LITE, config, images, output)


@density_app.command("vds-search")
@handle_errors
def density_vds_search(
    images: list[Path] = typer.Option(..., "--image", "-i", help="Validation image"),
    output: Path = typer.Option(..., "--output", "-o"),
    cutoffs: list[float] = typer.Option(..., "--cutoff", help="Plateau radius"),
    decays: list[float] = typer.Option(..., "--decay", help="Decay exponent"),
    config: Optional[Path] = ConfigOption,
) -> None:
    """Radial density with the (cutoff, decay) of best median SSIM"""
    cfg = load_run_config(config)
    validation = [read_image(path, cfg.n) for path in images]
    result = vds_search(validation, cfg, cutoffs, decays)
    for cutoff, decay, median in result.table:
        typer.echo(
            dumps(
                {
                    "cutoff": cutoff,
                    "decay": decay,
                    "ssim_median": median,
                    "best": (cutoff, decay) == (result.best.cutoff, result.best.decay),
                },
                sort_keys=True,
            )
        )
    rho = build_density(DENSITY_VDS, cfg.n, vds=result.best)
    write_tensor(output, rho.values, meta=rho.meta)
    logger.info(
        "Wrote vds density with cutoff=%s decay=%s to %s",
        result.best.cutoff,
        result.best.decay,
        output,
    )


@sparkling_app.command("generate")
@handle_errors
def sparkling_generate(
    density: Path = typer.Option(..., "--density", "-d"),
    output: Path = typer.Option(..., "--output", "-o"),
    initial: Optional[Path] = typer.Option(None, "--initial", help="Start trajectory"),
    config: Optional[Path] = ConfigOption,
) -> None:
    """Optimize a trajectory for a target density"""
    cfg = load_run_config(config)
    rho = _load_density(density)
    start = None if initial is None else _load_trajectory(initial, cfg)
    generator = SparklingGenerator(
        rho, cfg.trajectory_spec(), cfg.constraint_set(), cfg.sparkling()
    )
    trajectory = generator.generate(start)
    _write_trajectory(output, trajectory)
    logger.info(
        "Wrote trajectory to %s: R=%.4f F=%.6e",
        output,
        acceleration_factor(trajectory.spec),
        generator.final_value,
    )


@traj_app.command("check")
@handle_errors
def traj_check(
    trajectory: Path = typer.Argument(..., help="Trajectory tensor"),
    tol: float = typer.Option(1e-6, "--tol"),
    config: Optional[Path] = ConfigOption,
) -> None:
    """Print a feasibility report, exit 2 when a constraint is violated"""
    cfg = load_run_config(config)
    t = _load_trajectory(trajectory, cfg)
    q = ConstraintSet.from_spec(t.spec, anchor_center=cfg.anchor_center)
    report = is_feasible(t, q, tol)
    typer.echo(dumps(report.as_dict(), sort_keys=True))
    if not report.feasible:
        raise ExitCode(EXIT_DATA_ERROR)


@app.command("acquire")
@handle_errors
def acquire(
    image: Path = typer.Option(..., "--image", "-i"),
    trajectory: Path = TrajectoryOption,
    output: Path = typer.Option(..., "--output", "-o"),
    n_coils: int = typer.Option(1, "--coils"),
    maps_output: Optional[Path] = typer.Option(None, "--maps-output"),
    config: Optional[Path] = ConfigOption,
) -> None:
    """Simulate multi-coil k-space [L][P] on the dwell-time samples"""
    cfg = load_run_config(config)
    t = _load_trajectory(trajectory, cfg)
    reference = read_image(image, t.spec.hardware.n)
    maps = coil_maps(reference.shape[0], n_coils)
    kspace, _ = simulate_acquisition(reference, t, maps, cfg)
    write_tensor(output, kspace)
    if maps_output is not None:
        write_tensor(maps_output, maps)
    logger.info("Wrote %s coils x %s samples to %s", *kspace.shape, output)


def _maps(
    kspace: np.ndarray,
    plan: Any,
    maps: Optional[Path],
    cfg: RunConfig,
) -> SensitivityMaps:
    if maps is not None:
        return SensitivityMaps(read_tensor(maps).data)
    if kspace.shape[0] == 1:
        return SensitivityMaps.unit(plan.n)
    return estimate_sensitivities(kspace, plan, cfg.center_fraction, cfg.pipe_iters)


def _lambda_value(value: str) -> float:
    try:
        weight = float(value)
    except ValueError as error:
        raise typer.BadParameter(
            f"expected a number or '{LAMBDA_SEARCH}', got {value!r}",
            param_hint="--lambda",
        ) from error
    if not np.isfinite(weight) or weight < 0:
        raise typer.BadParameter(
            f"must be finite and nonnegative, got {value}", param_hint="--lambda"
        )
    return weight


@recon_app.command("cs")
@handle_errors
def recon_cs(
    kspace: Path = typer.Option(..., "--kspace", "-k"),
    trajectory: Path = TrajectoryOption,
    output: Path = typer.Option(..., "--output", "-o"),
    lam: Optional[str] = typer.Option(
        None, "--lambda", help="Regularization weight, or 'search' to sweep it"
    ),
    reference: Optional[Path] = typer.Option(
        None, "--ref", "--reference", help="Reference image for --lambda search"
    ),
    maps: Optional[Path] = typer.Option(None, "--maps", help="Known sensitivities"),
    iteration_log: Optional[Path] = typer.Option(None, "--iteration-log"),
    config: Optional[Path] = ConfigOption,
) -> None:
    """Wavelet-sparse FISTA reconstruction"""
    search = lam == LAMBDA_SEARCH
    if search and reference is None:
        raise typer.BadParameter("'search' needs --ref", param_hint="--lambda")
    weight = None if lam is None or search else _lambda_value(lam)
    cfg = load_run_config(config)
    plan = dwell_plan(_load_trajectory(trajectory, cfg), cfg)
    data = np.atleast_2d(read_tensor(kspace).data)
    sensitivities = _maps(data, plan, maps, cfg)
    if search:
        assert reference is not None
        sweep = lambda_search(
            data,
            plan,
            sensitivities,
            read_image(reference, plan.n),
            lambda_grid(cfg.lambda_min, cfg.lambda_max, cfg.lambda_count),
            cfg.recon(),
            workers=cfg.workers,
        )
        assert sweep.best is not None
        result = sweep.best
        logger.info("Selected lambda %s", sweep.best_lambda)
    else:
        result = cs_reconstruct(data, plan, sensitivities, cfg.recon(weight))
    write_tensor(output, result.image)
    if iteration_log is not None:
        with open(iteration_log, "w", encoding="utf-8", newline="") as file:
            writer = csv.writer(file, lineterminator="\n")
            writer.writerow(["iteration", "objective", "elapsed_s"])
            for index, (value, elapsed) in enumerate(
                zip(result.objective, result.elapsed)
            ):
                writer.writerow([index, f"{value:.12e}", f"{elapsed:.6f}"])
    logger.info("Reconstructed in %s iterations: %s", result.iterations, output)


@recon_app.command("adjoint")
@handle_errors
def recon_adjoint(
    kspace: Path = typer.Option(..., "--kspace", "-k"),
    trajectory: Path = TrajectoryOption,
    output: Path = typer.Option(..., "--output", "-o"),
    maps: Optional[Path] = typer.Option(None, "--maps", help="Known sensitivities"),
    config: Optional[Path] = ConfigOption,
) -> None:
    """Density compensated adjoint baseline"""
    cfg = load_run_config(config)
    plan = dwell_plan(_load_trajectory(trajectory, cfg), cfg)
    data = np.atleast_2d(read_tensor(kspace).data)
    sensitivities = _maps(data, plan, maps, cfg)
    image = dc_adjoint_reconstruct(data, plan, sensitivities, n_iter=cfg.pipe_iters)
    write_tensor(output, image)


@recon_app.command("sweep")
@handle_errors
def recon_sweep(
    kspace: Path = typer.Option(..., "--kspace", "-k"),
    trajectory: Path = TrajectoryOption,
    reference: Path = typer.Option(..., "--ref"),
    output: Optional[Path] = typer.Option(None, "--output", "-o"),
    maps: Optional[Path] = typer.Option(None, "--maps", help="Known sensitivities"),
    config: Optional[Path] = ConfigOption,
) -> None:
    """Grid search lambda by SSIM against a reference, one JSON line per value"""
    cfg = load_run_config(config)
    plan = dwell_plan(_load_trajectory(trajectory, cfg), cfg)
    data = np.atleast_2d(read_tensor(kspace).data)
    result = lambda_search(
        data,
        plan,
        _maps(data, plan, maps, cfg),
        read_image(reference, plan.n),
        lambda_grid(cfg.lambda_min, cfg.lambda_max, cfg.lambda_count),
        cfg.recon(),
        workers=cfg.workers,
    )
    for trial in result.table:
        typer.echo(
            dumps(
                {
                    "lambda": trial.lam,
                    "ssim": None if np.isnan(trial.ssim) else trial.ssim,
                    "psnr": None if not np.isfinite(trial.psnr) else trial.psnr,
                    "iterations": trial.iterations,
                    "error": trial.error,
                    "best": trial.lam == result.best_lambda,
                },
                sort_keys=True,
            )
        )
    if output is not None and result.best is not None:
        write_tensor(output, result.best.image)


@app.command("score")
@handle_errors
def score(
    reference: Path = typer.Option(..., "--ref"),
    test: Path = typer.Option(..., "--test"),
    mask: str = typer.Option("auto", "--mask", help="'auto' or a mask tensor file"),
) -> None:
    """Masked SSIM and PSNR as one line of JSON"""
    ref_image = read_image(reference)
    test_image = np.abs(read_tensor(test).data)
    mask_values = None if mask == "auto" else read_tensor(mask).data.real > 0
    typer.echo(score_images(ref_image, test_image, mask_values).to_json())


@study_app.command("retro")
@handle_errors
def study_retro(
    manifest: Path = typer.Option(..., "--manifest", "-m"),
) -> None:
    """Retrospective study over a manifest of slices"""
    result = run_retrospective(load_manifest(manifest))
    if result.failures:
        raise ExitCode(EXIT_NUMERICAL_ERROR)


@plot_app.command("density")
@handle_errors
def plot_density_command(
    source: Path = typer.Option(..., "--input", "-i"),
    output: Path = typer.Option(..., "--output", "-o"),
) -> None:
    """Density heatmap"""
    plot_density(source, output)


@plot_app.command("trajectory")
@handle_errors
def plot_trajectory_command(
    source: Path = typer.Option(..., "--input", "-i"),
    output: Path = typer.Option(..., "--output", "-o"),
) -> None:
    """Trajectory with the first shot highlighted"""
    plot_trajectory(source, output)


@plot_app.command("image")
@handle_errors
def plot_image_command(
    source: Path = typer.Option(..., "--input", "-i"),
    output: Path = typer.Option(..., "--output", "-o"),
) -> None:
    """Magnitude image"""
    plot_image(source, output)


@app.command("phantom")
@handle_errors
def phantom(
    output: Path = typer.Option(..., "--output", "-o"),
    n: int = typer.Option(64, "--n"),
    contrast: str = typer.Option(CONTRAST_T1, "--contrast"),
    seed: Optional[int] = typer.Option(
        None, "--seed", help="Randomize the geometry with this seed"
    ),
) -> None:
    """Write a Shepp-Logan slice"""
    image = (
        shepp_logan(n, contrast)
        if seed is None
        else random_phantom(n, contrast, seed)
    )
    write_tensor(output, image, meta={"contrast": contrast})
    logger.info("Wrote %s phantom to %s", contrast, output)


def run(args: Optional[list[str]] = None) -> int:
    """Invoke the application and translate the outcome to an exit code"""
    try:
        app(args=args, standalone_mode=False)
    except ExitCode as error:
        return error.code
    except click.exceptions.Abort:
        return EXIT_USAGE
    except click.exceptions.ClickException as error:
        error.show()
        return EXIT_USAGE
    except typer.Exit as error:
        return error.exit_code
    return EXIT_SUCCESS


def entrypoint() -> None:
    """Console script"""
    sys.exit(run())
