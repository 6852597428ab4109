"""SPARKLING MRI: Settings"""
from __future__ import annotations

from pathlib import Path
import tomllib
from typing import Literal, Optional, Union

import psutil
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .const import (
    DEFAULT_CENTER_FRACTION,
    DEFAULT_DWELL_DT,
    DEFAULT_FOV,
    DEFAULT_G_MAX,
    DEFAULT_GAMMA,
    DEFAULT_GRID_OVERSAMPLING,
    DEFAULT_ITERS_PER_LEVEL,
    DEFAULT_KERNEL_WIDTH,
    DEFAULT_LAMBDA,
    DEFAULT_LAMBDA_COUNT,
    DEFAULT_LAMBDA_MAX,
    DEFAULT_LAMBDA_MIN,
    DEFAULT_LOUPE_EPOCHS,
    DEFAULT_LOUPE_SLOPE,
    DEFAULT_LOUPE_STEP,
    DEFAULT_MAX_HALVINGS,
    DEFAULT_N,
    DEFAULT_N_LEVELS,
    DEFAULT_N_SAMPLES,
    DEFAULT_N_SCALES,
    DEFAULT_N_SHOTS,
    DEFAULT_PIPE_ITERS,
    DEFAULT_PROJ_MAX_ITER,
    DEFAULT_PROJ_TOL,
    DEFAULT_RASTER_DT,
    DEFAULT_RECON_MAX_ITER,
    DEFAULT_RECON_TOL,
    DEFAULT_S_MAX,
    DEFAULT_STEP_SCALE,
    DEFAULT_VDS_CUTOFF,
    DEFAULT_VDS_DECAY,
    DEFAULT_WAVELET,
    INIT_FILE,
    INIT_GOLDEN_ANGLE,
)
from .exceptions import ConfigurationException
from .modules.constraints import ConstraintSet
from .modules.core import HardwareConfig, TrajectorySpec, acceleration_factor
from .modules.density import LoupeLiteParams, VdsParams
from .modules.nufft import NufftConfig
from .modules.recon import ReconConfig, WaveletConfig
from .modules.sparkling import SparklingConfig


def default_workers() -> int:
    """Physical core count, falling back to logical cores"""
    return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1


class RunConfig(BaseModel):
    """Flat pipeline configuration with documented defaults"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    # Hardware
    n: int = Field(DEFAULT_N, ge=8)
    fov: float = Field(DEFAULT_FOV, gt=0)
    g_max: float = Field(DEFAULT_G_MAX, gt=0)
    s_max: float = Field(DEFAULT_S_MAX, gt=0)
    raster_dt: float = Field(DEFAULT_RASTER_DT, gt=0)
    dwell_dt: float = Field(DEFAULT_DWELL_DT, gt=0)
    gamma: float = Field(DEFAULT_GAMMA, gt=0)

    # Trajectory
    n_shots: int = Field(DEFAULT_N_SHOTS, ge=1)
    n_samples: int = Field(DEFAULT_N_SAMPLES, ge=3)

    # SPARKLING
    n_levels: int = Field(DEFAULT_N_LEVELS, ge=1)
    iters_per_level: int = Field(DEFAULT_ITERS_PER_LEVEL, ge=1)
    step_scale: float = Field(DEFAULT_STEP_SCALE, gt=0)
    max_halvings: int = Field(DEFAULT_MAX_HALVINGS, ge=0)
    init: Literal["golden-angle-radial", "radial-inout", "file"] = INIT_GOLDEN_ANGLE
    init_file: Optional[str] = None
    seed: int = 0
    anchor_center: bool = True
    proj_tol: float = Field(DEFAULT_PROJ_TOL, gt=0)
    proj_max_iter: int = Field(DEFAULT_PROJ_MAX_ITER, ge=1)

    # Fourier operator
    nufft_mode: Literal["exact", "gridded"] = "gridded"
    kernel_width: int = Field(DEFAULT_KERNEL_WIDTH, ge=2, le=16)
    grid_oversampling: float = Field(DEFAULT_GRID_OVERSAMPLING, ge=1.25)
    pipe_iters: int = Field(DEFAULT_PIPE_ITERS, ge=1)

    # Reconstruction
    lam: float = Field(DEFAULT_LAMBDA, ge=0)
    max_iter: int = Field(DEFAULT_RECON_MAX_ITER, ge=1)
    tol: float = Field(DEFAULT_RECON_TOL, ge=0)
    wavelet: str = DEFAULT_WAVELET
    n_scales: int = Field(DEFAULT_N_SCALES, ge=1)
    dc_precondition: bool = True
    center_fraction: float = Field(DEFAULT_CENTER_FRACTION, gt=0, le=1)
    monotone: bool = True
    lambda_min: float = Field(DEFAULT_LAMBDA_MIN, gt=0)
    lambda_max: float = Field(DEFAULT_LAMBDA_MAX, gt=0)
    lambda_count: int = Field(DEFAULT_LAMBDA_COUNT, ge=1)

    # Densities
    vds_cutoff: float = Field(DEFAULT_VDS_CUTOFF, gt=0, le=1)
    vds_decay: float = Field(DEFAULT_VDS_DECAY, ge=0)
    loupe_sparsity: Optional[float] = Field(None, gt=0, lt=1)
    loupe_slope: float = Field(DEFAULT_LOUPE_SLOPE, gt=0)
    loupe_epochs: int = Field(DEFAULT_LOUPE_EPOCHS, ge=1)
    loupe_step: float = Field(DEFAULT_LOUPE_STEP, gt=0)

    # Execution
    workers: int = Field(default_factory=default_workers, ge=1)

    @model_validator(mode="after")
    def check_consistency(self) -> RunConfig:
        """Cross-key checks"""
        if self.init == INIT_FILE and not self.init_file:
            raise ValueError("init_file is required when init = 'file'")
        if self.lambda_min > self.lambda_max:
            raise ValueError("lambda_min must not exceed lambda_max")
        # Delegates the unit checks to the hardware model
        self.hardware()
        return self

    def hardware(self) -> HardwareConfig:
        """Hardware section"""
        return HardwareConfig(
            n=self.n,
            fov=self.fov,
            g_max=self.g_max,
            s_max=self.s_max,
            raster_dt=self.raster_dt,
            dwell_dt=self.dwell_dt,
            gamma=self.gamma,
        )

    def trajectory_spec(self) -> TrajectorySpec:
        """Shot budget"""
        return TrajectorySpec(
            n_shots=self.n_shots,
            n_samples=self.n_samples,
            hardware=self.hardware(),
        )

    def constraint_set(self) -> ConstraintSet:
        """Hardware constraint set for the configured shot length"""
        return ConstraintSet.from_spec(
            self.trajectory_spec(),
            anchor_center=self.anchor_center,
        )

    def sparkling(self) -> SparklingConfig:
        """Optimizer section"""
        return SparklingConfig(
            n_levels=self.n_levels,
            iters_per_level=self.iters_per_level,
            step_scale=self.step_scale,
            max_halvings=self.max_halvings,
            init=self.init,
            init_file=self.init_file,
            seed=self.seed,
            proj_tol=self.proj_tol,
            proj_max_iter=self.proj_max_iter,
        )

    def nufft(self) -> NufftConfig:
        """Fourier operator section"""
        return NufftConfig(
            mode=self.nufft_mode,
            kernel_width=self.kernel_width,
            grid_oversampling=self.grid_oversampling,
            pipe_iters=self.pipe_iters,
        )

    def recon(self, lam: Optional[float] = None) -> ReconConfig:
        """Reconstruction section, optionally overriding lambda"""
        return ReconConfig(
            lam=self.lam if lam is None else lam,
            max_iter=self.max_iter,
            tol=self.tol,
            wavelet=WaveletConfig(family=self.wavelet, n_scales=self.n_scales),
            dc_precondition=self.dc_precondition,
            monotone=self.monotone,
            pipe_iters=self.pipe_iters,
        )

    def vds(self) -> VdsParams:
        """Parametric density section"""
        return VdsParams(cutoff=self.vds_cutoff, decay=self.vds_decay)

    def loupe(self) -> LoupeLiteParams:
        """Learned density section, budget defaulting to 1/R"""
        sparsity = self.loupe_sparsity
        if sparsity is None:
            sparsity = min(0.999, 1.0 / acceleration_factor(self.trajectory_spec()))
        return LoupeLiteParams(
            target_sparsity=sparsity,
            slope=self.loupe_slope,
            epochs=self.loupe_epochs,
            step_size=self.loupe_step,
            seed=self.seed,
        )


def parse_run_config(values: dict) -> RunConfig:
    """Validate a key/value mapping"""
    try:
        return RunConfig(**values)
    except ValidationError as error:
        raise ConfigurationException(str(error)) from error


def load_run_config(path: Optional[Union[str, Path]]) -> RunConfig:
    """Load a flat TOML run configuration, filling defaults"""
    if path is None:
        return parse_run_config({})
    try:
        with open(path, "rb") as file:
            values = tomllib.load(file)
    except FileNotFoundError as error:
        raise ConfigurationException(f"Config file not found: {path}") from error
    except tomllib.TOMLDecodeError as error:
        raise ConfigurationException(f"Malformed config {path}: {error}") from error
    nested = [key for key, value in values.items() if isinstance(value, dict)]
    if nested:
        raise ConfigurationException(
            f"Config must be flat key/value pairs, found tables: {nested}"
        )
    return parse_run_config(values)
