"""SPARKLING MRI: Retrospective Study"""
from __future__ import annotations

import asyncio
from collections.abc import Sequence
import csv
from dataclasses import dataclass, field
import os
from pathlib import Path
import time
import tomllib
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .base import Base
from .const import (
    CONTRAST_T1,
    DENSITY_METHODS,
    RESULTS_COLUMNS,
    SUMMARY_COLUMNS,
    TIMINGS_COLUMNS,
)
from .exceptions import DataException, DivergenceException, ManifestException
from .modules import build_density
from .modules.core import Trajectory, acceleration_factor
from .modules.density import VdsParams
from .modules.metrics import QualityReport, score
from .modules.nufft import DcWeights, NonUniformPlan, compensation_weights
from .modules.phantom import coil_maps, simulate_coils
from .modules.recon import (
    SensitivityMaps,
    cs_reconstruct,
    estimate_sensitivities,
    lambda_grid,
    lambda_search,
)
from .modules.sparkling import generate, sample_dwell_points
from .settings import RunConfig, load_run_config
from .utilities.concurrency import gather_in_threads
from .utilities.tensor import read_tensor

FAILURES_COLUMNS = ["slice_id", "density_method", "error"]


class SliceEntry(BaseModel):
    """One reference image of the study"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    file: str
    contrast: Literal["t1", "t2"] = CONTRAST_T1
    id: Optional[str] = None

    @property
    def slice_id(self) -> str:
        """Identifier used in the result tables"""
        return self.id or Path(self.file).stem


class StudyManifest(BaseModel):
    """Slices, density methods and run settings of a retrospective study"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    slices: list[SliceEntry] = Field(min_length=1)
    density_methods: list[str] = Field(default_factory=lambda: list(DENSITY_METHODS))
    training: list[str] = Field(default_factory=list)
    config: Optional[str] = None
    output_dir: str = "results"
    seed: int = 0
    n_coils: int = Field(1, ge=1)
    coil_model: Literal["gaussian", "birdcage"] = "gaussian"
    lam: Optional[float] = Field(None, ge=0)
    tune_lambda: bool = False
    record_timings: bool = False

    @field_validator("density_methods")
    @classmethod
    def check_methods(cls, value: list[str]) -> list[str]:
        """Known methods, each at most once"""
        unknown = sorted(set(value) - set(DENSITY_METHODS))
        if unknown:
            raise ValueError(f"Unknown density methods: {unknown}")
        if len(set(value)) != len(value):
            raise ValueError("Density methods must not repeat")
        if not value:
            raise ValueError("At least one density method is required")
        return value

    def resolved(self, base: Path) -> StudyManifest:
        """Paths made absolute against the manifest directory"""

        def _resolve(path: str) -> str:
            return str(path if Path(path).is_absolute() else base / path)

        return self.model_copy(
            update={
                "slices": [
                    entry.model_copy(update={"file": _resolve(entry.file)})
                    for entry in self.slices
                ],
                "training": [_resolve(path) for path in self.training],
                "config": None if self.config is None else _resolve(self.config),
                "output_dir": _resolve(self.output_dir),
            }
        )

    def check_paths(self) -> None:
        """Every referenced file exists and the output directory is writable"""
        referenced = [entry.file for entry in self.slices] + list(self.training)
        if self.config is not None:
            referenced.append(self.config)
        missing = [path for path in referenced if not Path(path).is_file()]
        if missing:
            raise ManifestException(f"Missing input files: {missing}")
        slice_ids = [entry.slice_id for entry in self.slices]
        if len(set(slice_ids)) != len(slice_ids):
            raise ManifestException("Slice identifiers must be unique")
        output = Path(self.output_dir)
        try:
            output.mkdir(parents=True, exist_ok=True)
        except OSError as error:
            raise ManifestException(f"Cannot create {output}: {error}") from error
        if not os.access(output, os.W_OK):
            raise ManifestException(f"Output directory {output} is not writable")


def load_manifest(path: Union[str, Path]) -> StudyManifest:
    """Load, resolve and validate a TOML manifest"""
    path = Path(path)
    try:
        with open(path, "rb") as file:
            values = tomllib.load(file)
    except FileNotFoundError as error:
        raise ManifestException(f"Manifest not found: {path}") from error
    except tomllib.TOMLDecodeError as error:
        raise ManifestException(f"Malformed manifest {path}: {error}") from error
    try:
        manifest = StudyManifest(**values)
    except ValidationError as error:
        raise ManifestException(str(error)) from error
    manifest = manifest.resolved(path.parent)
    manifest.check_paths()
    return manifest


def read_image(path: Union[str, Path], n: Optional[int] = None) -> np.ndarray:
    """Magnitude reference image [n][n]"""
    data = np.abs(read_tensor(path).data).astype(np.float64)
    if data.ndim != 2 or data.shape[0] != data.shape[1]:
        raise ManifestException(f"{path} is not a square image: {data.shape}")
    if n is not None and data.shape[0] != n:
        raise ManifestException(f"{path} has side {data.shape[0]}, expected {n}")
    return data


def dwell_plan(trajectory: Trajectory, cfg: RunConfig) -> NonUniformPlan:
    """Operator plan on the ADC samples, `oversampling` per raster interval"""
    hardware = trajectory.spec.hardware
    dwell = sample_dwell_points(trajectory, hardware.oversampling)
    return NonUniformPlan.from_config(dwell, hardware.n, cfg.nufft())


@dataclass
class Acquisition:
    """Sample geometry of one trajectory, shared by every slice"""

    trajectory: Trajectory
    plan: NonUniformPlan
    weights: DcWeights

    @classmethod
    def from_trajectory(cls, trajectory: Trajectory, cfg: RunConfig) -> Acquisition:
        """Dwell-time samples, operator plan and compensation weights"""
        plan = dwell_plan(trajectory, cfg)
        return cls(trajectory, plan, compensation_weights(plan, cfg.pipe_iters))

    def simulate(self, image: np.ndarray, maps: np.ndarray) -> np.ndarray:
        """Multi-coil k-space [L][P] of a reference image"""
        return np.atleast_2d(self.plan.forward(simulate_coils(image, maps)))


def simulate_acquisition(
    image: np.ndarray,
    trajectory: Trajectory,
    maps: np.ndarray,
    cfg: RunConfig,
) -> tuple[np.ndarray, NonUniformPlan]:
    """k-space of coil images on the dwell-time samples of a trajectory"""
    plan = dwell_plan(trajectory, cfg)
    return np.atleast_2d(plan.forward(simulate_coils(image, maps))), plan


@dataclass
class SliceOutcome:
    """Scores and stage timings of one reconstruction"""

    slice_id: str
    contrast: str
    method: str
    lam: float
    report: QualityReport
    iterations: int
    timings: dict[str, float]


@dataclass
class StudyResult:
    """Rows of every output table"""

    rows: list[dict] = field(default_factory=list)
    timings: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)


def _milliseconds(start: float) -> float:
    return (time.perf_counter() - start) * 1e3


def reconstruct_slice(
    image: np.ndarray,
    acquisition: Acquisition,
    maps: np.ndarray,
    cfg: RunConfig,
    lam: float,
) -> tuple[np.ndarray, int, dict[str, float]]:
    """Acquire, calibrate and reconstruct one reference image"""
    timings: dict[str, float] = {}
    start = time.perf_counter()
    kspace = acquisition.simulate(image, maps)
    timings["acquire_ms"] = _milliseconds(start)

    start = time.perf_counter()
    if kspace.shape[0] == 1:
        sensitivities = SensitivityMaps.unit(image.shape[0])
    else:
        sensitivities = estimate_sensitivities(
            kspace, acquisition.plan, cfg.center_fraction, cfg.pipe_iters
        )
    timings["calibrate_ms"] = _milliseconds(start)

    start = time.perf_counter()
    result = cs_reconstruct(
        kspace,
        acquisition.plan,
        sensitivities,
        cfg.recon(lam),
        acquisition.weights,
    )
    timings["recon_ms"] = _milliseconds(start)
    return np.abs(result.image), result.iterations, timings


def _quartiles(values: Sequence[float]) -> tuple[float, float, float]:
    q1, median, q3 = np.percentile(np.asarray(values, dtype=np.float64), [25, 50, 75])
    return float(median), float(q1), float(q3)


def summarize(outcomes: Sequence[SliceOutcome]) -> list[dict]:
    """Median and quartiles of SSIM and PSNR per density method and contrast"""
    groups: dict[tuple[str, str], list[SliceOutcome]] = {}
    for outcome in outcomes:
        groups.setdefault((outcome.method, outcome.contrast), []).append(outcome)
    summary = []
    for (method, contrast), members in sorted(groups.items()):
        ssim_median, ssim_q1, ssim_q3 = _quartiles([m.report.ssim for m in members])
        psnr_median, psnr_q1, psnr_q3 = _quartiles(
            [min(m.report.psnr, np.finfo(float).max) for m in members]
        )
        summary.append(
            {
                "density_method": method,
                "contrast": contrast,
                "count": len(members),
                "ssim_median": ssim_median,
                "ssim_q1": ssim_q1,
                "ssim_q3": ssim_q3,
                "psnr_median": psnr_median,
                "psnr_q1": psnr_q1,
                "psnr_q3": psnr_q3,
            }
        )
    return summary


def _format(value: object) -> str:
    if isinstance(value, float):
        if np.isinf(value):
            return "inf"
        return f"{value:.6f}"
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict]) -> None:
    """Fixed columns, fixed float formatting, LF line endings"""
    with open(path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format(row.get(column, "")) for column in columns])


class Study(Base):
    """Density to trajectory to reconstruction to scores, for every method"""

    def __init__(
        self,
        manifest: StudyManifest,
        cfg: Optional[RunConfig] = None,
    ) -> None:
        """Initialize"""
        super().__init__()
        self.manifest = manifest
        self.cfg = cfg or load_run_config(manifest.config)
        self.cfg = self.cfg.model_copy(update={"seed": manifest.seed})
        self.images = {
            entry.slice_id: read_image(entry.file, self.cfg.n)
            for entry in manifest.slices
        }
        self.training = [read_image(path, self.cfg.n) for path in manifest.training]
        self.maps = coil_maps(self.cfg.n, manifest.n_coils, manifest.coil_model)

    def trajectory(self, method: str) -> Trajectory:
        """Target density for `method`, then a SPARKLING trajectory on it"""
        training = self.training or list(self.images.values())
        rho = build_density(
            method,
            self.cfg.n,
            training,
            vds=self.cfg.vds(),
            loupe=self.cfg.loupe(),
        )
        self._logger.info("Generating trajectory for %s", method)
        return generate(
            rho,
            self.cfg.trajectory_spec(),
            self.cfg.constraint_set(),
            self.cfg.sparkling(),
        )

    def choose_lambda(self, acquisition: Acquisition) -> float:
        """Fixed lambda, or the best of a sweep on the first slice"""
        if not self.manifest.tune_lambda:
            return self.cfg.lam if self.manifest.lam is None else self.manifest.lam
        first = self.manifest.slices[0].slice_id
        image = self.images[first]
        kspace = acquisition.simulate(image, self.maps)
        sensitivities = (
            SensitivityMaps.unit(self.cfg.n)
            if kspace.shape[0] == 1
            else estimate_sensitivities(
                kspace, acquisition.plan, self.cfg.center_fraction, self.cfg.pipe_iters
            )
        )
        search = lambda_search(
            kspace,
            acquisition.plan,
            sensitivities,
            image,
            lambda_grid(self.cfg.lambda_min, self.cfg.lambda_max, self.cfg.lambda_count),
            self.cfg.recon(),
            workers=1,
        )
        self._logger.info("Tuned lambda on %s: %s", first, search.best_lambda)
        return search.best_lambda

    def prepare(self, method: str) -> tuple[Acquisition, float]:
        """Trajectory, acquisition plan and lambda of one density method"""
        acquisition = Acquisition.from_trajectory(self.trajectory(method), self.cfg)
        return acquisition, self.choose_lambda(acquisition)

    def _slice(
        self,
        entry: SliceEntry,
        method: str,
        acquisition: Acquisition,
        lam: float,
    ) -> SliceOutcome:
        image = self.images[entry.slice_id]
        magnitude, iterations, timings = reconstruct_slice(
            image, acquisition, self.maps, self.cfg, lam
        )
        start = time.perf_counter()
        report = score(image, magnitude)
        timings["score_ms"] = _milliseconds(start)
        self._logger.debug(
            "%s / %s: SSIM=%.4f PSNR=%.2f", entry.slice_id, method, report.ssim, report.psnr
        )
        return SliceOutcome(
            slice_id=entry.slice_id,
            contrast=entry.contrast,
            method=method,
            lam=lam,
            report=report,
            iterations=iterations,
            timings=timings,
        )

    async def run(self) -> StudyResult:
        """Run every (method, slice) pair, recording failures"""
        workers = self.cfg.workers
        methods = self.manifest.density_methods
        self._logger.info(
            "Study: %s slices x %s methods on %s workers",
            len(self.manifest.slices),
            len(methods),
            workers,
        )
        prepared = await gather_in_threads(
            [lambda method=method: self.prepare(method) for method in methods],
            workers,
            return_exceptions=True,
        )

        result = StudyResult()
        acquisitions: dict[str, Acquisition] = {}
        lambdas: dict[str, float] = {}
        for method, outcome in zip(methods, prepared):
            if isinstance(outcome, Exception):
                self._logger.error("Method %s failed: %s", method, outcome)
                result.failures.extend(
                    {
                        "slice_id": entry.slice_id,
                        "density_method": method,
                        "error": f"{type(outcome).__name__}: {outcome}",
                    }
                    for entry in self.manifest.slices
                )
                continue
            if isinstance(outcome, BaseException):
                raise outcome
            acquisitions[method], lambdas[method] = outcome

        pairs = [
            (entry, method)
            for entry in self.manifest.slices
            for method in methods
            if method in acquisitions
        ]
        outcomes = await gather_in_threads(
            [
                lambda entry=entry, method=method: self._slice(
                    entry, method, acquisitions[method], lambdas[method]
                )
                for entry, method in pairs
            ],
            workers,
            return_exceptions=True,
        )

        succeeded: list[SliceOutcome] = []
        for (entry, method), outcome in zip(pairs, outcomes):
            if isinstance(outcome, Exception):
                self._logger.error(
                    "Slice %s with %s failed: %s", entry.slice_id, method, outcome
                )
                result.failures.append(
                    {
                        "slice_id": entry.slice_id,
                        "density_method": method,
                        "error": f"{type(outcome).__name__}: {outcome}",
                    }
                )
                continue
            if isinstance(outcome, BaseException):
                raise outcome
            succeeded.append(outcome)

        succeeded.sort(key=lambda outcome: (outcome.slice_id, outcome.method))
        for outcome in succeeded:
            spec = acquisitions[outcome.method].trajectory.spec
            result.rows.append(
                {
                    "slice_id": outcome.slice_id,
                    "density_method": outcome.method,
                    "R": acceleration_factor(spec),
                    "lambda": outcome.lam,
                    "ssim": outcome.report.ssim,
                    "psnr": outcome.report.psnr,
                    "recon_iters": outcome.iterations,
                    "wall_ms": (
                        sum(outcome.timings.values())
                        if self.manifest.record_timings
                        else ""
                    ),
                }
            )
            result.timings.append(
                {
                    "slice_id": outcome.slice_id,
                    "density_method": outcome.method,
                    **outcome.timings,
                }
            )
        result.failures.sort(key=lambda row: (row["slice_id"], row["density_method"]))
        result.summary = summarize(succeeded)
        self._logger.info(
            "Study finished: %s reconstructions, %s failures",
            len(succeeded),
            len(result.failures),
        )
        return result

    def write(self, result: StudyResult) -> None:
        """results.csv, summary.csv and the optional sidecars"""
        output = Path(self.manifest.output_dir)
        write_csv(output / "results.csv", RESULTS_COLUMNS, result.rows)
        write_csv(output / "summary.csv", SUMMARY_COLUMNS, result.summary)
        if self.manifest.record_timings:
            write_csv(output / "timings.csv", TIMINGS_COLUMNS, result.timings)
        if result.failures:
            write_csv(output / "failures.csv", FAILURES_COLUMNS, result.failures)
        self._logger.info("Wrote study tables to %s", output)


def run_retrospective(
    manifest: StudyManifest,
    cfg: Optional[RunConfig] = None,
) -> StudyResult:
    """Run a study and write its tables"""
    study = Study(manifest, cfg)
    result = asyncio.run(study.run())
    study.write(result)
    return result


@dataclass(frozen=True)
class VdsSearchResult:
    """Best radial density parameters and the median SSIM of every pair"""

    best: VdsParams
    table: list[tuple[float, float, float]]


def vds_search(
    images: Sequence[np.ndarray],
    cfg: RunConfig,
    cutoffs: Sequence[float],
    decays: Sequence[float],
    n_coils: int = 1,
) -> VdsSearchResult:
    """Grid search of (cutoff, decay) by median SSIM on validation images"""
    if not images or not cutoffs or not decays:
        raise DataException("vds_search needs images, cutoffs and decays")
    maps = coil_maps(cfg.n, n_coils)
    table: list[tuple[float, float, float]] = []
    best: Optional[VdsParams] = None
    best_score = -np.inf
    for cutoff in cutoffs:
        for decay in decays:
            params = VdsParams(cutoff=cutoff, decay=decay)
            rho = build_density("vds", cfg.n, vds=params)
            trajectory = generate(
                rho, cfg.trajectory_spec(), cfg.constraint_set(), cfg.sparkling()
            )
            acquisition = Acquisition.from_trajectory(trajectory, cfg)
            scores = []
            for image in images:
                magnitude, _, _ = reconstruct_slice(
                    image, acquisition, maps, cfg, cfg.lam
                )
                scores.append(score(image, magnitude).ssim)
            median = float(np.median(scores))
            table.append((float(cutoff), float(decay), median))
            if median > best_score:
                best, best_score = params, median
    if best is None:
        raise DivergenceException("No VDS candidate produced a finite score")
    return VdsSearchResult(best=best, table=table)
