"""SPARKLING MRI: Compressed Sensing Reconstruction

The synthesis problem

    min_z 1/2 sum_l || W^1/2 (A_l z - y_l / n) ||^2 + lambda ||z||_1,
    A_l z = F(S_l Psi* z) / n

is solved with FISTA. Scaling by 1/n makes A unitary on a full Cartesian
grid, so lambda is comparable across image sizes for unit-peak images.
"""
from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
import time
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..base import Base
from ..const import (
    DEFAULT_CENTER_FRACTION,
    DEFAULT_LAMBDA,
    DEFAULT_LAMBDA_COUNT,
    DEFAULT_LAMBDA_MAX,
    DEFAULT_LAMBDA_MIN,
    DEFAULT_PIPE_ITERS,
    DEFAULT_RECON_MAX_ITER,
    DEFAULT_RECON_TOL,
    POWER_ITERATIONS,
)
from ..exceptions import DataException, DegenerateGeometryException, DivergenceException
from ..utilities.concurrency import run_in_threads
from .metrics import auto_mask, psnr, ssim
from .nufft import DcWeights, NonUniformPlan, compensation_weights, pipe_weights
from .wavelet import WaveletConfig, check_config, wavelet_analysis, wavelet_synthesis

LIPSCHITZ_MARGIN = 1.1
SENSITIVITY_FLOOR = 1e-6

__all__ = [
    "CompositeOperator",
    "LambdaSearchResult",
    "ReconConfig",
    "ReconResult",
    "SensitivityMaps",
    "WaveletConfig",
    "cs_reconstruct",
    "dc_adjoint_reconstruct",
    "estimate_sensitivities",
    "lambda_search",
    "power_iteration",
    "soft_threshold",
    "wavelet_analysis",
    "wavelet_synthesis",
]


class ReconConfig(BaseModel):
    """FISTA settings"""

    model_config = ConfigDict(frozen=True)

    lam: float = Field(DEFAULT_LAMBDA, ge=0)
    max_iter: int = Field(DEFAULT_RECON_MAX_ITER, ge=1)
    tol: float = Field(DEFAULT_RECON_TOL, ge=0)
    wavelet: WaveletConfig = Field(default_factory=WaveletConfig)
    dc_precondition: bool = True
    monotone: bool = True
    pipe_iters: int = Field(DEFAULT_PIPE_ITERS, ge=1)


@dataclass(frozen=True)
class SensitivityMaps:
    """Coil sensitivities [L][n][n] with unit root-sum-of-squares on support"""

    maps: np.ndarray

    def __post_init__(self) -> None:
        """Validate"""
        maps = np.asarray(self.maps, dtype=np.complex128)
        if maps.ndim == 2:
            maps = maps[None]
        if maps.ndim != 3 or maps.shape[1] != maps.shape[2]:
            raise ValueError(f"Maps must be [L][n][n], got {maps.shape}")
        if not np.any(np.sum(np.abs(maps) ** 2, axis=0) > 0):
            raise ValueError("Sensitivity maps vanish everywhere")
        object.__setattr__(self, "maps", maps)

    @property
    def n_coils(self) -> int:
        """Coil count"""
        return self.maps.shape[0]

    @property
    def support(self) -> np.ndarray:
        """Pixels where at least one coil is sensitive"""
        return np.sum(np.abs(self.maps) ** 2, axis=0) > 0

    @classmethod
    def unit(cls, n: int) -> SensitivityMaps:
        """Single uniform coil"""
        return cls(np.ones((1, n, n), dtype=np.complex128))

    @classmethod
    def normalized(cls, coil_images: np.ndarray) -> SensitivityMaps:
        """Divide coil images by their root-sum-of-squares"""
        coil_images = np.asarray(coil_images, dtype=np.complex128)
        rss = np.sqrt(np.sum(np.abs(coil_images) ** 2, axis=0))
        peak = float(np.max(rss))
        if peak == 0:
            raise DegenerateGeometryException("Coil images are zero everywhere")
        support = rss > SENSITIVITY_FLOOR * peak
        maps = np.where(support, coil_images / np.where(support, rss, 1.0), 0.0)
        return cls(maps)


def soft_threshold(v: np.ndarray, tau: float) -> np.ndarray:
    """Magnitude shrinkage preserving phase"""
    magnitude = np.abs(v)
    scale = np.maximum(magnitude - tau, 0.0) / np.where(magnitude > 0, magnitude, 1.0)
    return v * scale


class CompositeOperator:
    """Coefficients to weighted multi-coil samples and back"""

    def __init__(
        self,
        plan: NonUniformPlan,
        maps: SensitivityMaps,
        wavelet: WaveletConfig,
        weights: Optional[DcWeights] = None,
    ) -> None:
        """Initialize"""
        if maps.maps.shape[1] != plan.n:
            raise DataException(
                f"Map side {maps.maps.shape[1]} does not match plan side {plan.n}"
            )
        check_config(wavelet, plan.n)
        self.plan = plan
        self.maps = maps
        self.wavelet = wavelet
        self.sqrt_weights = (
            np.ones(plan.n_samples) if weights is None else np.sqrt(weights.w)
        )

    def forward(self, z: np.ndarray) -> np.ndarray:
        """[n][n] coefficients to [L][P] weighted samples"""
        image = wavelet_synthesis(z, self.wavelet)
        coils = self.maps.maps * image[None]
        return self.plan.forward(coils) * self.sqrt_weights / self.plan.n

    def adjoint(self, samples: np.ndarray) -> np.ndarray:
        """[L][P] weighted samples to [n][n] coefficients"""
        coils = self.plan.adjoint(samples * self.sqrt_weights) / self.plan.n
        image = np.sum(np.conj(self.maps.maps) * coils, axis=0)
        return wavelet_analysis(image, self.wavelet)

    def weighted_data(self, kspace: np.ndarray) -> np.ndarray:
        """Measurements scaled like the operator output"""
        return np.asarray(kspace) * self.sqrt_weights / self.plan.n

    def normal(self, z: np.ndarray) -> np.ndarray:
        """A^H A z"""
        return self.adjoint(self.forward(z))


def power_iteration(
    normal: Callable[[np.ndarray], np.ndarray],
    shape: tuple[int, ...],
    iterations: int = POWER_ITERATIONS,
    seed: int = 0,
) -> float:
    """Largest eigenvalue of a Hermitian positive semidefinite operator"""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(iterations):
        w = normal(v)
        estimate = float(np.real(np.vdot(v, w)))
        norm = float(np.linalg.norm(w))
        if norm == 0:
            return 0.0
        v = w / norm
    return estimate


@dataclass
class ReconResult:
    """Reconstructed image with its optimization trace"""

    image: np.ndarray
    coefficients: np.ndarray
    objective: list[float] = field(default_factory=list)
    elapsed: list[float] = field(default_factory=list)
    lipschitz: float = 0.0

    @property
    def iterations(self) -> int:
        """FISTA iterations performed"""
        return max(0, len(self.objective) - 1)


class FistaSolver(Base):
    """FISTA with optional monotone safeguard"""

    def __init__(
        self,
        operator: CompositeOperator,
        cfg: ReconConfig,
    ) -> None:
        """Initialize"""
        super().__init__()
        self.operator = operator
        self.cfg = cfg

    def objective(self, z: np.ndarray, data: np.ndarray) -> float:
        """Data fidelity plus l1 penalty"""
        residual = self.operator.forward(z) - data
        return float(
            0.5 * np.sum(np.abs(residual) ** 2) + self.cfg.lam * np.sum(np.abs(z))
        )

    def solve(self, kspace: np.ndarray) -> ReconResult:
        """Minimize from z = 0"""
        cfg = self.cfg
        n = self.operator.plan.n
        data = self.operator.weighted_data(kspace)
        lipschitz = power_iteration(self.operator.normal, (n, n))
        if lipschitz <= 0:
            raise DegenerateGeometryException("Normal operator is zero")
        step = 1.0 / (LIPSCHITZ_MARGIN * lipschitz)

        z = np.zeros((n, n), dtype=np.complex128)
        v = z
        t = 1.0
        value = self.objective(z, data)
        trace = [value]
        start = time.perf_counter()
        elapsed = [0.0]
        self._logger.debug(
            "FISTA start: lambda=%s L=%.4e F0=%.6e", cfg.lam, lipschitz, value
        )

        for iteration in range(1, cfg.max_iter + 1):
            gradient = self.operator.adjoint(self.operator.forward(v) - data)
            candidate = soft_threshold(v - step * gradient, step * cfg.lam)
            candidate_value = self.objective(candidate, data)
            if not np.isfinite(candidate_value):
                raise DivergenceException(
                    f"Non-finite objective at iteration {iteration}", trace=trace
                )
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            accepted = not (cfg.monotone and candidate_value > value)
            kept, kept_value = (candidate, candidate_value) if accepted else (z, value)
            v = (
                kept
                + (t / t_next) * (candidate - kept)
                + ((t - 1.0) / t_next) * (kept - z)
            )
            z, t = kept, t_next
            change = abs(value - kept_value) / max(abs(value), 1e-300)
            value = kept_value
            trace.append(value)
            elapsed.append(time.perf_counter() - start)
            self._logger.debug("FISTA iteration %s: F=%.9e", iteration, value)
            if accepted and change < cfg.tol:
                break

        return ReconResult(
            image=wavelet_synthesis(z, cfg.wavelet),
            coefficients=z,
            objective=trace,
            elapsed=elapsed,
            lipschitz=lipschitz,
        )


def cs_reconstruct(
    kspace: np.ndarray,
    plan: NonUniformPlan,
    maps: SensitivityMaps,
    cfg: ReconConfig,
    weights: Optional[DcWeights] = None,
) -> ReconResult:
    """Wavelet-sparse reconstruction of multi-coil samples [L][P]"""
    kspace = np.atleast_2d(np.asarray(kspace, dtype=np.complex128))
    if kspace.shape != (maps.n_coils, plan.n_samples):
        raise DataException(
            f"k-space shape {kspace.shape} does not match "
            f"{maps.n_coils} coils x {plan.n_samples} samples"
        )
    if cfg.dc_precondition and weights is None:
        weights = compensation_weights(plan, cfg.pipe_iters)
    operator = CompositeOperator(
        plan,
        maps,
        cfg.wavelet,
        weights if cfg.dc_precondition else None,
    )
    return FistaSolver(operator, cfg).solve(kspace)


def estimate_sensitivities(
    kspace: np.ndarray,
    plan: NonUniformPlan,
    center_fraction: float = DEFAULT_CENTER_FRACTION,
    n_iter: int = DEFAULT_PIPE_ITERS,
) -> SensitivityMaps:
    """Self-calibrated maps from the density compensated k-space centre"""
    if not 0 < center_fraction <= 1:
        raise DataException(f"center_fraction must be in (0, 1], got {center_fraction}")
    kspace = np.atleast_2d(np.asarray(kspace, dtype=np.complex128))
    center = np.linalg.norm(plan.locations, axis=1) <= center_fraction
    if not center.any():
        raise DegenerateGeometryException(
            f"No samples within radius {center_fraction} of the k-space centre"
        )
    subset = plan.subset(center)
    weights = pipe_weights(subset, n_iter)
    coil_images = subset.adjoint(kspace[:, center], weights)
    return SensitivityMaps.normalized(coil_images)


def dc_adjoint_reconstruct(
    kspace: np.ndarray,
    plan: NonUniformPlan,
    maps: SensitivityMaps,
    weights: Optional[DcWeights] = None,
    n_iter: int = DEFAULT_PIPE_ITERS,
) -> np.ndarray:
    """Density compensated adjoint combined with the sensitivity maps"""
    if weights is None:
        weights = compensation_weights(plan, n_iter)
    kspace = np.atleast_2d(np.asarray(kspace, dtype=np.complex128))
    coils = plan.adjoint(kspace, weights) / plan.n**2
    return np.sum(np.conj(maps.maps) * coils, axis=0)


def lambda_grid(
    lambda_min: float = DEFAULT_LAMBDA_MIN,
    lambda_max: float = DEFAULT_LAMBDA_MAX,
    count: int = DEFAULT_LAMBDA_COUNT,
) -> list[float]:
    """Log-spaced regularization weights"""
    if count == 1:
        return [float(lambda_min)]
    return [float(value) for value in np.geomspace(lambda_min, lambda_max, count)]


@dataclass(frozen=True)
class LambdaTrial:
    """One row of a lambda sweep"""

    lam: float
    ssim: float
    psnr: float
    iterations: int
    error: Optional[str] = None


@dataclass(frozen=True)
class LambdaSearchResult:
    """Best regularization weight and the full sweep"""

    best_lambda: float
    best: Optional[ReconResult]
    table: list[LambdaTrial]


def lambda_search(
    kspace: np.ndarray,
    plan: NonUniformPlan,
    maps: SensitivityMaps,
    reference: np.ndarray,
    grid: Sequence[float],
    cfg: ReconConfig,
    mask: Optional[np.ndarray] = None,
    workers: int = 1,
) -> LambdaSearchResult:
    """Reconstruct at every lambda and keep the highest SSIM"""
    if len(grid) == 0:
        raise DataException("The lambda grid is empty")
    if mask is None:
        mask = auto_mask(reference)
    weights = (
        compensation_weights(plan, cfg.pipe_iters) if cfg.dc_precondition else None
    )

    def _trial(lam: float) -> Callable[[], ReconResult]:
        def _run() -> ReconResult:
            return cs_reconstruct(
                kspace, plan, maps, cfg.model_copy(update={"lam": lam}), weights
            )

        return _run

    outcomes = run_in_threads(
        [_trial(float(lam)) for lam in grid], workers, return_exceptions=True
    )
    table: list[LambdaTrial] = []
    best_index: Optional[int] = None
    for index, (lam, outcome) in enumerate(zip(grid, outcomes)):
        if isinstance(outcome, BaseException):
            table.append(
                LambdaTrial(float(lam), float("nan"), float("nan"), 0, str(outcome))
            )
            continue
        magnitude = np.abs(outcome.image)
        trial = LambdaTrial(
            lam=float(lam),
            ssim=ssim(reference, magnitude, mask),
            psnr=psnr(reference, magnitude, mask),
            iterations=outcome.iterations,
        )
        table.append(trial)
        if best_index is None or trial.ssim > table[best_index].ssim:
            best_index = index

    if best_index is None:
        raise DivergenceException("Every reconstruction of the sweep failed")
    best = outcomes[best_index]
    return LambdaSearchResult(
        best_lambda=table[best_index].lam,
        best=best,
        table=table,
    )
