"""SPARKLING MRI: Target Densities"""
from __future__ import annotations

from collections.abc import Sequence
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import fft

from ..base import Base
from ..const import (
    DEFAULT_LOUPE_EPOCHS,
    DEFAULT_LOUPE_SLOPE,
    DEFAULT_LOUPE_STEP,
    DEFAULT_VDS_CUTOFF,
    DEFAULT_VDS_DECAY,
    LOG_SPECTRUM_FLOOR,
)
from ..exceptions import DataException, OptimizationException
from .core import DensityGrid, cell_radius

MAX_STEP_HALVINGS = 40
STEP_GROWTH = 2.0
INIT_MARGIN = 0.05
FLAT_TOLERANCE = 1e-9


class VdsParams(BaseModel):
    """Radially decaying density parameters"""

    model_config = ConfigDict(frozen=True)

    cutoff: float = Field(DEFAULT_VDS_CUTOFF, gt=0, le=1)
    decay: float = Field(DEFAULT_VDS_DECAY, ge=0)


class LoupeLiteParams(BaseModel):
    """Learned Cartesian probability map parameters"""

    model_config = ConfigDict(frozen=True)

    target_sparsity: float = Field(0.4, gt=0, lt=1)
    slope: float = Field(DEFAULT_LOUPE_SLOPE, gt=0)
    epochs: int = Field(DEFAULT_LOUPE_EPOCHS, ge=1)
    step_size: float = Field(DEFAULT_LOUPE_STEP, gt=0)
    seed: int = 0


def vds_density(n: int, p: VdsParams) -> DensityGrid:
    """Plateau of radius C followed by a (C/r)^D decay"""
    if n < 8:
        raise DataException(f"Grid side must be at least 8, got {n}")
    radius = cell_radius(n)
    with np.errstate(divide="ignore"):
        decay = np.where(
            radius < p.cutoff,
            1.0,
            (p.cutoff / np.maximum(radius, 1e-300)) ** p.decay,
        )
    return DensityGrid.from_weights(
        decay, method="vds", cutoff=p.cutoff, decay=p.decay
    )


def _image_stack(images: Sequence[np.ndarray]) -> np.ndarray:
    """Validate a dataset and stack its magnitudes"""
    if len(images) == 0:
        raise DataException("At least one image is required")
    shapes = {np.shape(image) for image in images}
    if len(shapes) != 1:
        raise DataException(f"Images have mismatched shapes: {sorted(shapes)}")
    shape = shapes.pop()
    if len(shape) != 2 or shape[0] != shape[1]:
        raise DataException(f"Images must be square 2D arrays, got {shape}")
    return np.abs(np.stack([np.asarray(image) for image in images])).astype(
        np.float64
    )


def centered_spectrum(images: np.ndarray) -> np.ndarray:
    """Centered 2D DFT over the last two axes"""
    return fft.fftshift(
        fft.fft2(fft.ifftshift(images, axes=(-2, -1)), workers=-1),
        axes=(-2, -1),
    )


def _normalize_spectrum(average: np.ndarray, **meta) -> DensityGrid:
    """Subtract the minimum and normalize to unit mass"""
    shifted = average - np.min(average)
    if np.max(shifted) <= FLAT_TOLERANCE * np.max(np.abs(average)):
        # A dataset with a perfectly flat spectrum carries no preference
        shifted = np.ones_like(average)
    return DensityGrid.from_weights(shifted, **meta)


def spectrum_density(images: Sequence[np.ndarray]) -> DensityGrid:
    """Density proportional to the dataset's mean spectrum magnitude"""
    stack = _image_stack(images)
    average = np.mean(np.abs(centered_spectrum(stack)), axis=0)
    return _normalize_spectrum(average, method="spectrum", count=len(stack))


def log_spectrum_density(images: Sequence[np.ndarray]) -> DensityGrid:
    """Density proportional to the dataset's mean log-spectrum magnitude"""
    stack = _image_stack(images)
    magnitude = np.abs(centered_spectrum(stack))
    floor = LOG_SPECTRUM_FLOOR * np.max(magnitude, axis=(-2, -1), keepdims=True)
    floor = np.where(floor > 0, floor, LOG_SPECTRUM_FLOOR)
    average = np.mean(np.log(np.maximum(magnitude, floor)), axis=0)
    return _normalize_spectrum(average, method="log-spectrum", count=len(stack))


def density_entropy(rho: DensityGrid) -> float:
    """Shannon entropy in nats"""
    values = rho.values[rho.values > 0]
    return float(-np.sum(values * np.log(values)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function"""
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    exp_x = np.exp(x[~positive])
    out[~positive] = exp_x / (1.0 + exp_x)
    return out


class LoupeLite(Base):
    """Cartesian probability map learned against a linear reconstruction

    The acquisition keeps frequency k with probability P[k]; the
    reconstruction is the zero-filled inverse DFT of the expected
    measurements, so the mean squared error is quadratic in P.
    """

    def __init__(
        self,
        params: LoupeLiteParams,
    ) -> None:
        """Initialize"""
        super().__init__()
        self._params = params
        self._power: Optional[np.ndarray] = None
        self.weights: Optional[np.ndarray] = None
        self.losses: list[float] = []
        self.budget_errors: list[float] = []

    def fit_power(self, images: Sequence[np.ndarray]) -> np.ndarray:
        """Mean unitary power spectrum of the training set"""
        stack = _image_stack(images)
        spectra = centered_spectrum(stack) / stack.shape[-1]
        self._power = np.mean(np.abs(spectra) ** 2, axis=0)
        return self._power

    def initial_weights(self, n: int) -> np.ndarray:
        """Latent weights whose sigmoid is uniform in (margin, 1 - margin)"""
        rng = np.random.default_rng(self._params.seed)
        uniform = rng.uniform(INIT_MARGIN, 1.0 - INIT_MARGIN, size=(n, n))
        return np.log(uniform / (1.0 - uniform)) / self._params.slope

    def probability(self, weights: np.ndarray) -> np.ndarray:
        """Sigmoid followed by the sparsity-budget renormalization"""
        gamma = self._params.target_sparsity
        sig = sigmoid(self._params.slope * weights)
        mean = float(np.mean(sig))
        if mean >= gamma:
            return sig * (gamma / mean)
        return 1.0 - (1.0 - sig) * ((1.0 - gamma) / (1.0 - mean))

    @staticmethod
    def reconstruct(
        probability: np.ndarray,
        images: np.ndarray,
    ) -> np.ndarray:
        """Expected zero-filled reconstruction of every image"""
        spectra = centered_spectrum(images)
        return fft.fftshift(
            fft.ifft2(
                fft.ifftshift(probability * spectra, axes=(-2, -1)),
                workers=-1,
            ),
            axes=(-2, -1),
        )

    def _require_power(self) -> np.ndarray:
        if self._power is None:
            raise DataException("Call fit_power before evaluating the loss")
        return self._power

    def loss(self, weights: np.ndarray) -> float:
        """Mean squared reconstruction error over images and pixels"""
        power = self._require_power()
        probability = self.probability(weights)
        return float(np.mean((1.0 - probability) ** 2 * power))

    def gradient(self, weights: np.ndarray) -> np.ndarray:
        """Exact gradient of the loss with respect to the latent weights"""
        power = self._require_power()
        gamma = self._params.target_sparsity
        slope = self._params.slope
        count = weights.size

        sig = sigmoid(slope * weights)
        mean = float(np.mean(sig))
        if mean >= gamma:
            scale = gamma / mean
            probability = sig * scale
        else:
            scale = (1.0 - gamma) / (1.0 - mean)
            probability = 1.0 - (1.0 - sig) * scale

        grad_p = -2.0 * (1.0 - probability) * power / count
        if mean >= gamma:
            grad_sig = scale * grad_p - gamma / (mean**2 * count) * np.sum(
                grad_p * sig
            )
        else:
            grad_sig = scale * grad_p - (1.0 - gamma) / (
                (1.0 - mean) ** 2 * count
            ) * np.sum(grad_p * (1.0 - sig))
        return grad_sig * slope * sig * (1.0 - sig)

    def learn(self, images: Sequence[np.ndarray]) -> DensityGrid:
        """Gradient descent with backtracking on the latent weights"""
        power = self.fit_power(images)
        n = power.shape[0]
        gamma = self._params.target_sparsity
        weights = self.initial_weights(n)
        step = self._params.step_size
        current = self.loss(weights)
        self.losses = [current]
        self.budget_errors = [abs(float(np.mean(self.probability(weights))) - gamma)]
        self._logger.info(
            "Learning LOUPE-lite density: n=%s gamma=%s epochs=%s",
            n,
            gamma,
            self._params.epochs,
        )

        for epoch in range(1, self._params.epochs + 1):
            grad = self.gradient(weights)
            if not np.all(np.isfinite(grad)):
                raise OptimizationException(
                    f"Non-finite gradient at epoch {epoch}", epoch=epoch
                )
            accepted = False
            for _ in range(MAX_STEP_HALVINGS):
                candidate = weights - step * grad
                value = self.loss(candidate)
                if not np.isfinite(value):
                    raise OptimizationException(
                        f"Non-finite loss at epoch {epoch}", epoch=epoch
                    )
                if value <= current:
                    accepted = True
                    break
                step /= 2.0
            if not accepted:
                self._logger.debug("No descent step found at epoch %s", epoch)
                self.losses.append(current)
                self.budget_errors.append(self.budget_errors[-1])
                continue
            weights = candidate
            current = value
            step *= STEP_GROWTH
            self.losses.append(current)
            self.budget_errors.append(
                abs(float(np.mean(self.probability(weights))) - gamma)
            )
            self._logger.debug("Epoch %s: loss=%.6e step=%.3e", epoch, current, step)

        self.weights = weights
        probability = self.probability(weights)
        self._logger.info("LOUPE-lite finished: loss=%.6e", current)
        return DensityGrid.from_weights(
            probability,
            method="loupe-lite",
            target_sparsity=gamma,
            slope=self._params.slope,
            epochs=self._params.epochs,
        )


def loupe_lite_learn(
    images: Sequence[np.ndarray],
    p: LoupeLiteParams,
) -> DensityGrid:
    """Learn a probability map and return it as a density"""
    return LoupeLite(p).learn(images)
