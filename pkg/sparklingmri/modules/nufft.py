"""SPARKLING MRI: Non-Uniform Fourier Operators

A normalized location k in [-1, 1]^2 is the frequency index k * n / 2, and
pixel r runs over i - n / 2 for i in [0, n). The forward operator is

    y_q = sum_r x[r] exp(-i pi <k_q, r>)

so samples on the grid k = 2 m / n equal the centered DFT of the image.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import logging
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import fft, sparse, special

from ..base import Base
from ..const import (
    DEFAULT_GRID_OVERSAMPLING,
    DEFAULT_KERNEL_WIDTH,
    DEFAULT_PIPE_ITERS,
    NUFFT_MODE_EXACT,
    NUFFT_MODE_GRIDDED,
)
from ..exceptions import DataException, DegenerateGeometryException

EXACT_BLOCK = 4096
PIPE_EPSILON = 1e-12

logger = logging.getLogger(__name__)


class NufftConfig(BaseModel):
    """Operator mode and gridding kernel parameters"""

    model_config = ConfigDict(frozen=True)

    mode: Literal["exact", "gridded"] = NUFFT_MODE_GRIDDED
    kernel_width: int = Field(DEFAULT_KERNEL_WIDTH, ge=2, le=16)
    grid_oversampling: float = Field(DEFAULT_GRID_OVERSAMPLING, ge=1.25)
    pipe_iters: int = Field(DEFAULT_PIPE_ITERS, ge=1)


def kaiser_bessel_beta(width: int, oversampling: float) -> float:
    """Shape parameter minimizing aliasing for the given width and grid"""
    return float(
        np.pi
        * np.sqrt(
            (width / oversampling) ** 2 * (oversampling - 0.5) ** 2 - 0.8
        )
    )


def kaiser_bessel(distance: np.ndarray, width: int, beta: float) -> np.ndarray:
    """Kernel normalized to 1 at the origin, zero beyond width / 2"""
    ratio = 2.0 * np.asarray(distance) / width
    inside = np.abs(ratio) <= 1.0
    root = np.sqrt(np.clip(1.0 - ratio**2, 0.0, None))
    return np.where(inside, special.i0(beta * root) / special.i0(beta), 0.0)


def kaiser_bessel_transform(
    frequency: np.ndarray,
    width: int,
    beta: float,
) -> np.ndarray:
    """Continuous Fourier transform of the normalized kernel"""
    arg = beta**2 - (np.pi * width * np.asarray(frequency)) ** 2
    root = np.sqrt(np.abs(arg))
    safe = np.where(root == 0, 1.0, root)
    value = np.where(
        arg > 0,
        np.sinh(safe) / safe,
        np.where(root == 0, 1.0, np.sin(safe) / safe),
    )
    return width * value / special.i0(beta)


def centered_fft2(image: np.ndarray) -> np.ndarray:
    """Centered forward DFT over the last two axes"""
    return fft.fftshift(
        fft.fft2(fft.ifftshift(image, axes=(-2, -1)), workers=-1), axes=(-2, -1)
    )


def centered_ifft2(kspace: np.ndarray) -> np.ndarray:
    """Centered inverse DFT over the last two axes, without 1/N scaling"""
    size = kspace.shape[-1] * kspace.shape[-2]
    return size * fft.fftshift(
        fft.ifft2(fft.ifftshift(kspace, axes=(-2, -1)), workers=-1), axes=(-2, -1)
    )


class NonUniformPlan(Base):
    """Immutable sample geometry with precomputed operator tables"""

    def __init__(
        self,
        locations: np.ndarray,
        n: int,
        mode: str = NUFFT_MODE_GRIDDED,
        kernel_width: int = DEFAULT_KERNEL_WIDTH,
        grid_oversampling: float = DEFAULT_GRID_OVERSAMPLING,
    ) -> None:
        """Initialize"""
        super().__init__()
        locations = np.asarray(locations, dtype=np.float64).reshape(-1, 2)
        if len(locations) == 0:
            raise DataException("A plan needs at least one sample location")
        if not np.all(np.isfinite(locations)) or np.max(np.abs(locations)) > 1.0:
            raise DataException("Sample locations must lie in [-1, 1]^2")
        if mode not in (NUFFT_MODE_EXACT, NUFFT_MODE_GRIDDED):
            raise DataException(f"Unknown operator mode: {mode}")
        if n < 2 or n % 2:
            raise DataException(f"Image side must be even, got {n}")
        locations.flags.writeable = False
        self.locations = locations
        self.n = n
        self.mode = mode
        self.kernel_width = kernel_width
        self.grid_oversampling = grid_oversampling
        self.grid = 2 * int(np.ceil(grid_oversampling * n / 2))
        self.beta = kaiser_bessel_beta(kernel_width, self.grid / n)

    @classmethod
    def from_config(
        cls,
        locations: np.ndarray,
        n: int,
        cfg: NufftConfig,
    ) -> NonUniformPlan:
        """Plan built from a configuration section"""
        return cls(
            locations,
            n,
            mode=cfg.mode,
            kernel_width=cfg.kernel_width,
            grid_oversampling=cfg.grid_oversampling,
        )

    @property
    def n_samples(self) -> int:
        """Number of sample locations"""
        return len(self.locations)

    def subset(self, mask: np.ndarray) -> NonUniformPlan:
        """Plan restricted to the selected samples"""
        return NonUniformPlan(
            self.locations[mask],
            self.n,
            mode=self.mode,
            kernel_width=self.kernel_width,
            grid_oversampling=self.grid_oversampling,
        )

    @cached_property
    def pixel_offsets(self) -> np.ndarray:
        """Symmetric pixel coordinates i - n / 2"""
        return np.arange(self.n) - self.n / 2.0

    @cached_property
    def deapodization(self) -> np.ndarray:
        """Separable kernel transform over the image pixels"""
        profile = kaiser_bessel_transform(
            self.pixel_offsets / self.grid, self.kernel_width, self.beta
        )
        return np.outer(profile, profile)

    @cached_property
    def interpolator(self) -> sparse.csr_matrix:
        """Sparse [P][G^2] kernel weights from the oversampled grid to samples"""
        grid = self.grid
        width = self.kernel_width
        u = self.locations * grid / 2.0
        first = np.floor(u - width / 2.0).astype(np.int64) + 1
        taps = np.arange(width)
        index = first[:, :, None] + taps[None, None, :]
        weight = kaiser_bessel(u[:, :, None] - index, width, self.beta)
        wrapped = (index + grid // 2) % grid

        rows = np.repeat(np.arange(self.n_samples), width * width)
        cols = (wrapped[:, 0, :, None] * grid + wrapped[:, 1, None, :]).reshape(-1)
        values = (weight[:, 0, :, None] * weight[:, 1, None, :]).reshape(-1)
        matrix = sparse.csr_matrix(
            (values, (rows, cols)), shape=(self.n_samples, grid * grid)
        )
        self._logger.debug(
            "Built interpolator: samples=%s grid=%s width=%s nnz=%s",
            self.n_samples,
            grid,
            width,
            matrix.nnz,
        )
        return matrix

    def _exact_forward(self, image: np.ndarray) -> np.ndarray:
        offsets = self.pixel_offsets
        out = np.empty(self.n_samples, dtype=np.complex128)
        for start in range(0, self.n_samples, EXACT_BLOCK):
            k = self.locations[start : start + EXACT_BLOCK]
            ex = np.exp(-1j * np.pi * np.outer(k[:, 0], offsets))
            ey = np.exp(-1j * np.pi * np.outer(k[:, 1], offsets))
            out[start : start + EXACT_BLOCK] = np.sum((ex @ image) * ey, axis=1)
        return out

    def _exact_adjoint(self, samples: np.ndarray) -> np.ndarray:
        offsets = self.pixel_offsets
        out = np.zeros((self.n, self.n), dtype=np.complex128)
        for start in range(0, self.n_samples, EXACT_BLOCK):
            k = self.locations[start : start + EXACT_BLOCK]
            ex = np.exp(1j * np.pi * np.outer(k[:, 0], offsets))
            ey = np.exp(1j * np.pi * np.outer(k[:, 1], offsets))
            out += ex.T @ (samples[start : start + EXACT_BLOCK, None] * ey)
        return out

    def _pad(self, image: np.ndarray) -> np.ndarray:
        begin = (self.grid - self.n) // 2
        padded = np.zeros((self.grid, self.grid), dtype=np.complex128)
        padded[begin : begin + self.n, begin : begin + self.n] = image
        return padded

    def _crop(self, image: np.ndarray) -> np.ndarray:
        begin = (self.grid - self.n) // 2
        return image[begin : begin + self.n, begin : begin + self.n]

    def _gridded_forward(self, image: np.ndarray) -> np.ndarray:
        spectrum = centered_fft2(self._pad(image / self.deapodization))
        return self.interpolator @ spectrum.reshape(-1)

    def _gridded_adjoint(self, samples: np.ndarray) -> np.ndarray:
        spectrum = (self.interpolator.T @ samples).reshape(self.grid, self.grid)
        return self._crop(centered_ifft2(spectrum)) / self.deapodization

    def forward(self, image: np.ndarray) -> np.ndarray:
        """Image [n][n] (or [L][n][n]) to samples [P] (or [L][P])"""
        image = np.asarray(image, dtype=np.complex128)
        if image.shape[-2:] != (self.n, self.n):
            raise DataException(
                f"Image shape {image.shape} does not match plan side {self.n}"
            )
        if image.ndim == 3:
            return np.stack([self.forward(coil) for coil in image])
        if self.mode == NUFFT_MODE_EXACT:
            return self._exact_forward(image)
        return self._gridded_forward(image)

    def adjoint(
        self,
        samples: np.ndarray,
        weights: Optional[DcWeights] = None,
    ) -> np.ndarray:
        """Samples [P] (or [L][P]) to image [n][n] (or [L][n][n])"""
        samples = np.asarray(samples, dtype=np.complex128)
        if samples.shape[-1] != self.n_samples:
            raise DataException(
                f"Got {samples.shape[-1]} samples, plan has {self.n_samples}"
            )
        if weights is not None:
            samples = samples * weights.w
        if samples.ndim == 2:
            return np.stack([self.adjoint(coil) for coil in samples])
        if self.mode == NUFFT_MODE_EXACT:
            return self._exact_adjoint(samples)
        return self._gridded_adjoint(samples)


@dataclass(frozen=True)
class DcWeights:
    """Nonnegative density compensation weights"""

    w: np.ndarray
    residuals: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        """Validate"""
        w = np.asarray(self.w, dtype=np.float64)
        if not np.all(np.isfinite(w)) or np.min(w) < 0:
            raise ValueError("Density compensation weights must be finite and >= 0")
        object.__setattr__(self, "w", w)

    def normalized(self, total: float = 1.0) -> DcWeights:
        """Weights rescaled to sum to `total`"""
        return DcWeights(self.w * (total / np.sum(self.w)), list(self.residuals))


def forward(plan: NonUniformPlan, image: np.ndarray) -> np.ndarray:
    """Forward non-uniform DFT"""
    return plan.forward(image)


def adjoint(
    plan: NonUniformPlan,
    samples: np.ndarray,
    weights: Optional[DcWeights] = None,
) -> np.ndarray:
    """Conjugate transpose of the forward operator"""
    return plan.adjoint(samples, weights)


def pipe_weights(
    plan: NonUniformPlan,
    n_iter: int = DEFAULT_PIPE_ITERS,
) -> DcWeights:
    """Iterative density compensation w <- w / |G w|

    G grids the weights with the interpolation kernel and reads the
    smoothed density back at every sample.
    """
    if n_iter < 1:
        raise DataException(f"n_iter must be at least 1, got {n_iter}")
    matrix = plan.interpolator
    w = np.ones(plan.n_samples)
    residuals: list[float] = []
    for iteration in range(1, n_iter + 1):
        density = np.abs(matrix @ (matrix.T @ w))
        peak = float(np.max(density))
        if peak == 0:
            raise DegenerateGeometryException(
                "Gridded sample density is zero everywhere"
            )
        w = w / np.maximum(density, PIPE_EPSILON * peak)
        residuals.append(float(np.max(np.abs(matrix @ (matrix.T @ w) - 1.0))))
        logger.debug("Pipe iteration %s: residual=%.4e", iteration, residuals[-1])
    return DcWeights(w, residuals)


def full_grid_density(plan: NonUniformPlan) -> float:
    """Value of G 1 for a fully sampled Cartesian grid of the plan's side

    Gridding a lattice of spacing s with a kernel of integral I gives I / s
    per axis, and reading it back multiplies by I again.
    """
    integral = float(kaiser_bessel_transform(0.0, plan.kernel_width, plan.beta))
    spacing = plan.grid / plan.n
    return integral**4 / spacing**2


def compensation_weights(
    plan: NonUniformPlan,
    n_iter: int = DEFAULT_PIPE_ITERS,
) -> DcWeights:
    """Pipe weights in units of Cartesian grid cells

    A fully sampled grid gets weights close to 1, so adjoint(w y) / n^2 is a
    correctly scaled image.
    """
    raw = pipe_weights(plan, n_iter)
    return DcWeights(raw.w * full_grid_density(plan), raw.residuals)
