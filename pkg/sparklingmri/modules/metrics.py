"""SPARKLING MRI: Image Quality Metrics"""
from __future__ import annotations

from dataclasses import dataclass
from json import dumps
from typing import Optional, Union

import numpy as np
from scipy import ndimage
from skimage.metrics import structural_similarity
from skimage.morphology import disk

from ..const import (
    MASK_CLOSING_RADIUS,
    MASK_PERCENTILE,
    MASK_THRESHOLD,
    SSIM_K1,
    SSIM_K2,
    SSIM_SIGMA,
)
from ..exceptions import DataException
from .core import DensityGrid, Trajectory


@dataclass(frozen=True)
class QualityReport:
    """Masked image quality scores"""

    ssim: float
    psnr: float
    mask_coverage: float

    @property
    def psnr_infinite(self) -> bool:
        """Identical images over the mask"""
        return bool(np.isinf(self.psnr))

    def to_json(self) -> str:
        """One-line JSON"""
        return dumps(
            {
                "ssim": self.ssim,
                "psnr": None if self.psnr_infinite else self.psnr,
                "psnr_infinite": self.psnr_infinite,
                "mask_coverage": self.mask_coverage,
            },
            sort_keys=True,
        )


def _prepare(
    x: np.ndarray,
    y: np.ndarray,
    mask: Optional[np.ndarray],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = np.abs(np.asarray(x)).astype(np.float64)
    y = np.abs(np.asarray(y)).astype(np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise DataException(f"Images must be 2D with equal shapes: {x.shape}, {y.shape}")
    if mask is None:
        mask = np.ones(x.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise DataException(f"Mask shape {mask.shape} does not match {x.shape}")
    if not mask.any():
        raise DataException("Mask is empty")
    return x, y, mask


def ssim(
    x: np.ndarray,
    y: np.ndarray,
    mask: Optional[np.ndarray] = None,
) -> float:
    """Mean local SSIM over windows centred in the mask

    The dynamic range is the larger of both maxima over the mask, so
    ssim(x, y) == ssim(y, x). PSNR instead takes its peak from the reference.
    """
    x, y, mask = _prepare(x, y, mask)
    data_range = float(max(np.max(x[mask]), np.max(y[mask])))
    if data_range == 0:
        return 1.0
    _, local = structural_similarity(
        x,
        y,
        data_range=data_range,
        gaussian_weights=True,
        sigma=SSIM_SIGMA,
        use_sample_covariance=False,
        K1=SSIM_K1,
        K2=SSIM_K2,
        full=True,
    )
    return float(np.mean(local[mask]))


def psnr(
    x: np.ndarray,
    y: np.ndarray,
    mask: Optional[np.ndarray] = None,
) -> float:
    """Masked PSNR in dB against reference `x`, infinite for identical images"""
    x, y, mask = _prepare(x, y, mask)
    mse = float(np.mean((x[mask] - y[mask]) ** 2))
    if mse == 0:
        return float("inf")
    peak = float(np.max(x[mask]))
    return float(10.0 * np.log10(peak**2 / mse))


def auto_mask(reference: np.ndarray) -> np.ndarray:
    """Threshold at a fraction of a high percentile, then close small gaps"""
    magnitude = np.abs(np.asarray(reference))
    threshold = MASK_THRESHOLD * np.percentile(magnitude, MASK_PERCENTILE)
    mask = magnitude > threshold
    return ndimage.binary_closing(mask, structure=disk(MASK_CLOSING_RADIUS))


def score(
    reference: np.ndarray,
    test: np.ndarray,
    mask: Optional[np.ndarray] = None,
) -> QualityReport:
    """SSIM and PSNR of `test` against `reference`, auto-masked by default"""
    if mask is None:
        mask = auto_mask(reference)
    mask = np.asarray(mask, dtype=bool)
    return QualityReport(
        ssim=ssim(reference, test, mask),
        psnr=psnr(reference, test, mask),
        mask_coverage=float(np.mean(mask)),
    )


def density_tv_distance(
    t: Union[Trajectory, np.ndarray],
    rho: DensityGrid,
    bins: int,
) -> float:
    """Total variation distance between the sample histogram and the density"""
    if bins < 1 or rho.n % bins:
        raise DataException(f"{bins} bins do not divide a grid of side {rho.n}")
    points = t.flat() if isinstance(t, Trajectory) else np.asarray(t).reshape(-1, 2)
    histogram, _, _ = np.histogram2d(
        points[:, 0],
        points[:, 1],
        bins=bins,
        range=[[-1.0, 1.0], [-1.0, 1.0]],
    )
    total = histogram.sum()
    if total == 0:
        raise DataException("No samples fall inside [-1, 1]^2")
    block = rho.n // bins
    target = rho.values.reshape(bins, block, bins, block).sum(axis=(1, 3))
    return float(0.5 * np.sum(np.abs(histogram / total - target / target.sum())))
