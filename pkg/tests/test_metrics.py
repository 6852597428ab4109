"""Test image quality metrics"""
from __future__ import annotations

import json

import numpy as np
import pytest
from skimage.metrics import peak_signal_noise_ratio

from sparklingmri.exceptions import DataException
from sparklingmri.modules.core import DensityGrid
from sparklingmri.modules.metrics import (
    auto_mask,
    density_tv_distance,
    psnr,
    score,
    ssim,
)


def _checkerboard(n: int, tile: int) -> np.ndarray:
    index = np.arange(n) // tile
    return ((index[:, None] + index[None, :]) % 2).astype(float)


def test_ssim_identity_and_symmetry(phantom32: np.ndarray, rng: np.random.Generator) -> None:
    """SSIM(x, x) = 1 and SSIM(x, y) = SSIM(y, x)"""
    noisy = phantom32 + 0.05 * rng.normal(size=phantom32.shape)
    assert ssim(phantom32, phantom32) == pytest.approx(1.0)
    assert ssim(phantom32, noisy) == pytest.approx(ssim(noisy, phantom32), abs=1e-12)
    assert ssim(phantom32, noisy) < 1.0
    brighter = 1.5 * noisy
    assert ssim(phantom32, brighter) == pytest.approx(ssim(brighter, phantom32), abs=1e-12)


def test_ssim_scale_invariance(phantom32: np.ndarray, rng: np.random.Generator) -> None:
    """Scaling both images together leaves SSIM unchanged"""
    noisy = np.abs(phantom32 + 0.05 * rng.normal(size=phantom32.shape))
    assert ssim(3.0 * phantom32, 3.0 * noisy) == pytest.approx(ssim(phantom32, noisy))


def test_ssim_of_inverted_checkerboard() -> None:
    """Opposite patterns are dissimilar"""
    board = _checkerboard(32, 4)
    assert ssim(board, 1.0 - board) < 0.1


def test_ssim_of_zero_images() -> None:
    """Two empty images are identical"""
    assert ssim(np.zeros((8, 8)), np.zeros((8, 8))) == 1.0


def test_psnr_of_constant_offset(phantom32: np.ndarray) -> None:
    """An offset of a tenth of the peak is 20 dB"""
    assert psnr(phantom32, phantom32 + 0.1) == pytest.approx(20.0)
    assert psnr(phantom32, phantom32) == float("inf")


def test_psnr_matches_reference_implementation(rng: np.random.Generator) -> None:
    """Unmasked PSNR agrees with scikit-image at the reference peak"""
    for _ in range(50):
        x = rng.uniform(0, 1, size=(16, 16))
        y = np.abs(x + 0.1 * rng.normal(size=(16, 16)))
        expected = peak_signal_noise_ratio(x, y, data_range=float(np.max(x)))
        assert psnr(x, y) == pytest.approx(expected, rel=1e-10)


def test_masked_scores_ignore_outside(phantom32: np.ndarray) -> None:
    """Changes outside the mask do not count"""
    mask = np.zeros_like(phantom32, dtype=bool)
    mask[8:24, 8:24] = True
    changed = phantom32.copy()
    changed[0, 0] += 5.0
    assert psnr(phantom32, changed, mask) == float("inf")


@pytest.mark.parametrize(
    ("x", "y", "mask"),
    [
        (np.zeros((8, 8)), np.zeros((8, 8)), np.zeros((8, 8), dtype=bool)),
        (np.zeros((8, 8)), np.zeros((4, 4)), None),
        (np.zeros((8, 8)), np.zeros((8, 8)), np.ones((4, 4), dtype=bool)),
        (np.zeros(8), np.zeros(8), None),
    ],
)
def test_invalid_inputs(x: np.ndarray, y: np.ndarray, mask: np.ndarray) -> None:
    """Empty masks and mismatched shapes"""
    with pytest.raises(DataException):
        psnr(x, y, mask)
    with pytest.raises(DataException):
        ssim(x, y, mask)


def test_auto_mask(phantom64: np.ndarray) -> None:
    """Covers the head and leaves the corners out"""
    mask = auto_mask(phantom64)
    assert mask[32, 32]
    assert not mask[0, 0]
    assert mask[phantom64 > 0.5].all()


def test_score_json(phantom32: np.ndarray) -> None:
    """Infinite PSNR is reported as null with a flag"""
    report = score(phantom32, phantom32)
    payload = json.loads(report.to_json())
    assert payload["ssim"] == pytest.approx(1.0)
    assert payload["psnr"] is None
    assert payload["psnr_infinite"] is True
    assert 0.0 < payload["mask_coverage"] < 1.0


def test_tv_distance() -> None:
    """Zero for a matching histogram, large for a single cluster"""
    rho = DensityGrid.from_weights(np.ones((8, 8)))
    centers = -1.0 + (2 * np.arange(8) + 1) / 8.0
    grid = np.stack(np.meshgrid(centers, centers, indexing="ij"), -1).reshape(-1, 2)
    assert density_tv_distance(grid, rho, bins=4) == pytest.approx(0.0)
    cluster = np.full((10, 2), -0.9)
    assert density_tv_distance(cluster, rho, bins=4) == pytest.approx(15.0 / 16.0)


def test_tv_distance_errors() -> None:
    """Bins must divide the grid and samples must fall inside"""
    rho = DensityGrid.from_weights(np.ones((8, 8)))
    with pytest.raises(DataException):
        density_tv_distance(np.zeros((4, 2)), rho, bins=3)
    with pytest.raises(DataException):
        density_tv_distance(np.full((4, 2), 2.0), rho, bins=4)
