"""SPARKLING MRI: Orthogonal Wavelet Transform"""
from __future__ import annotations

from functools import lru_cache
import warnings

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
import pywt

from ..const import DEFAULT_N_SCALES, DEFAULT_WAVELET
from ..exceptions import WaveletException

MODE = "periodization"


class WaveletConfig(BaseModel):
    """Orthogonal wavelet family and decomposition depth"""

    model_config = ConfigDict(frozen=True)

    family: str = DEFAULT_WAVELET
    n_scales: int = Field(DEFAULT_N_SCALES, ge=1)


@lru_cache(maxsize=16)
def _layout(
    family: str,
    n_scales: int,
    n: int,
) -> list:
    """Coefficient slices of the packed [n][n] array"""
    with warnings.catch_warnings():
        # Deep decompositions of short signals are valid with periodization
        warnings.simplefilter("ignore", UserWarning)
        coeffs = pywt.wavedec2(np.zeros((n, n)), family, mode=MODE, level=n_scales)
    _, slices = pywt.coeffs_to_array(coeffs)
    return slices


def approximation_size(n: int, cfg: WaveletConfig) -> int:
    """Side of the coarsest approximation band in the packed array"""
    return n // 2**cfg.n_scales


def check_config(cfg: WaveletConfig, n: int) -> None:
    """Raise unless the family is orthogonal and n splits into n_scales halvings"""
    if cfg.family not in pywt.wavelist(kind="discrete"):
        raise WaveletException(f"Unknown wavelet family: {cfg.family}")
    if not pywt.Wavelet(cfg.family).orthogonal:
        raise WaveletException(f"Wavelet {cfg.family} is not orthogonal")
    side = approximation_size(n, cfg)
    if side < 1 or side * 2**cfg.n_scales != n:
        raise WaveletException(
            f"Image side {n} is not divisible by 2^{cfg.n_scales}"
        )


def _analysis_real(image: np.ndarray, cfg: WaveletConfig) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        coeffs = pywt.wavedec2(image, cfg.family, mode=MODE, level=cfg.n_scales)
    array, _ = pywt.coeffs_to_array(coeffs)
    return array


def _synthesis_real(z: np.ndarray, cfg: WaveletConfig) -> np.ndarray:
    slices = _layout(cfg.family, cfg.n_scales, z.shape[0])
    coeffs = pywt.array_to_coeffs(z, slices, output_format="wavedec2")
    return pywt.waverec2(coeffs, cfg.family, mode=MODE)


def wavelet_analysis(image: np.ndarray, cfg: WaveletConfig) -> np.ndarray:
    """Packed coefficients z = Psi x, same shape as the image"""
    image = np.asarray(image)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise WaveletException(f"Expected a square image, got {image.shape}")
    check_config(cfg, image.shape[0])
    if np.iscomplexobj(image):
        return _analysis_real(image.real, cfg) + 1j * _analysis_real(image.imag, cfg)
    return _analysis_real(image.astype(np.float64), cfg)


def wavelet_synthesis(z: np.ndarray, cfg: WaveletConfig) -> np.ndarray:
    """Image x = Psi* z from packed coefficients"""
    z = np.asarray(z)
    if z.ndim != 2 or z.shape[0] != z.shape[1]:
        raise WaveletException(f"Expected square coefficients, got {z.shape}")
    check_config(cfg, z.shape[0])
    if np.iscomplexobj(z):
        return _synthesis_real(z.real, cfg) + 1j * _synthesis_real(z.imag, cfg)
    return _synthesis_real(z.astype(np.float64), cfg)
