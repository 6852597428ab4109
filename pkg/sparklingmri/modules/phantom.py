"""SPARKLING MRI: Phantoms and Coil Simulation"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from ..const import CONTRAST_T1, CONTRAST_T2, CONTRASTS
from ..exceptions import DataException


@dataclass(frozen=True)
class Ellipse:
    """Ellipse in normalized image coordinates [-1, 1]^2"""

    a: float
    b: float
    x0: float
    y0: float
    phi: float


# Modified Shepp-Logan geometry with angles in degrees
SHEPP_LOGAN = (
    Ellipse(0.69, 0.92, 0.0, 0.0, 0.0),
    Ellipse(0.6624, 0.874, 0.0, -0.0184, 0.0),
    Ellipse(0.11, 0.31, 0.22, 0.0, -18.0),
    Ellipse(0.16, 0.41, -0.22, 0.0, 18.0),
    Ellipse(0.21, 0.25, 0.0, 0.35, 0.0),
    Ellipse(0.046, 0.046, 0.0, 0.1, 0.0),
    Ellipse(0.046, 0.046, 0.0, -0.1, 0.0),
    Ellipse(0.046, 0.023, -0.08, -0.605, 0.0),
    Ellipse(0.023, 0.023, 0.0, -0.606, 0.0),
    Ellipse(0.023, 0.046, 0.06, -0.605, 0.0),
)

# Additive intensities per ellipse. T1: dark fluid, T2: bright fluid.
INTENSITIES = {
    CONTRAST_T1: (1.0, -0.8, -0.2, -0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1),
    CONTRAST_T2: (0.6, -0.5, 0.7, 0.7, 0.2, 0.3, 0.3, 0.2, 0.2, 0.2),
}


def _grid(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixel centres, first axis x"""
    axis = (np.arange(n) - n / 2.0 + 0.5) / (n / 2.0)
    return np.meshgrid(axis, axis, indexing="ij")


def render_ellipses(
    n: int,
    ellipses: tuple[Ellipse, ...],
    intensities: tuple[float, ...],
) -> np.ndarray:
    """Sum of uniform ellipses, clipped to nonnegative values"""
    if len(ellipses) != len(intensities):
        raise DataException("Each ellipse needs exactly one intensity")
    x, y = _grid(n)
    image = np.zeros((n, n))
    for ellipse, intensity in zip(ellipses, intensities):
        angle = np.deg2rad(ellipse.phi)
        dx = x - ellipse.x0
        dy = y - ellipse.y0
        u = dx * np.cos(angle) + dy * np.sin(angle)
        v = -dx * np.sin(angle) + dy * np.cos(angle)
        image[(u / ellipse.a) ** 2 + (v / ellipse.b) ** 2 <= 1.0] += intensity
    return np.clip(image, 0.0, None)


def shepp_logan(n: int, contrast: str = CONTRAST_T1) -> np.ndarray:
    """Modified Shepp-Logan phantom with unit peak"""
    if contrast not in CONTRASTS:
        raise DataException(f"Unknown contrast: {contrast}")
    image = render_ellipses(n, SHEPP_LOGAN, INTENSITIES[contrast])
    return image / np.max(image)


def random_phantom(
    n: int,
    contrast: str = CONTRAST_T1,
    seed: int = 0,
) -> np.ndarray:
    """Shepp-Logan variant with jittered geometry and inner intensities"""
    if contrast not in CONTRASTS:
        raise DataException(f"Unknown contrast: {contrast}")
    rng = np.random.default_rng(seed)
    ellipses = []
    for index, ellipse in enumerate(SHEPP_LOGAN):
        if index < 2:
            # Skull and brain outline stay nested
            scale = rng.uniform(0.95, 1.0)
            ellipses.append(
                Ellipse(ellipse.a * scale, ellipse.b * scale, 0.0, ellipse.y0, 0.0)
            )
            continue
        ellipses.append(
            Ellipse(
                a=ellipse.a * rng.uniform(0.8, 1.2),
                b=ellipse.b * rng.uniform(0.8, 1.2),
                x0=ellipse.x0 + rng.normal(0.0, 0.03),
                y0=ellipse.y0 + rng.normal(0.0, 0.03),
                phi=ellipse.phi + rng.uniform(-10.0, 10.0),
            )
        )
    base = INTENSITIES[contrast]
    intensities = tuple(
        value if index < 2 else value * rng.uniform(0.7, 1.3)
        for index, value in enumerate(base)
    )
    image = render_ellipses(n, tuple(ellipses), intensities)
    return image / np.max(image)


def coil_maps(
    n: int,
    n_coils: int,
    kind: Literal["gaussian", "birdcage"] = "gaussian",
    width: float = 0.5,
) -> np.ndarray:
    """Complex sensitivities [L][n][n] normalized to unit root-sum-of-squares

    Coils sit on a ring around the field of view. Gaussian coils fall off as
    exp(-d^2 / (2 width^2)) with a linear phase ramp, birdcage coils as 1 / d
    with an azimuthal phase.
    """
    if n_coils < 1:
        raise DataException(f"n_coils must be at least 1, got {n_coils}")
    if n_coils == 1:
        return np.ones((1, n, n), dtype=np.complex128)
    x, y = _grid(n)
    maps = np.empty((n_coils, n, n), dtype=np.complex128)
    for coil in range(n_coils):
        theta = 2.0 * np.pi * coil / n_coils
        if kind == "gaussian":
            cx, cy = np.cos(theta), np.sin(theta)
            distance2 = (x - cx) ** 2 + (y - cy) ** 2
            phase = 0.5 * np.pi * (x * np.sin(theta) - y * np.cos(theta))
            maps[coil] = np.exp(-distance2 / (2.0 * width**2)) * np.exp(1j * phase)
        elif kind == "birdcage":
            cx, cy = 1.5 * np.cos(theta), 1.5 * np.sin(theta)
            dx, dy = x - cx, y - cy
            phase = np.arctan2(dx, -dy) - theta
            maps[coil] = np.exp(1j * phase) / np.sqrt(dx**2 + dy**2)
        else:
            raise DataException(f"Unknown coil model: {kind}")
    rss = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return maps / rss


def simulate_coils(image: np.ndarray, maps: np.ndarray) -> np.ndarray:
    """Coil images S_l x"""
    image = np.asarray(image)
    maps = np.asarray(maps)
    if maps.shape[1:] != image.shape:
        raise DataException(
            f"Map shape {maps.shape} does not match image shape {image.shape}"
        )
    return maps * image[None]
