"""Shared fixtures"""
from __future__ import annotations

import numpy as np
import pytest

from sparklingmri.modules.constraints import ConstraintSet
from sparklingmri.modules.core import HardwareConfig, TrajectorySpec
from sparklingmri.modules.phantom import shepp_logan


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator"""
    return np.random.default_rng(1234)


@pytest.fixture
def small_hardware() -> HardwareConfig:
    """32 x 32 image, two ADC samples per raster interval"""
    return HardwareConfig(n=32, dwell_dt=5.0)


@pytest.fixture
def small_spec(small_hardware: HardwareConfig) -> TrajectorySpec:
    """Four shots of 32 samples"""
    return TrajectorySpec(n_shots=4, n_samples=32, hardware=small_hardware)


@pytest.fixture
def small_constraints(small_spec: TrajectorySpec) -> ConstraintSet:
    """Hardware bounds of the small spec, centre anchored"""
    return ConstraintSet.from_spec(small_spec)


@pytest.fixture
def phantom32() -> np.ndarray:
    """Shepp-Logan slice"""
    return shepp_logan(32)


@pytest.fixture
def phantom64() -> np.ndarray:
    """Shepp-Logan slice"""
    return shepp_logan(64)


def random_shots(
    rng: np.random.Generator,
    n_shots: int,
    n_samples: int,
    scale: float = 0.3,
) -> np.ndarray:
    """Random walks inside the unit box"""
    steps = rng.normal(scale=scale / np.sqrt(n_samples), size=(n_shots, n_samples, 2))
    return np.clip(np.cumsum(steps, axis=1) - steps[:, :1], -0.9, 0.9)
