"""SPARKLING MRI: Modules"""
from __future__ import annotations

from collections.abc import Sequence
from typing import Optional

import numpy as np

from ..const import (
    DENSITY_LOG_SPECTRUM,
    DENSITY_LOUPE_LITE,
    DENSITY_METHODS,
    DENSITY_SPECTRUM,
    DENSITY_VDS,
)
from ..exceptions import ConfigurationException, DataException
from .core import DensityGrid
from .density import (
    LoupeLiteParams,
    VdsParams,
    log_spectrum_density,
    loupe_lite_learn,
    spectrum_density,
    vds_density,
)


def build_density(
    method: str,
    n: int,
    images: Optional[Sequence[np.ndarray]] = None,
    vds: Optional[VdsParams] = None,
    loupe: Optional[LoupeLiteParams] = None,
) -> DensityGrid:
    """Build a target density with one of the registered methods

    Data-driven methods need a training set of n x n images.
    """
    if method not in DENSITY_METHODS:
        raise ConfigurationException(
            f"Unknown density method {method}, expected one of {DENSITY_METHODS}"
        )
    if method == DENSITY_VDS:
        return vds_density(n, vds or VdsParams())
    if not images:
        raise DataException(f"Density method {method} needs training images")
    if np.shape(images[0]) != (n, n):
        raise DataException(
            f"Training images have shape {np.shape(images[0])}, expected {(n, n)}"
        )
    if method == DENSITY_SPECTRUM:
        return spectrum_density(images)
    if method == DENSITY_LOG_SPECTRUM:
        return log_spectrum_density(images)
    if method == DENSITY_LOUPE_LITE:
        return loupe_lite_learn(images, loupe or LoupeLiteParams())
    raise ConfigurationException(f"Unhandled density method {method}")
