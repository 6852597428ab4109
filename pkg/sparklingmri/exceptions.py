"""SPARKLING MRI: Exceptions"""
from __future__ import annotations

from typing import Any, Optional


class SparklingMRIException(Exception):
    """Base exception"""


class DataException(SparklingMRIException):
    """Invalid input data, files or configuration"""


class ConfigurationException(DataException):
    """Invalid, unknown or missing configuration value"""


class FormatException(DataException):
    """Malformed file header or unsupported format"""


class CorruptFileException(DataException):
    """File payload does not match its header"""


class ManifestException(DataException):
    """Study manifest references missing or unwritable paths"""


class DegenerateGeometryException(DataException):
    """Sampling geometry cannot support the requested computation"""


class WaveletException(DataException):
    """Image size not compatible with the wavelet configuration"""


class NumericalException(SparklingMRIException):
    """A numerical procedure failed"""


class ProjectionException(NumericalException):
    """Constraint projection did not converge"""

    def __init__(
        self,
        message: str,
        best: Any = None,
        residual: float = float("inf"),
    ) -> None:
        """Initialize"""
        super().__init__(message)
        self.best = best
        self.residual = residual


class OptimizationException(NumericalException):
    """An optimizer produced a non-finite objective or made no progress"""

    def __init__(
        self,
        message: str,
        epoch: Optional[int] = None,
        iterate: Any = None,
    ) -> None:
        """Initialize"""
        super().__init__(message)
        self.epoch = epoch
        self.iterate = iterate


class DivergenceException(NumericalException):
    """Iterative reconstruction diverged"""

    def __init__(
        self,
        message: str,
        trace: Optional[list[float]] = None,
    ) -> None:
        """Initialize"""
        super().__init__(message)
        self.trace = trace or []
