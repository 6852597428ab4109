"""SPARKLING MRI: Core

Domain types shared by every module, physical unit conversions and the
normalized k-space grid geometry.

Units follow scanner conventions: gradient amplitude in mT/m, slew rate in
T/m/s, raster and dwell times in microseconds, gyromagnetic ratio in MHz/T
(the reduced value, so k = gamma * integral(G) with no 2*pi factor) and field
of view in metres. All optimization happens in the normalized k-space
Omega = [-1, 1]^2; physical units only appear at waveform export.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..const import (
    DEFAULT_DWELL_DT,
    DEFAULT_FOV,
    DEFAULT_G_MAX,
    DEFAULT_GAMMA,
    DEFAULT_N,
    DEFAULT_N_SAMPLES,
    DEFAULT_N_SHOTS,
    DEFAULT_RASTER_DT,
    DEFAULT_S_MAX,
)

DENSITY_SUM_TOLERANCE = 1e-9
OMEGA_SLACK = 1e-12


class HardwareConfig(BaseModel):
    """Scanner hardware and image geometry"""

    model_config = ConfigDict(frozen=True)

    g_max: float = Field(DEFAULT_G_MAX, gt=0)
    s_max: float = Field(DEFAULT_S_MAX, gt=0)
    raster_dt: float = Field(DEFAULT_RASTER_DT, gt=0)
    dwell_dt: float = Field(DEFAULT_DWELL_DT, gt=0)
    gamma: float = Field(DEFAULT_GAMMA, gt=0)
    n: int = Field(DEFAULT_N, ge=8)
    fov: float = Field(DEFAULT_FOV, gt=0)

    @model_validator(mode="after")
    def check_units(self) -> HardwareConfig:
        """Raster time must be an integer multiple of the dwell time"""
        ratio = self.raster_dt / self.dwell_dt
        if round(ratio) < 1 or abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValueError(
                f"raster_dt ({self.raster_dt} us) is not an integer multiple "
                f"of dwell_dt ({self.dwell_dt} us)"
            )
        return self

    @property
    def oversampling(self) -> int:
        """ADC samples per gradient raster interval"""
        return int(round(self.raster_dt / self.dwell_dt))

    @property
    def k_max(self) -> float:
        """Largest spatial frequency (1/m)"""
        return self.n / (2.0 * self.fov)

    @property
    def gamma_hz(self) -> float:
        """Gyromagnetic ratio in Hz/T"""
        return self.gamma * 1e6

    @property
    def raster_s(self) -> float:
        """Gradient raster time in seconds"""
        return self.raster_dt * 1e-6


class TrajectorySpec(BaseModel):
    """Shot budget of a sampling pattern"""

    model_config = ConfigDict(frozen=True)

    n_shots: int = Field(DEFAULT_N_SHOTS, ge=1)
    n_samples: int = Field(DEFAULT_N_SAMPLES, ge=3)
    hardware: HardwareConfig = Field(default_factory=HardwareConfig)

    @property
    def shape(self) -> tuple[int, int, int]:
        """Expected trajectory array shape"""
        return (self.n_shots, self.n_samples, 2)

    @property
    def n_points(self) -> int:
        """Raster-time samples over all shots"""
        return self.n_shots * self.n_samples


@dataclass(frozen=True)
class Trajectory:
    """Multi-shot k-space trajectory in normalized units"""

    points: np.ndarray
    spec: TrajectorySpec

    def __post_init__(self) -> None:
        """Validate and freeze"""
        points = np.array(self.points, dtype=np.float64)
        if points.shape != self.spec.shape:
            raise ValueError(
                f"Trajectory shape {points.shape} does not match {self.spec.shape}"
            )
        if not np.all(np.isfinite(points)):
            raise ValueError("Trajectory has non-finite coordinates")
        if np.max(np.abs(points)) > 1.0 + OMEGA_SLACK:
            raise ValueError("Trajectory leaves the normalized k-space [-1, 1]^2")
        points = np.clip(points, -1.0, 1.0)
        points.flags.writeable = False
        object.__setattr__(self, "points", points)

    @property
    def meta(self) -> dict[str, Any]:
        """Physics metadata persisted alongside the samples"""
        return {
            "n_shots": self.spec.n_shots,
            "n_samples": self.spec.n_samples,
            "hardware": self.spec.hardware.model_dump(),
        }

    @classmethod
    def from_meta(
        cls,
        points: np.ndarray,
        meta: dict[str, Any] | None,
    ) -> Trajectory:
        """Rebuild a trajectory from samples and stored metadata"""
        hardware = HardwareConfig(**(meta or {}).get("hardware", {}))
        spec = TrajectorySpec(
            n_shots=points.shape[0],
            n_samples=points.shape[1],
            hardware=hardware,
        )
        return cls(points, spec)

    def with_points(self, points: np.ndarray) -> Trajectory:
        """Same spec, new samples"""
        return Trajectory(points, self.spec)

    def flat(self) -> np.ndarray:
        """All samples as [P][2]"""
        return self.points.reshape(-1, 2)


@dataclass(frozen=True)
class GradientWaveform:
    """Gradient (mT/m) and slew (T/m/s) waveforms of a trajectory"""

    g: np.ndarray
    slew: np.ndarray
    start: np.ndarray


@dataclass(frozen=True)
class DensityGrid:
    """Discretized target sampling density on the n x n cell grid"""

    values: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Validate and freeze"""
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"Density must be a square grid, got {values.shape}")
        if not np.all(np.isfinite(values)) or np.min(values) < 0:
            raise ValueError("Density has negative or non-finite entries")
        total = float(np.sum(values))
        if abs(total - 1.0) > DENSITY_SUM_TOLERANCE:
            raise ValueError(f"Density sums to {total}, expected 1")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        """Grid side"""
        return self.values.shape[0]

    @classmethod
    def from_weights(
        cls,
        weights: np.ndarray,
        **meta: Any,
    ) -> DensityGrid:
        """Normalize nonnegative weights to a probability grid"""
        weights = np.asarray(weights, dtype=np.float64)
        total = float(np.sum(weights))
        if not np.isfinite(total) or total <= 0:
            raise ValueError("Density weights must have a positive finite sum")
        values = weights / total
        # Renormalize once more so the float sum is as close to 1 as possible
        values = values / np.sum(values)
        return cls(values, dict(meta))


def cell_centers(n: int) -> np.ndarray:
    """Cell centre coordinates of an n-cell partition of [-1, 1]"""
    return -1.0 + (2.0 * np.arange(n) + 1.0) / n


def cell_radius(n: int) -> np.ndarray:
    """Euclidean radius of every cell centre, indexed [ix, iy]"""
    centers = cell_centers(n)
    return np.hypot(centers[:, None], centers[None, :])


def normalized_speed_bound(hw: HardwareConfig) -> float:
    """Largest normalized displacement between consecutive raster samples"""
    return hw.gamma_hz * (hw.g_max * 1e-3) * hw.raster_s / hw.k_max


def normalized_accel_bound(hw: HardwareConfig) -> float:
    """Largest normalized second difference between raster samples"""
    return hw.gamma_hz * hw.s_max * hw.raster_s**2 / hw.k_max


def acceleration_factor(spec: TrajectorySpec) -> float:
    """Full Cartesian sample count over acquired sample count"""
    hw = spec.hardware
    return hw.n**2 / (spec.n_shots * spec.n_samples * hw.oversampling)


def trajectory_to_waveform(t: Trajectory) -> GradientWaveform:
    """Finite-difference a trajectory into gradient and slew waveforms"""
    hw = t.spec.hardware
    dk = np.diff(t.points, axis=1) * hw.k_max
    g = dk / (hw.gamma_hz * hw.raster_s)
    slew = np.diff(g, axis=1) / hw.raster_s
    return GradientWaveform(
        g=g * 1e3,
        slew=slew,
        start=np.array(t.points[:, 0, :]),
    )


def integrate_waveform(
    waveform: GradientWaveform,
    spec: TrajectorySpec,
) -> Trajectory:
    """Integrate gradients back to normalized k-space samples"""
    hw = spec.hardware
    steps = waveform.g * 1e-3 * hw.gamma_hz * hw.raster_s / hw.k_max
    points = np.concatenate(
        [
            waveform.start[:, None, :],
            waveform.start[:, None, :] + np.cumsum(steps, axis=1),
        ],
        axis=1,
    )
    return Trajectory(points, spec)
