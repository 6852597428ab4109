"""Test core types and unit conversions"""
from __future__ import annotations

import numpy as np
from pydantic import ValidationError
import pytest

from sparklingmri.modules.core import (
    DensityGrid,
    GradientWaveform,
    HardwareConfig,
    Trajectory,
    TrajectorySpec,
    acceleration_factor,
    cell_centers,
    integrate_waveform,
    normalized_accel_bound,
    normalized_speed_bound,
    trajectory_to_waveform,
)


def test_default_acceleration_factor() -> None:
    """320^2 pixels over 16 shots x 512 samples x 5 dwell samples"""
    spec = TrajectorySpec()
    assert spec.hardware.oversampling == 5
    assert acceleration_factor(spec) == 2.5


def test_raster_must_be_multiple_of_dwell() -> None:
    """3 us does not divide 10 us"""
    with pytest.raises(ValidationError):
        HardwareConfig(dwell_dt=3.0)


def test_bounds_scale_with_hardware() -> None:
    """Doubling g_max doubles the step bound, doubling s_max the accel bound"""
    base = HardwareConfig()
    assert normalized_speed_bound(
        HardwareConfig(g_max=2 * base.g_max)
    ) == pytest.approx(2 * normalized_speed_bound(base))
    assert normalized_accel_bound(
        HardwareConfig(s_max=2 * base.s_max)
    ) == pytest.approx(2 * normalized_accel_bound(base))


def test_speed_bound_value() -> None:
    """gamma * G * dt / k_max with k_max = N / (2 FOV)"""
    hw = HardwareConfig()
    expected = 42.57e6 * 40e-3 * 10e-6 / (320 / (2 * 0.23))
    assert normalized_speed_bound(hw) == pytest.approx(expected, rel=1e-12)


def test_trajectory_rejects_points_outside_omega(small_spec: TrajectorySpec) -> None:
    """|k| > 1 is not a valid sample"""
    points = np.zeros(small_spec.shape)
    points[0, 0] = [1.01, 0.0]
    with pytest.raises(ValueError):
        Trajectory(points, small_spec)


def test_trajectory_rejects_wrong_shape(small_spec: TrajectorySpec) -> None:
    """Shape must be shots by samples by two"""
    with pytest.raises(ValueError):
        Trajectory(np.zeros((2, 3, 2)), small_spec)


def test_trajectory_is_read_only(small_spec: TrajectorySpec) -> None:
    """Samples cannot be modified in place"""
    t = Trajectory(np.zeros(small_spec.shape), small_spec)
    with pytest.raises(ValueError):
        t.points[0, 0, 0] = 0.5


def test_meta_rebuilds_spec(small_spec: TrajectorySpec) -> None:
    """Stored metadata restores the hardware"""
    t = Trajectory(np.zeros(small_spec.shape), small_spec)
    restored = Trajectory.from_meta(np.array(t.points), t.meta)
    assert restored.spec == small_spec


def test_waveform_integrates_back(small_spec: TrajectorySpec, rng: np.random.Generator) -> None:
    """Integration inverts finite differencing"""
    points = np.clip(
        np.cumsum(rng.normal(scale=0.01, size=small_spec.shape), axis=1), -1, 1
    )
    t = Trajectory(points, small_spec)
    waveform = trajectory_to_waveform(t)
    assert waveform.g.shape == (4, 31, 2)
    assert waveform.slew.shape == (4, 30, 2)
    np.testing.assert_allclose(
        integrate_waveform(waveform, small_spec).points, t.points, atol=1e-12
    )


def test_gradient_of_max_speed_is_g_max(small_spec: TrajectorySpec) -> None:
    """A step of exactly the speed bound needs g_max"""
    step = normalized_speed_bound(small_spec.hardware)
    points = np.zeros(small_spec.shape)
    points[:, :, 0] = np.clip(np.arange(32) * step - 0.5, -1, 1)[None]
    waveform = trajectory_to_waveform(Trajectory(points, small_spec))
    assert isinstance(waveform, GradientWaveform)
    assert np.max(np.abs(waveform.g[..., 0])) == pytest.approx(40.0, rel=1e-9)


def test_density_grid_validation() -> None:
    """Must be square, nonnegative and sum to one"""
    with pytest.raises(ValueError):
        DensityGrid(np.full((4, 4), 0.1))
    with pytest.raises(ValueError):
        DensityGrid(np.full((4, 2), 0.125))
    grid = DensityGrid.from_weights(np.arange(16.0).reshape(4, 4), method="test")
    assert grid.n == 4
    assert grid.meta == {"method": "test"}
    assert np.sum(grid.values) == pytest.approx(1.0, abs=1e-12)


def test_cell_centers_are_symmetric() -> None:
    """Centres of an even partition avoid the origin"""
    centers = cell_centers(8)
    np.testing.assert_allclose(centers, -centers[::-1])
    assert centers[0] == pytest.approx(-1 + 1 / 8)
