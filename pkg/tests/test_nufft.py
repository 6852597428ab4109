"""Test non-uniform Fourier operators and density compensation"""
from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from sparklingmri.exceptions import DataException
from sparklingmri.modules.nufft import (
    DcWeights,
    NonUniformPlan,
    NufftConfig,
    adjoint,
    centered_fft2,
    centered_ifft2,
    compensation_weights,
    forward,
    kaiser_bessel,
    pipe_weights,
)


def _cartesian(n: int) -> np.ndarray:
    axis = 2.0 * (np.arange(n) - n // 2) / n
    kx, ky = np.meshgrid(axis, axis, indexing="ij")
    return np.stack([kx.reshape(-1), ky.reshape(-1)], axis=-1)


def _spokes(n_spokes: int, n_samples: int, radius: float) -> np.ndarray:
    angles = np.arange(n_spokes) * np.pi / n_spokes
    t = np.linspace(-radius, radius, n_samples)
    direction = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    return (t[None, :, None] * direction[:, None, :]).reshape(-1, 2)


def _complex(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


@pytest.mark.parametrize(("mode", "n"), [("exact", 32), ("gridded", 64)])
def test_adjoint_identity(mode: str, n: int, rng: np.random.Generator) -> None:
    """<A x, y> = <x, A^H y>"""
    plan = NonUniformPlan(rng.uniform(-1, 1, size=(700, 2)), n, mode=mode)
    x = _complex(rng, n, n)
    y = _complex(rng, plan.n_samples)
    left = np.vdot(forward(plan, x), y)
    right = np.vdot(x, adjoint(plan, y))
    assert abs(left - right) <= 1e-10 * abs(left)


def test_grid_samples_equal_centered_dft(rng: np.random.Generator) -> None:
    """Samples at k = 2 m / n reproduce the centered DFT"""
    n = 16
    plan = NonUniformPlan(_cartesian(n), n, mode="exact")
    image = _complex(rng, n, n)
    expected = centered_fft2(image)
    np.testing.assert_allclose(
        plan.forward(image).reshape(n, n), expected, atol=1e-10 * np.max(np.abs(expected))
    )


def test_centered_transforms_invert() -> None:
    """Inverse without scaling returns n^2 times the image"""
    image = np.arange(64.0).reshape(8, 8)
    np.testing.assert_allclose(centered_ifft2(centered_fft2(image)), 64 * image, atol=1e-9)


def test_gridded_matches_exact(rng: np.random.Generator) -> None:
    """Kaiser-Bessel gridding tracks the exact transform"""
    n = 64
    locations = rng.uniform(-1, 1, size=(2000, 2))
    exact = NonUniformPlan(locations, n, mode="exact")
    gridded = NonUniformPlan(locations, n, mode="gridded")
    image = _complex(rng, n, n)
    reference = exact.forward(image)
    error = np.linalg.norm(gridded.forward(image) - reference) / np.linalg.norm(reference)
    assert error <= 1e-5

    samples = _complex(rng, len(locations))
    back = exact.adjoint(samples)
    error = np.linalg.norm(gridded.adjoint(samples) - back) / np.linalg.norm(back)
    assert error <= 1e-5


def test_multi_coil_shapes(rng: np.random.Generator) -> None:
    """Coil stacks map coil by coil"""
    plan = NonUniformPlan(rng.uniform(-1, 1, size=(50, 2)), 16)
    images = _complex(rng, 3, 16, 16)
    samples = plan.forward(images)
    assert samples.shape == (3, 50)
    np.testing.assert_allclose(samples[1], plan.forward(images[1]))
    assert plan.adjoint(samples).shape == (3, 16, 16)


def test_weighted_adjoint(rng: np.random.Generator) -> None:
    """Weights multiply the samples before the adjoint"""
    plan = NonUniformPlan(rng.uniform(-1, 1, size=(40, 2)), 16, mode="exact")
    samples = _complex(rng, 40)
    w = rng.uniform(0.1, 2.0, size=40)
    np.testing.assert_allclose(
        plan.adjoint(samples, DcWeights(w)), plan.adjoint(w * samples), atol=1e-12
    )


@pytest.mark.parametrize(
    ("locations", "n", "mode"),
    [
        (np.array([[1.5, 0.0]]), 16, "exact"),
        (np.array([[np.nan, 0.0]]), 16, "exact"),
        (np.zeros((0, 2)), 16, "exact"),
        (np.zeros((1, 2)), 15, "exact"),
        (np.zeros((1, 2)), 16, "fast"),
    ],
)
def test_invalid_plans(locations: np.ndarray, n: int, mode: str) -> None:
    """Locations outside the unit box, odd sides and unknown modes"""
    with pytest.raises(DataException):
        NonUniformPlan(locations, n, mode=mode)


def test_mismatched_operands(rng: np.random.Generator) -> None:
    """Operands must match the plan"""
    plan = NonUniformPlan(rng.uniform(-1, 1, size=(10, 2)), 16)
    with pytest.raises(DataException):
        plan.forward(np.zeros((8, 8)))
    with pytest.raises(DataException):
        plan.adjoint(np.zeros(11))


def test_locations_are_read_only(rng: np.random.Generator) -> None:
    """Plans are immutable"""
    plan = NonUniformPlan(rng.uniform(-1, 1, size=(10, 2)), 16)
    with pytest.raises(ValueError):
        plan.locations[0, 0] = 0.0


def test_subset() -> None:
    """Selected samples keep the plan parameters"""
    plan = NonUniformPlan(_cartesian(8), 8, kernel_width=6)
    sub = plan.subset(np.arange(plan.n_samples) < 10)
    assert sub.n_samples == 10
    assert sub.kernel_width == 6
    assert sub.grid == plan.grid


def test_from_config() -> None:
    """Configuration section builds the plan"""
    cfg = NufftConfig(mode="exact", kernel_width=6, grid_oversampling=1.5)
    plan = NonUniformPlan.from_config(_cartesian(8), 8, cfg)
    assert plan.mode == "exact"
    assert plan.grid == 12


def test_kernel_support() -> None:
    """Unit peak and compact support"""
    assert kaiser_bessel(np.array(0.0), 8, 10.0) == pytest.approx(1.0)
    assert kaiser_bessel(np.array(4.01), 8, 10.0) == 0.0
    assert kaiser_bessel(np.array(-2.0), 8, 10.0) == pytest.approx(
        kaiser_bessel(np.array(2.0), 8, 10.0)
    )


def test_pipe_weights_on_radial_spokes() -> None:
    """Residual falls and weights grow with radius"""
    locations = _spokes(48, 64, 0.9)
    plan = NonUniformPlan(locations, 32)
    weights = pipe_weights(plan, n_iter=10)
    assert len(weights.residuals) == 10
    assert weights.residuals[-1] <= weights.residuals[0] / 2
    assert np.all(weights.w >= 0)
    radius = np.linalg.norm(locations, axis=1)
    correlation, _ = stats.spearmanr(weights.w, radius)
    assert correlation > 0.98


def test_full_grid_weights_are_close_to_one() -> None:
    """Cartesian sampling needs no compensation"""
    plan = NonUniformPlan(_cartesian(32), 32)
    weights = compensation_weights(plan, n_iter=5)
    np.testing.assert_allclose(weights.w, np.mean(weights.w), rtol=1e-6)
    assert np.mean(weights.w) == pytest.approx(1.0, abs=0.1)


def test_pipe_needs_iterations() -> None:
    """At least one iteration"""
    plan = NonUniformPlan(_cartesian(8), 8)
    with pytest.raises(DataException):
        pipe_weights(plan, n_iter=0)


def test_weights_validation() -> None:
    """Negative or non-finite weights are rejected"""
    with pytest.raises(ValueError):
        DcWeights(np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        DcWeights(np.array([np.inf]))
    normalized = DcWeights(np.array([1.0, 3.0])).normalized(2.0)
    np.testing.assert_allclose(normalized.w, [0.5, 1.5])
