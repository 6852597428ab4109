"""Test target density constructors"""
from __future__ import annotations

import numpy as np
import pytest

from sparklingmri.exceptions import ConfigurationException, DataException
from sparklingmri.modules import build_density
from sparklingmri.modules.core import cell_radius
from sparklingmri.modules.density import (
    LoupeLite,
    LoupeLiteParams,
    VdsParams,
    density_entropy,
    log_spectrum_density,
    loupe_lite_learn,
    sigmoid,
    spectrum_density,
    vds_density,
)
from sparklingmri.modules.phantom import random_phantom


def _valid(values: np.ndarray) -> None:
    assert np.min(values) >= 0
    assert np.sum(values) == pytest.approx(1.0, abs=1e-9)


def test_vds_plateau_and_decay() -> None:
    """Flat inside the cutoff, decreasing beyond it"""
    rho = vds_density(64, VdsParams(cutoff=0.25, decay=2))
    _valid(rho.values)
    radius = cell_radius(64)
    plateau = rho.values[radius < 0.25]
    assert np.ptp(plateau) == 0
    outside = radius >= 0.25
    order = np.argsort(radius[outside])
    assert np.all(np.diff(rho.values[outside][order]) <= 1e-18)
    assert rho.meta["method"] == "vds"


def test_vds_zero_decay_is_uniform() -> None:
    """D = 0 removes the falloff"""
    rho = vds_density(16, VdsParams(cutoff=0.5, decay=0))
    np.testing.assert_allclose(rho.values, 1 / 256)


def test_vds_is_rotation_symmetric() -> None:
    """Depends on the radius only"""
    rho = vds_density(32, VdsParams())
    np.testing.assert_allclose(rho.values, np.rot90(rho.values), atol=1e-18)


def test_spectrum_densities_are_valid(rng: np.random.Generator) -> None:
    """Valid grids for both spectrum methods"""
    images = [random_phantom(32, seed=seed) for seed in range(4)]
    for rho in (spectrum_density(images), log_spectrum_density(images)):
        _valid(rho.values)
        assert rho.values.shape == (32, 32)
        # Energy concentrates at the centre of k-space
        assert rho.values[16, 16] == rho.values.max()


def test_flat_spectrum_gives_uniform_density() -> None:
    """A single impulse has a flat spectrum"""
    image = np.zeros((8, 8))
    image[4, 4] = 1.0
    np.testing.assert_allclose(spectrum_density([image]).values, 1 / 64)


def test_log_spectrum_is_flatter() -> None:
    """Entropy of the log spectrum exceeds that of the spectrum"""
    images = [random_phantom(32, contrast, seed) for seed in range(10) for contrast in ("t1", "t2")]
    assert len(images) == 20
    assert density_entropy(log_spectrum_density(images)) > density_entropy(
        spectrum_density(images)
    )


def test_mismatched_images() -> None:
    """Empty sets and shape mismatches are rejected"""
    with pytest.raises(DataException):
        spectrum_density([])
    with pytest.raises(DataException):
        log_spectrum_density([np.ones((8, 8)), np.ones((16, 16))])


def test_sigmoid_is_stable() -> None:
    """No overflow at large magnitudes"""
    values = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    np.testing.assert_allclose(values, [0.0, 0.5, 1.0])


@pytest.mark.parametrize("gamma", [0.2, 0.8])
def test_loupe_gradient_matches_finite_differences(gamma: float) -> None:
    """Central differences on a 16 x 16 toy, both budget branches"""
    learner = LoupeLite(LoupeLiteParams(target_sparsity=gamma, slope=5.0, seed=3))
    learner.fit_power([random_phantom(16, seed=1), random_phantom(16, seed=2)])
    weights = learner.initial_weights(16)
    gradient = learner.gradient(weights)
    rng = np.random.default_rng(0)
    direction = rng.normal(size=weights.shape)
    h = 1e-6
    numeric = (
        learner.loss(weights + h * direction) - learner.loss(weights - h * direction)
    ) / (2 * h)
    analytic = float(np.sum(gradient * direction))
    assert abs(numeric - analytic) <= 1e-5 * abs(analytic)


def test_loupe_budget_holds_every_epoch() -> None:
    """mean(P) equals the sparsity target at every accepted step"""
    params = LoupeLiteParams(target_sparsity=0.3, epochs=25, seed=0)
    learner = LoupeLite(params)
    rho = learner.learn([random_phantom(16, seed=seed) for seed in range(3)])
    _valid(rho.values)
    assert len(learner.budget_errors) == 26
    assert max(learner.budget_errors) <= 1e-12
    assert all(b <= a for a, b in zip(learner.losses, learner.losses[1:]))
    assert learner.losses[-1] < learner.losses[0]
    assert learner.weights is not None
    np.testing.assert_allclose(
        learner.probability(learner.weights), rho.values * 0.3 * 16 * 16, rtol=1e-9
    )


def test_loupe_favours_low_frequencies() -> None:
    """Power concentrates at the centre, so does the learned probability"""
    rho = loupe_lite_learn(
        [random_phantom(16, seed=seed) for seed in range(3)],
        LoupeLiteParams(target_sparsity=0.25, epochs=50),
    )
    radius = cell_radius(16)
    assert rho.values[radius < 0.2].mean() > rho.values[radius > 0.8].mean()


def test_loupe_loss_needs_power() -> None:
    """Loss before fitting is an error"""
    with pytest.raises(DataException):
        LoupeLite(LoupeLiteParams()).loss(np.zeros((4, 4)))


def test_registry() -> None:
    """Dispatch by name, data-driven methods need images"""
    assert build_density("vds", 16).meta["method"] == "vds"
    images = [random_phantom(16, seed=0)]
    assert build_density("log-spectrum", 16, images).meta["method"] == "log-spectrum"
    with pytest.raises(ConfigurationException):
        build_density("uniform", 16)
    with pytest.raises(DataException):
        build_density("spectrum", 16)
    with pytest.raises(DataException):
        build_density("spectrum", 32, images)
