"""SPARKLING MRI: Trajectory Optimization

The optimized functional is

    F(K) = (1/p) sum_i Phi(k_i) - (1/(2 p^2)) sum_{i != j} ||k_i - k_j||

with Phi(y) = sum_g rho[g] ||y - x_g|| over the density cell centres and
p = Nc * Ns. The attraction term pulls samples towards the target density
and the repulsion term spreads them evenly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage, signal
from scipy.spatial import cKDTree

from ..base import Base
from ..const import (
    BARNES_HUT_THETA,
    COINCIDENT_PAIR_FRACTION,
    DEFAULT_ITERS_PER_LEVEL,
    DEFAULT_MAX_HALVINGS,
    DEFAULT_N_LEVELS,
    DEFAULT_PROJ_MAX_ITER,
    DEFAULT_PROJ_TOL,
    DEFAULT_STEP_SCALE,
    EXACT_REPULSION_LIMIT,
    INIT_FILE,
    INIT_GOLDEN_ANGLE,
    INIT_RADIAL_INOUT,
)
from ..exceptions import ConfigurationException, OptimizationException, ProjectionException
from ..utilities.tensor import read_tensor
from .constraints import ConstraintProjector, ConstraintSet, is_feasible
from .core import DensityGrid, Trajectory, TrajectorySpec, cell_centers
from .repulsion import repulsion

FIELD_RESOLUTION = 128
NEAR_FIELD_RADIUS = 1
SPOKE_MARGIN = 0.95
JITTER_SCALE = 1e-3
MAX_JITTERS = 3
DIRECT_BLOCK = 1 << 20
# Golden angle for diametric spokes, pi over the golden ratio
GOLDEN_ANGLE = np.pi * (np.sqrt(5.0) - 1.0) / 2.0


class SparklingConfig(BaseModel):
    """Optimizer schedule, initialization and projection accuracy"""

    model_config = ConfigDict(frozen=True)

    n_levels: int = Field(DEFAULT_N_LEVELS, ge=1)
    iters_per_level: int = Field(DEFAULT_ITERS_PER_LEVEL, ge=1)
    step_scale: float = Field(DEFAULT_STEP_SCALE, gt=0)
    max_halvings: int = Field(DEFAULT_MAX_HALVINGS, ge=0)
    init: Literal["golden-angle-radial", "radial-inout", "file"] = INIT_GOLDEN_ANGLE
    init_file: Optional[str] = None
    seed: int = 0
    proj_tol: float = Field(DEFAULT_PROJ_TOL, gt=0)
    proj_max_iter: int = Field(DEFAULT_PROJ_MAX_ITER, ge=1)
    exact_repulsion_limit: int = Field(EXACT_REPULSION_LIMIT, ge=1)
    theta: float = Field(BARNES_HUT_THETA, gt=0)


def field_factor(n: int) -> int:
    """Even refinement of the density grid used for the field lattice"""
    return max(2, 2 * int(np.ceil(FIELD_RESOLUTION / (2 * n))))


@dataclass(frozen=True)
class AttractionField:
    """Attraction potential and its gradient sampled on a node lattice

    Lattice nodes sit at -1 + j * h with h = 2 / (f n), so every density
    cell centre is a node. Off-lattice values are bilinear interpolations
    corrected by the exact contribution of the surrounding cells.
    """

    rho: DensityGrid
    factor: int
    potential: np.ndarray
    gradient: np.ndarray

    @property
    def spacing(self) -> float:
        """Lattice spacing"""
        return 2.0 / (self.factor * self.rho.n)

    def _direct(
        self,
        points: np.ndarray,
        cells: np.ndarray,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Exact potential and gradient from the listed cells

        `cells` holds flat cell indices per point, -1 for none.
        """
        centers = cell_centers(self.rho.n)
        valid = cells >= 0
        safe = np.where(valid, cells, 0)
        ix, iy = np.divmod(safe, self.rho.n)
        mass = np.where(valid, self.rho.values.reshape(-1)[safe], 0.0)
        diff = points[:, None, :] - np.stack([centers[ix], centers[iy]], axis=-1)
        norm = np.sqrt(np.sum(diff**2, axis=-1))
        unit = diff / np.where(norm == 0, 1.0, norm)[..., None]
        return (
            np.sum(mass * norm, axis=1),
            np.sum(mass[..., None] * unit, axis=1),
        )

    def _near_cells(self, points: np.ndarray) -> np.ndarray:
        """Flat indices of the cells around every point"""
        n = self.rho.n
        home = np.clip(np.floor((points + 1.0) * n / 2.0).astype(int), 0, n - 1)
        offsets = np.arange(-NEAR_FIELD_RADIUS, NEAR_FIELD_RADIUS + 1)
        ox, oy = np.meshgrid(offsets, offsets, indexing="ij")
        cx = home[:, 0, None] + ox.reshape(1, -1)
        cy = home[:, 1, None] + oy.reshape(1, -1)
        inside = (cx >= 0) & (cx < n) & (cy >= 0) & (cy < n)
        return np.where(inside, cx * n + cy, -1)

    def evaluate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Potential [P] and gradient [P][2] at arbitrary points in Omega"""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        coords = ((points + 1.0) / self.spacing).T
        potential = ndimage.map_coordinates(
            self.potential, coords, order=1, mode="nearest"
        )
        gradient = np.stack(
            [
                ndimage.map_coordinates(
                    self.gradient[axis], coords, order=1, mode="nearest"
                )
                for axis in range(2)
            ],
            axis=-1,
        )

        # Replace the interpolated near field, which is not smooth, by exact sums
        cells = self._near_cells(points)
        last = self.potential.shape[0] - 1
        base = np.clip(np.floor(coords.T).astype(int), 0, last - 1)
        frac = np.clip(coords.T - base, 0.0, 1.0)
        h = self.spacing
        for dx in (0, 1):
            for dy in (0, 1):
                weight = (frac[:, 0] if dx else 1.0 - frac[:, 0]) * (
                    frac[:, 1] if dy else 1.0 - frac[:, 1]
                )
                corner = -1.0 + (base + np.array([dx, dy])) * h
                corner_potential, corner_gradient = self._direct(corner, cells)
                potential -= weight * corner_potential
                gradient -= weight[:, None] * corner_gradient
        exact_potential, exact_gradient = self._direct(points, cells)
        return potential + exact_potential, gradient + exact_gradient


def attraction_field(rho: DensityGrid) -> AttractionField:
    """Convolve the density with the distance kernel and its gradient"""
    n = rho.n
    factor = field_factor(n)
    size = factor * n + 1
    h = 2.0 / (factor * n)
    masses = np.zeros((size, size))
    nodes = (2 * np.arange(n) + 1) * factor // 2
    masses[np.ix_(nodes, nodes)] = rho.values

    offsets = np.arange(-(size - 1), size) * h
    dx, dy = np.meshgrid(offsets, offsets, indexing="ij")
    distance = np.hypot(dx, dy)
    safe = np.where(distance == 0, 1.0, distance)

    potential = signal.fftconvolve(masses, distance, mode="same")
    gradient = np.stack(
        [
            signal.fftconvolve(masses, dx / safe, mode="same"),
            signal.fftconvolve(masses, dy / safe, mode="same"),
        ]
    )
    return AttractionField(rho, factor, potential, gradient)


def direct_attraction(
    points: np.ndarray,
    rho: DensityGrid,
) -> tuple[np.ndarray, np.ndarray]:
    """Potential and gradient by summation over every cell"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    centers = cell_centers(rho.n)
    gx, gy = np.meshgrid(centers, centers, indexing="ij")
    grid = np.stack([gx.reshape(-1), gy.reshape(-1)], axis=-1)
    mass = rho.values.reshape(-1)
    block = max(1, DIRECT_BLOCK // len(grid))
    potential = np.empty(len(points))
    gradient = np.empty_like(points)
    for start in range(0, len(points), block):
        diff = points[start : start + block, None, :] - grid[None, :, :]
        norm = np.sqrt(np.sum(diff**2, axis=-1))
        unit = diff / np.where(norm == 0, 1.0, norm)[..., None]
        potential[start : start + block] = norm @ mass
        gradient[start : start + block] = np.einsum("g,pgd->pd", mass, unit)
    return potential, gradient


@dataclass(frozen=True)
class Evaluation:
    """Objective value, gradient and coincidence count at an iterate"""

    value: float
    gradient: np.ndarray
    coincident_pairs: int


def evaluate_objective(
    points: np.ndarray,
    rho: DensityGrid,
    field: Optional[AttractionField] = None,
    exact_attraction: bool = False,
    exact_limit: int = EXACT_REPULSION_LIMIT,
    theta: float = BARNES_HUT_THETA,
) -> Evaluation:
    """Attraction minus repulsion with its gradient"""
    shape = np.shape(points)
    flat = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    count = len(flat)
    if exact_attraction or field is None:
        potential, attract = direct_attraction(flat, rho)
    else:
        potential, attract = field.evaluate(flat)
    repel = repulsion(flat, exact_limit=exact_limit, theta=theta)
    value = float(np.sum(potential)) / count - repel.energy / (2.0 * count**2)
    gradient = attract / count - repel.force / count**2
    return Evaluation(value, gradient.reshape(shape), repel.coincident_pairs)


def objective_and_gradient(
    t: Union[Trajectory, np.ndarray],
    rho: DensityGrid,
    field: Optional[AttractionField] = None,
    exact_attraction: bool = False,
) -> tuple[float, np.ndarray]:
    """Objective F and its gradient, shaped like the samples"""
    points = t.points if isinstance(t, Trajectory) else t
    evaluation = evaluate_objective(
        points, rho, field=field, exact_attraction=exact_attraction
    )
    return evaluation.value, evaluation.gradient


def spoke_radius(spec: TrajectorySpec, q: ConstraintSet) -> float:
    """Largest in-out spoke radius that keeps a margin to the speed bound"""
    half = spec.n_samples // 2
    return min(1.0, SPOKE_MARGIN * q.step_bound * half)


def radial_spokes(
    spec: TrajectorySpec,
    angles: np.ndarray,
    radius: float,
) -> np.ndarray:
    """Straight spokes through the origin, crossing it at the middle sample"""
    half = spec.n_samples // 2
    t = (np.arange(spec.n_samples) - half) / half * radius
    direction = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    return t[None, :, None] * direction[:, None, :]


def initial_trajectory(
    spec: TrajectorySpec,
    q: ConstraintSet,
    cfg: SparklingConfig,
) -> Trajectory:
    """Initialization before projection"""
    shots = np.arange(spec.n_shots)
    if cfg.init == INIT_GOLDEN_ANGLE:
        points = radial_spokes(spec, shots * GOLDEN_ANGLE, spoke_radius(spec, q))
    elif cfg.init == INIT_RADIAL_INOUT:
        points = radial_spokes(
            spec, shots * np.pi / spec.n_shots, spoke_radius(spec, q)
        )
    elif cfg.init == INIT_FILE:
        if not cfg.init_file:
            raise ConfigurationException("init_file is required when init = 'file'")
        points = read_tensor(cfg.init_file).data.real.astype(np.float64)
        if points.shape != spec.shape:
            raise ConfigurationException(
                f"Initial trajectory has shape {points.shape}, expected {spec.shape}"
            )
    else:
        raise ConfigurationException(f"Unknown initialization: {cfg.init}")
    return Trajectory(np.clip(points, -1.0, 1.0), spec)


def upsample_shots(points: np.ndarray) -> np.ndarray:
    """Double the samples per shot, extrapolating the last segment"""
    midpoints = 0.5 * (points[:, :-1] + points[:, 1:])
    tail = points[:, -1:] + 0.5 * (points[:, -1:] - points[:, -2:-1])
    out = np.empty((points.shape[0], 2 * points.shape[1], 2))
    out[:, 0::2] = points
    out[:, 1:-1:2] = midpoints
    out[:, -1:] = tail
    return np.clip(out, -1.0, 1.0)


def sample_dwell_points(
    t: Trajectory,
    os: int,
) -> np.ndarray:
    """Positions of the ADC samples, `os` per raster interval"""
    if os < 1:
        raise ConfigurationException(f"Oversampling must be at least 1, got {os}")
    points = np.array(t.points)
    if os == 1:
        return points
    n_samples = points.shape[1]
    fraction = np.arange(n_samples * os) / os
    index = np.minimum(np.floor(fraction).astype(int), n_samples - 2)
    weight = (fraction - index)[None, :, None]
    out = points[:, index] + weight * (points[:, index + 1] - points[:, index])
    return np.clip(out, -1.0, 1.0)


def nearest_neighbour_cv(points: np.ndarray) -> float:
    """Coefficient of variation of nearest-neighbour distances"""
    flat = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(flat) < 2:
        return 0.0
    distances, _ = cKDTree(flat).query(flat, k=2)
    nearest = distances[:, 1]
    mean = float(np.mean(nearest))
    return float(np.std(nearest) / mean) if mean > 0 else 0.0


class SparklingGenerator(Base):
    """Multi-resolution projected gradient descent"""

    def __init__(
        self,
        rho: DensityGrid,
        spec: TrajectorySpec,
        q: ConstraintSet,
        cfg: SparklingConfig,
    ) -> None:
        """Initialize"""
        super().__init__()
        self.rho = rho
        self.spec = spec
        self.q = q
        self.cfg = cfg
        self.field = attraction_field(rho)
        self.history: list[tuple[int, int, float]] = []
        self.initial_value: Optional[float] = None
        self.final_value: Optional[float] = None
        self._rng = np.random.default_rng(cfg.seed)

        levels = cfg.n_levels
        if spec.n_samples % 2 ** (levels - 1) != 0:
            raise ConfigurationException(
                f"n_samples={spec.n_samples} is not divisible by "
                f"2^(n_levels - 1) = {2 ** (levels - 1)}"
            )
        if spec.n_samples // 2 ** (levels - 1) < 3:
            raise ConfigurationException(
                "Coarsest level would have fewer than 3 samples per shot"
            )

    def _evaluate(self, points: np.ndarray, level: int) -> Evaluation:
        evaluation = evaluate_objective(
            points,
            self.rho,
            field=self.field,
            exact_limit=self.cfg.exact_repulsion_limit,
            theta=self.cfg.theta,
        )
        if not np.isfinite(evaluation.value) or not np.all(
            np.isfinite(evaluation.gradient)
        ):
            raise OptimizationException(
                f"Non-finite objective at level {level}",
                epoch=level,
                iterate=np.array(points),
            )
        return evaluation

    def _too_coincident(self, evaluation: Evaluation, count: int) -> bool:
        pairs = count * (count - 1) / 2
        return pairs > 0 and evaluation.coincident_pairs > COINCIDENT_PAIR_FRACTION * pairs

    def _jitter(
        self,
        points: np.ndarray,
        projector: ConstraintProjector,
        level: int,
    ) -> tuple[np.ndarray, Evaluation]:
        """Perturb coincident samples until the pair count is acceptable"""
        evaluation = self._evaluate(points, level)
        for attempt in range(MAX_JITTERS):
            if not self._too_coincident(evaluation, points.size // 2):
                break
            self._logger.info(
                "Jittered restart %s: %s coincident pairs",
                attempt + 1,
                evaluation.coincident_pairs,
            )
            noise = self._rng.normal(
                scale=JITTER_SCALE * projector.q.step_bound, size=points.shape
            )
            points = projector.project_points(
                np.clip(points + noise, -1.0, 1.0), strict=False
            ).points
            evaluation = self._evaluate(points, level)
        return points, evaluation

    def descend(
        self,
        points: np.ndarray,
        projector: ConstraintProjector,
        level: int,
    ) -> tuple[np.ndarray, float]:
        """Projected gradient steps with backtracking on one level

        Only strictly decreasing steps are accepted. A jittered restart may
        raise F, so the lowest iterate seen is what the level returns.
        """
        points, evaluation = self._jitter(points, projector, level)
        value = evaluation.value
        best_points, best_value = points, value
        largest = float(np.max(np.linalg.norm(evaluation.gradient, axis=-1)))
        if largest == 0:
            return best_points, best_value
        eta = self.cfg.step_scale * projector.q.step_bound / largest
        self.history.append((level, 0, value))

        for iteration in range(1, self.cfg.iters_per_level + 1):
            accepted = False
            for _ in range(self.cfg.max_halvings + 1):
                candidate = projector.project_points(
                    np.clip(points - eta * evaluation.gradient, -1.0, 1.0),
                    strict=False,
                ).points
                trial = self._evaluate(candidate, level)
                if trial.value < value:
                    accepted = True
                    break
                eta /= 2.0
            if not accepted:
                self._logger.debug(
                    "Level %s stalled at iteration %s: F=%.9e", level, iteration, value
                )
                break
            points = candidate
            evaluation = trial
            value = trial.value
            if value < best_value:
                best_points, best_value = points, value
            if self._too_coincident(evaluation, points.size // 2):
                points, evaluation = self._jitter(points, projector, level)
                value = evaluation.value
            self.history.append((level, iteration, value))
            self._logger.debug(
                "Level %s iteration %s: F=%.9e eta=%.3e", level, iteration, value, eta
            )
        return best_points, best_value

    def generate(self, initial: Optional[Trajectory] = None) -> Trajectory:
        """Run every level and return the full resolution trajectory"""
        spec = self.spec
        levels = self.cfg.n_levels
        full_projector = ConstraintProjector(
            self.q, max_iter=self.cfg.proj_max_iter, tol=self.cfg.proj_tol
        )
        if initial is None:
            initial = initial_trajectory(spec, self.q, self.cfg)
        if initial.points.shape != spec.shape:
            raise ConfigurationException(
                f"Initial trajectory has shape {initial.points.shape}, "
                f"expected {spec.shape}"
            )
        start = full_projector.project_points(initial.points).points
        self.initial_value = self._evaluate(start, levels - 1).value
        self._logger.info(
            "Generating trajectory: shots=%s samples=%s levels=%s F0=%.9e",
            spec.n_shots,
            spec.n_samples,
            levels,
            self.initial_value,
        )

        points: Optional[np.ndarray] = None
        for level in range(levels):
            factor = 2 ** (levels - 1 - level)
            projector = (
                full_projector
                if factor == 1
                else ConstraintProjector(
                    self.q.decimated(factor),
                    max_iter=self.cfg.proj_max_iter,
                    tol=self.cfg.proj_tol,
                )
            )
            if points is None:
                points = start[:, ::factor]
            else:
                points = upsample_shots(points)
            points = projector.project_points(points, strict=False).points
            if factor == 1 and self._evaluate(points, level).value > self.initial_value:
                points = start
            points, value = self.descend(points, projector, level)
            self._logger.info("Level %s done: samples=%s F=%.9e", level, points.shape[1], value)

        assert points is not None
        self.final_value = self._evaluate(points, levels - 1).value
        if not self.final_value < self.initial_value:
            raise OptimizationException(
                f"No strict decrease of F: {self.final_value:.9e} "
                f"from {self.initial_value:.9e}",
                epoch=levels - 1,
                iterate=np.array(points),
            )
        result = Trajectory(np.clip(points, -1.0, 1.0), spec)
        report = is_feasible(result, self.q, tol=1e-6)
        if not report.feasible:
            raise ProjectionException(
                "Generated trajectory violates the hardware constraints",
                best=result.points,
                residual=max(report.max_speed_ratio, report.max_accel_ratio) - 1.0,
            )
        self._logger.info(
            "Trajectory generated: F=%.9e nearest-neighbour CV=%.4f",
            self.final_value,
            nearest_neighbour_cv(result.points),
        )
        return result


def generate(
    rho: DensityGrid,
    spec: TrajectorySpec,
    q: ConstraintSet,
    cfg: SparklingConfig,
    initial: Optional[Trajectory] = None,
) -> Trajectory:
    """Optimize a feasible trajectory whose samples follow the target density"""
    return SparklingGenerator(rho, spec, q, cfg).generate(initial)
