"""SPARKLING MRI: Hardware Constraints

The constraint set bounds the norm of the first and second finite
differences of every shot, pins optional anchor samples and keeps every
free sample inside the box [-1, 1]^2. Projection solves the dual problem
with an accelerated proximal ascent that restarts its momentum per shot.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from ..base import Base
from ..const import DEFAULT_PROJ_MAX_ITER, DEFAULT_PROJ_TOL
from ..exceptions import DataException, ProjectionException
from .core import (
    Trajectory,
    TrajectorySpec,
    normalized_accel_bound,
    normalized_speed_bound,
)

# Upper bound on ||D1||^2 + ||D2||^2 + ||I||^2
DUAL_LIPSCHITZ = 21.0
FEASIBILITY_SLACK = 1e-12
TINY = 1e-300


@dataclass(frozen=True)
class Anchor:
    """Sample `index` pinned to `point`; `shot=None` applies to every shot"""

    index: int
    point: tuple[float, float] = (0.0, 0.0)
    shot: Optional[int] = None

    def __post_init__(self) -> None:
        """Validate"""
        if self.index < 0:
            raise ValueError(f"Anchor index must be nonnegative, got {self.index}")
        if max(abs(self.point[0]), abs(self.point[1])) > 1.0:
            raise ValueError(f"Anchor point {self.point} lies outside [-1, 1]^2")


@dataclass(frozen=True)
class ConstraintSet:
    """Speed, acceleration, anchor and box constraints in normalized units"""

    step_bound: float
    accel_bound: float
    anchors: tuple[Anchor, ...] = field(default_factory=tuple)
    box: bool = True

    def __post_init__(self) -> None:
        """Validate"""
        if not self.step_bound > 0 or not self.accel_bound > 0:
            raise ValueError("Speed and acceleration bounds must be positive")
        object.__setattr__(self, "anchors", tuple(self.anchors))

    @classmethod
    def from_spec(
        cls,
        spec: TrajectorySpec,
        anchor_center: bool = True,
    ) -> ConstraintSet:
        """Hardware bounds, pinning the middle sample of every shot to the origin"""
        anchors: tuple[Anchor, ...] = ()
        if anchor_center:
            anchors = (Anchor(index=spec.n_samples // 2),)
        return cls(
            step_bound=normalized_speed_bound(spec.hardware),
            accel_bound=normalized_accel_bound(spec.hardware),
            anchors=anchors,
        )

    def decimated(self, factor: int) -> ConstraintSet:
        """Constraints for a trajectory keeping every `factor`-th sample"""
        if factor == 1:
            return self
        return replace(
            self,
            step_bound=self.step_bound * factor,
            accel_bound=self.accel_bound * factor**2,
            anchors=tuple(
                replace(anchor, index=anchor.index // factor)
                for anchor in self.anchors
            ),
        )

    def anchor_layout(
        self,
        n_shots: int,
        n_samples: int,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Boolean pinned mask [Nc][Ns] and pinned values [Nc][Ns][2]"""
        pinned = np.zeros((n_shots, n_samples), dtype=bool)
        values = np.zeros((n_shots, n_samples, 2))
        for anchor in self.anchors:
            if anchor.index >= n_samples:
                raise DataException(
                    f"Anchor index {anchor.index} outside [0, {n_samples})"
                )
            if anchor.shot is not None and not 0 <= anchor.shot < n_shots:
                raise DataException(
                    f"Anchor shot {anchor.shot} outside [0, {n_shots})"
                )
            shots = range(n_shots) if anchor.shot is None else [anchor.shot]
            for shot in shots:
                pinned[shot, anchor.index] = True
                values[shot, anchor.index] = anchor.point
        return pinned, values


@dataclass(frozen=True)
class FeasibilityReport:
    """Constraint ratios of a trajectory and where the worst ones occur"""

    feasible: bool
    max_speed_ratio: float
    max_accel_ratio: float
    worst_speed: tuple[int, int]
    worst_accel: tuple[int, int]
    anchor_error: float
    box_excess: float

    def as_dict(self) -> dict:
        """Serializable form"""
        return {
            "feasible": self.feasible,
            "max_speed_ratio": self.max_speed_ratio,
            "max_accel_ratio": self.max_accel_ratio,
            "worst_speed": list(self.worst_speed),
            "worst_accel": list(self.worst_accel),
            "anchor_error": self.anchor_error,
            "box_excess": self.box_excess,
        }


def _points(t: Union[Trajectory, np.ndarray]) -> np.ndarray:
    points = t.points if isinstance(t, Trajectory) else np.asarray(t, dtype=float)
    if points.ndim != 3 or points.shape[-1] != 2 or points.shape[1] < 3:
        raise DataException(f"Expected [Nc][Ns>=3][2] samples, got {points.shape}")
    return points


def _worst(norms: np.ndarray) -> tuple[float, tuple[int, int]]:
    shot, index = np.unravel_index(int(np.argmax(norms)), norms.shape)
    return float(norms[shot, index]), (int(shot), int(index))


def is_feasible(
    t: Union[Trajectory, np.ndarray],
    q: ConstraintSet,
    tol: float = 1e-6,
) -> FeasibilityReport:
    """Check every constraint with relative slack `tol`"""
    points = _points(t)
    speed = np.linalg.norm(np.diff(points, axis=1), axis=-1) / q.step_bound
    accel = np.linalg.norm(np.diff(points, n=2, axis=1), axis=-1) / q.accel_bound
    max_speed, worst_speed = _worst(speed)
    max_accel, worst_accel = _worst(accel)

    pinned, values = q.anchor_layout(points.shape[0], points.shape[1])
    anchor_error = 0.0
    if pinned.any():
        anchor_error = float(np.max(np.abs(points[pinned] - values[pinned])))
    box_excess = 0.0
    if q.box:
        box_excess = max(0.0, float(np.max(np.abs(points))) - 1.0)

    feasible = (
        max_speed <= 1.0 + tol
        and max_accel <= 1.0 + tol
        and anchor_error <= tol
        and box_excess <= tol
    )
    return FeasibilityReport(
        feasible=bool(feasible),
        max_speed_ratio=max_speed,
        max_accel_ratio=max_accel,
        worst_speed=worst_speed,
        worst_accel=worst_accel,
        anchor_error=anchor_error,
        box_excess=box_excess,
    )


def _diff_adjoint(u: np.ndarray) -> np.ndarray:
    """Transpose of the first difference along the sample axis"""
    return -np.diff(np.pad(u, ((0, 0), (1, 1), (0, 0))), axis=1)


def _project_ball(v: np.ndarray, radius: float) -> np.ndarray:
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    return v * np.minimum(1.0, radius / np.maximum(norm, TINY))


@dataclass(frozen=True)
class ProjectionResult:
    """Projected samples with convergence diagnostics"""

    points: np.ndarray
    iterations: int
    converged: bool
    residual: float
    gap: float


class ConstraintProjector(Base):
    """Euclidean projection onto a constraint set, warm-starting its duals"""

    def __init__(
        self,
        q: ConstraintSet,
        max_iter: int = DEFAULT_PROJ_MAX_ITER,
        tol: float = DEFAULT_PROJ_TOL,
    ) -> None:
        """Initialize"""
        super().__init__()
        self.q = q
        self.max_iter = max_iter
        self.tol = tol
        self._duals: Optional[tuple[np.ndarray, np.ndarray, np.ndarray]] = None

    def reset(self) -> None:
        """Forget warm-start duals"""
        self._duals = None

    def _violation(
        self,
        x: np.ndarray,
        free: np.ndarray,
    ) -> np.ndarray:
        """Largest relative constraint excess of every shot"""
        speed = np.linalg.norm(np.diff(x, axis=1), axis=-1) / self.q.step_bound
        accel = np.linalg.norm(np.diff(x, n=2, axis=1), axis=-1) / self.q.accel_bound
        viol = np.maximum(np.max(speed, axis=1), np.max(accel, axis=1)) - 1.0
        if self.q.box:
            excess = np.where(free[..., None], np.abs(x) - 1.0, 0.0)
            viol = np.maximum(viol, np.max(excess, axis=(1, 2)))
        return np.maximum(viol, 0.0)

    def _primal(
        self,
        z: np.ndarray,
        u1: np.ndarray,
        u2: np.ndarray,
        u3: np.ndarray,
        free: np.ndarray,
        pinned_values: np.ndarray,
    ) -> np.ndarray:
        """Minimizer of the Lagrangian for fixed multipliers"""
        adjoint = _diff_adjoint(u1) + _diff_adjoint(_diff_adjoint(u2)) + u3
        return np.where(free[..., None], z - adjoint, pinned_values)

    def _dual_value(
        self,
        z: np.ndarray,
        x: np.ndarray,
        duals: tuple[np.ndarray, np.ndarray, np.ndarray],
    ) -> float:
        u1, u2, u3 = duals
        value = 0.5 * np.sum((x - z) ** 2)
        value += np.sum(u1 * np.diff(x, axis=1)) + np.sum(u2 * np.diff(x, n=2, axis=1))
        value -= self.q.step_bound * np.sum(np.linalg.norm(u1, axis=-1))
        value -= self.q.accel_bound * np.sum(np.linalg.norm(u2, axis=-1))
        if self.q.box:
            value += np.sum(u3 * x) - np.sum(np.abs(u3))
        return float(value)

    def _polish(
        self,
        x: np.ndarray,
        pinned: np.ndarray,
        pinned_values: np.ndarray,
    ) -> np.ndarray:
        """Shrink every shot towards a constant feasible shot until feasible

        A shot whose anchors all share one point contracts towards that
        point, other shots towards the origin. Constant shots have zero
        differences, so the contraction only scales the differences.
        """
        out = x.copy()
        for shot in range(x.shape[0]):
            anchored = pinned_values[shot][pinned[shot]]
            if len(anchored) and np.ptp(anchored, axis=0).max() > 0:
                continue
            center = anchored[0] if len(anchored) else np.zeros(2)
            delta = x[shot] - center
            scale = 1.0
            speed = np.max(np.linalg.norm(np.diff(delta, axis=0), axis=-1))
            if speed > self.q.step_bound:
                scale = min(scale, self.q.step_bound / speed)
            accel = np.max(np.linalg.norm(np.diff(delta, n=2, axis=0), axis=-1))
            if accel > self.q.accel_bound:
                scale = min(scale, self.q.accel_bound / accel)
            if self.q.box:
                with np.errstate(divide="ignore", invalid="ignore"):
                    limit = np.where(
                        delta > 0,
                        (1.0 - center) / delta,
                        np.where(delta < 0, (-1.0 - center) / delta, np.inf),
                    )
                scale = min(scale, float(np.min(limit)))
            if scale < 1.0:
                out[shot] = center + scale * delta
        return out

    def project_points(
        self,
        z: np.ndarray,
        strict: bool = True,
    ) -> ProjectionResult:
        """Project samples [Nc][Ns][2] shot by shot

        With `strict` unset, a run that exhausts its iterations still returns
        when the polished iterate is feasible.
        """
        z = _points(z).astype(np.float64, copy=True)
        n_shots, n_samples, _ = z.shape
        q = self.q
        pinned, pinned_values = q.anchor_layout(n_shots, n_samples)
        free = ~pinned
        tol = self.tol

        # Shots that already satisfy every constraint stay untouched
        initial = self._violation(z, free)
        anchor_gap = np.max(
            np.where(pinned[..., None], np.abs(z - pinned_values), 0.0), axis=(1, 2)
        )
        active = ~((initial <= FEASIBILITY_SLACK) & (anchor_gap == 0.0))
        if not active.any():
            return ProjectionResult(z, 0, True, 0.0, 0.0)

        if self._duals is not None and self._duals[2].shape == z.shape:
            u1, u2, u3 = (np.array(dual) for dual in self._duals)
        else:
            u1 = np.zeros((n_shots, n_samples - 1, 2))
            u2 = np.zeros((n_shots, n_samples - 2, 2))
            u3 = np.zeros_like(z)
        u1[~active] = 0.0
        u2[~active] = 0.0
        u3[~active] = 0.0
        u3[pinned] = 0.0
        w1, w2, w3 = u1.copy(), u2.copy(), u3.copy()
        theta = np.ones(n_shots)
        step = 1.0 / DUAL_LIPSCHITZ

        x = self._primal(z, u1, u2, u3, free, pinned_values)
        x[~active] = z[~active]
        done = ~active
        iterations = 0
        residual = np.zeros(n_shots)
        for iterations in range(1, self.max_iter + 1):
            xw = self._primal(z, w1, w2, w3, free, pinned_values)
            v1 = w1 + step * np.diff(xw, axis=1)
            v2 = w2 + step * np.diff(xw, n=2, axis=1)
            n1 = v1 - _project_ball(v1, step * q.step_bound)
            n2 = v2 - _project_ball(v2, step * q.accel_bound)
            if q.box:
                v3 = w3 + step * xw
                n3 = np.where(free[..., None], v3 - np.clip(v3, -step, step), 0.0)
            else:
                n3 = np.zeros_like(u3)

            theta_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta**2))
            beta = (theta - 1.0) / theta_next
            restart = (
                np.sum((w1 - n1) * (n1 - u1), axis=(1, 2))
                + np.sum((w2 - n2) * (n2 - u2), axis=(1, 2))
                + np.sum((w3 - n3) * (n3 - u3), axis=(1, 2))
            ) > 0
            beta = np.where(restart, 0.0, beta)
            theta_next = np.where(restart, 1.0, theta_next)

            x_next = self._primal(z, n1, n2, n3, free, pinned_values)
            change = np.max(np.abs(x_next - x), axis=(1, 2))
            residual = self._violation(x_next, free)

            live = ~done
            mask = live[:, None, None]
            coefficient = beta[:, None, None]
            w1 = np.where(mask, n1 + coefficient * (n1 - u1), w1)
            w2 = np.where(mask, n2 + coefficient * (n2 - u2), w2)
            w3 = np.where(mask, n3 + coefficient * (n3 - u3), w3)
            u1 = np.where(mask, n1, u1)
            u2 = np.where(mask, n2, u2)
            u3 = np.where(mask, n3, u3)
            x = np.where(mask, x_next, x)
            theta = np.where(live, theta_next, theta)

            done |= live & (change <= tol) & (residual <= tol)
            if done.all():
                break

        self._duals = (u1, u2, u3)
        residual = self._violation(x, free)
        converged = bool(done.all())
        # Shots within tolerance keep the dual iterate as is
        rough = active & (residual > tol)
        polished = np.where(active[:, None, None], x, z)
        if rough.any():
            repaired = self._polish(x, pinned, pinned_values)
            if q.box:
                repaired = np.clip(repaired, -1.0, 1.0)
            polished[rough] = repaired[rough]
        final_residual = float(np.max(self._violation(polished, free)))
        gap = 0.5 * float(np.sum((polished - z) ** 2)) - self._dual_value(
            z, x, (u1, u2, u3)
        )
        self._logger.debug(
            "Projection finished: iterations=%s converged=%s residual=%.3e gap=%.3e",
            iterations,
            converged,
            float(np.max(residual)),
            gap,
        )

        if not converged and (strict or final_residual > tol):
            raise ProjectionException(
                f"Projection did not converge in {self.max_iter} iterations",
                best=polished,
                residual=float(np.max(residual)),
            )
        return ProjectionResult(
            points=polished,
            iterations=iterations,
            converged=converged,
            residual=final_residual,
            gap=gap,
        )

    def project(
        self,
        z: Trajectory,
        strict: bool = True,
    ) -> Trajectory:
        """Project a trajectory"""
        return z.with_points(self.project_points(z.points, strict=strict).points)


def project(
    z: Trajectory,
    q: ConstraintSet,
    max_iter: int = DEFAULT_PROJ_MAX_ITER,
    tol: float = DEFAULT_PROJ_TOL,
) -> Trajectory:
    """Euclidean projection of every shot onto the constraint set"""
    return ConstraintProjector(q, max_iter=max_iter, tol=tol).project(z)
