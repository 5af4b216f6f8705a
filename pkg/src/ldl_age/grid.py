"""Age grids, label distributions and discretized Gaussian targets."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError

NORMALIZATION_TOL = 1e-9


class OutOfGridWarning(UserWarning):
    """A target age lies outside the grid; its mass piles up at the boundary."""


@dataclass(frozen=True)
class AgeGrid:
    """Ordered integer ages ``a_min, a_min + 1, ..., a_max``.

    Index ``i`` corresponds to age ``a_min + i``.
    """

    a_min: int = 1
    a_max: int = 100

    def __post_init__(self):
        if int(self.a_min) != self.a_min or int(self.a_max) != self.a_max:
            raise InvalidParameterError("grid bounds must be integers")
        object.__setattr__(self, "a_min", int(self.a_min))
        object.__setattr__(self, "a_max", int(self.a_max))
        if self.a_min < 1:
            raise InvalidParameterError(f"a_min must be >= 1, got {self.a_min}")
        if self.a_max - self.a_min + 1 < 2:
            raise InvalidParameterError(
                f"grid needs at least two ages, got [{self.a_min}, {self.a_max}]"
            )

    @property
    def K(self) -> int:
        return self.a_max - self.a_min + 1

    @property
    def ages(self) -> np.ndarray:
        return np.arange(self.a_min, self.a_max + 1, dtype=np.float64)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.a_min + self.a_max)

    def age(self, index: int) -> int:
        if not 0 <= index < self.K:
            raise InvalidParameterError(f"index {index} outside [0, {self.K - 1}]")
        return self.a_min + index

    def index(self, age: int) -> int:
        if int(age) != age or not self.a_min <= age <= self.a_max:
            raise InvalidParameterError(f"age {age} is not a grid age")
        return int(age) - self.a_min

    def shifted(self, offset: int) -> AgeGrid:
        return AgeGrid(self.a_min + offset, self.a_max + offset)

    def __len__(self):
        return self.K

    @classmethod
    def parse(cls, text: str) -> AgeGrid:
        """Build a grid from ``"a_min:a_max"``."""
        try:
            lo, hi = text.split(":")
            return cls(int(lo), int(hi))
        except ValueError as exc:
            raise InvalidParameterError(f"bad grid {text!r}, expected A:B") from exc


@dataclass(frozen=True)
class LabelDistribution:
    """A probability vector over an :class:`AgeGrid`."""

    grid: AgeGrid
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != (self.grid.K,):
            raise InvalidParameterError(
                f"expected {self.grid.K} probabilities, got shape {p.shape}"
            )
        if not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
            raise InvalidParameterError("probabilities must lie in [0, 1]")
        if abs(p.sum() - 1.0) > NORMALIZATION_TOL:
            raise InvalidParameterError(f"probabilities sum to {float(p.sum())!r}, not 1")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, grid: AgeGrid) -> LabelDistribution:
        return cls(grid, np.full(grid.K, 1.0 / grid.K))

    @classmethod
    def one_hot(cls, grid: AgeGrid, age: int) -> LabelDistribution:
        p = np.zeros(grid.K)
        p[grid.index(age)] = 1.0
        return cls(grid, p)

    def mean(self) -> float:
        return expected_age(self)

    def variance(self) -> float:
        return distribution_variance(self)


@dataclass(frozen=True)
class GaussianTargetSpec:
    true_age: float
    sigma: float

    def __post_init__(self):
        if not np.isfinite(self.true_age):
            raise InvalidParameterError("true_age must be finite")
        if not self.sigma > 0 or not np.isfinite(self.sigma):
            raise InvalidParameterError(f"sigma must be positive, got {self.sigma!r}")


def gaussian_target_probs(true_age, sigma, grid: AgeGrid) -> np.ndarray:
    """Vectorized discretized Gaussian targets.

    ``true_age`` may be a scalar or a 1-D array of N ages; the result has
    shape ``(K,)`` or ``(N, K)``.  Exponents are shifted by their row maximum
    before exponentiating, so tiny ``sigma`` stays finite.
    """
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be positive, got {sigma!r}")
    t = np.asarray(true_age, dtype=np.float64)
    expo = -((grid.ages - t[..., None]) ** 2) / (2.0 * sigma * sigma)
    expo -= expo.max(axis=-1, keepdims=True)
    w = np.exp(expo)
    return w / w.sum(axis=-1, keepdims=True)


def discretize_gaussian(spec: GaussianTargetSpec, grid: AgeGrid) -> LabelDistribution:
    """Target distribution ``y_k ∝ exp(-(age_k - t)^2 / (2 sigma^2))`` on ``grid``.

    Targets outside the grid are allowed and emit :class:`OutOfGridWarning`.
    """
    if not grid.a_min <= spec.true_age <= grid.a_max:
        warnings.warn(
            f"target age {spec.true_age} outside grid [{grid.a_min}, {grid.a_max}]",
            OutOfGridWarning,
            stacklevel=2,
        )
    return LabelDistribution(grid, gaussian_target_probs(spec.true_age, spec.sigma, grid))


def expected_age(dist: LabelDistribution) -> float:
    """Mean age ``sum_k age_k * p_k``, clipped into the grid against round-off."""
    grid = dist.grid
    return float(np.clip(grid.ages @ dist.probs, grid.a_min, grid.a_max))


def distribution_variance(dist: LabelDistribution) -> float:
    ages = dist.grid.ages
    mu = ages @ dist.probs
    return float(dist.probs @ (ages - mu) ** 2)
