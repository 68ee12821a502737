"""Simulated onboard sensors over a square downward-projected field of view.

Continuous fields are sampled pointwise with additive Gaussian noise;
discrete fields are observed through a row-stochastic confusion matrix.
Both sensors are pure given an explicit random generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .grid_world import FieldKind, GridGeometry, TerrainField


@dataclass(frozen=True)
class Pose:
    """Robot grid position (column cell_x, row cell_y)."""

    cell_x: int
    cell_y: int

    def validate(self, geometry: GridGeometry) -> "Pose":
        if not geometry.in_bounds(self.cell_x, self.cell_y):
            raise ConfigurationError(f"pose {self} outside grid")
        return self


@dataclass(frozen=True)
class FieldOfView:
    """Square (2h+1) x (2h+1) cell window, clipped at grid borders."""

    half_extent: int = 1

    def __post_init__(self) -> None:
        if self.half_extent < 0:
            raise ConfigurationError("half_extent must be >= 0")


@dataclass(frozen=True)
class ContinuousSensorModel:
    noise_std: float = 0.1

    def __post_init__(self) -> None:
        if self.noise_std < 0:
            raise ConfigurationError("noise_std must be >= 0")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Row-stochastic matrix; entry (i, j) = p(observed class j | true class i)."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ConfigurationError("confusion matrix must be square")
        if np.any(m < 0):
            raise ConfigurationError("confusion matrix entries must be >= 0")
        if np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-9):
            raise ConfigurationError("confusion matrix rows must sum to 1")
        object.__setattr__(self, "matrix", m)

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]

    @staticmethod
    def with_diagonal(K: int, diagonal: float = 0.8) -> "ConfusionMatrix":
        """Diagonal-dominant matrix with the off-diagonal mass spread uniformly."""
        if K < 2 or not 0.0 < diagonal <= 1.0:
            raise ConfigurationError("need K >= 2 and diagonal in (0, 1]")
        off = (1.0 - diagonal) / (K - 1)
        m = np.full((K, K), off)
        np.fill_diagonal(m, diagonal)
        return ConfusionMatrix(m)


@dataclass(frozen=True)
class Measurement:
    """Observed values (or class ids) at unique flat cell indices."""

    cells: np.ndarray
    values: np.ndarray
    step: int = 0

    def __post_init__(self) -> None:
        cells = np.asarray(self.cells, dtype=np.int64)
        if cells.size != np.unique(cells).size:
            raise ConfigurationError("measurement cells must be unique")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "values", np.asarray(self.values))

    def __len__(self) -> int:
        return self.cells.size


def fov_cells(geometry: GridGeometry, pose: Pose, fov: FieldOfView) -> np.ndarray:
    """Flat indices of the FoV window around the pose, clipped to the grid."""
    pose.validate(geometry)
    h = fov.half_extent
    x0, x1 = max(0, pose.cell_x - h), min(geometry.width - 1, pose.cell_x + h)
    y0, y1 = max(0, pose.cell_y - h), min(geometry.height - 1, pose.cell_y + h)
    xs = np.arange(x0, x1 + 1)
    ys = np.arange(y0, y1 + 1)
    xx, yy = np.meshgrid(xs, ys)
    return (yy.ravel() * geometry.width + xx.ravel()).astype(np.int64)


def sense_continuous(
    field: TerrainField,
    pose: Pose,
    fov: FieldOfView,
    model: ContinuousSensorModel,
    rng: np.random.Generator,
    step: int = 0,
) -> Measurement:
    """Noisy point samples z = F(cell) + N(0, noise_std^2) over the FoV."""
    if field.kind is not FieldKind.CONTINUOUS:
        raise ConfigurationError("sense_continuous needs a continuous field")
    cells = fov_cells(field.geometry, pose, fov)
    truth = field.flat_values()[cells]
    noise = rng.normal(0.0, model.noise_std, size=cells.size)
    return Measurement(cells=cells, values=truth + noise, step=step)


def sense_semantic(
    field: TerrainField,
    pose: Pose,
    fov: FieldOfView,
    confusion: ConfusionMatrix,
    rng: np.random.Generator,
    step: int = 0,
) -> Measurement:
    """Per-cell class observation drawn from the true class's confusion row."""
    if field.kind is not FieldKind.DISCRETE:
        raise ConfigurationError("sense_semantic needs a discrete field")
    if confusion.num_classes != field.classes:
        raise ConfigurationError("confusion matrix size does not match class count")
    cells = fov_cells(field.geometry, pose, fov)
    truth = field.flat_values()[cells]
    rows = confusion.matrix[truth - 1]
    cum = np.cumsum(rows, axis=1)
    u = rng.random(cells.size)
    observed = (u[:, None] >= cum).sum(axis=1) + 1
    observed = np.minimum(observed, confusion.num_classes)
    return Measurement(cells=cells, values=observed.astype(np.int64), step=step)
