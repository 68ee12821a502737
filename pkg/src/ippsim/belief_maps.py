"""Probabilistic terrain map back-ends and per-cell uncertainty measures.

Two map representations are provided:

* a Gaussian map: a dense joint Gaussian over all cell centers with a
  Matern-3/2 prior, updated by exact batch conditioning on measurements
  snapped to cell centers. Sequential fusion is algebraically identical to
  one batch regression on all points, at O(cells^2 * batch) per update.
* a K-class occupancy grid: independent per-cell categorical distributions
  updated by Bayes rule through the sensor confusion matrix, with
  probability clamping to prevent saturation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigurationError, NumericalError
from .grid_world import GridGeometry
from .sensors import ConfusionMatrix, Measurement

_JITTER = 1e-8


class UncertaintyUse(Enum):
    """Which uncertainty flavor to report for a cell.

    STATE feeds the planning state (entropy in nats for occupancy maps);
    REWARD feeds the uncertainty-reduction reward (exponential entropy for
    occupancy maps). Gaussian maps use the posterior variance for both.
    """

    STATE = "state"
    REWARD = "reward"


@dataclass(frozen=True)
class MaternKernel:
    """Matern covariance with smoothness fixed at 3/2."""

    lengthscale: float
    signal_variance: float = 1.0

    def __post_init__(self) -> None:
        if self.lengthscale <= 0 or self.signal_variance <= 0:
            raise ConfigurationError("kernel lengthscale and variance must be > 0")


def kernel_eval(a: np.ndarray, b: np.ndarray, kernel: MaternKernel) -> float:
    """Matern-3/2 covariance between two points in unit-square coordinates."""
    d = float(np.linalg.norm(np.asarray(a, float) - np.asarray(b, float)))
    r = np.sqrt(3.0) * d / kernel.lengthscale
    return kernel.signal_variance * (1.0 + r) * np.exp(-r)


def kernel_matrix(points: np.ndarray, kernel: MaternKernel) -> np.ndarray:
    """Dense Gram matrix of the Matern-3/2 kernel over a point set."""
    diff = points[:, None, :] - points[None, :, :]
    d = np.sqrt((diff**2).sum(axis=-1))
    r = np.sqrt(3.0) * d / kernel.lengthscale
    return kernel.signal_variance * (1.0 + r) * np.exp(-r)


@dataclass(frozen=True)
class GaussianMapBelief:
    """Joint Gaussian over cell values: flat mean (n,) and dense covariance (n, n).

    Treated as immutable; fusion returns new instances.
    """

    geometry: GridGeometry
    mean: np.ndarray
    covariance: np.ndarray
    noise_variance: float

    def clone(self) -> "GaussianMapBelief":
        return replace(self, mean=self.mean.copy(), covariance=self.covariance.copy())

    def variance(self) -> np.ndarray:
        return np.diag(self.covariance).copy()


@dataclass(frozen=True)
class OccupancyMapBelief:
    """Per-cell categorical distributions, shape (n, K), rows summing to 1."""

    geometry: GridGeometry
    K: int
    probs: np.ndarray
    clamp: tuple[float, float] = (0.01, 0.99)

    def clone(self) -> "OccupancyMapBelief":
        return replace(self, probs=self.probs.copy())


MapBelief = GaussianMapBelief | OccupancyMapBelief


def gp_init(
    geometry: GridGeometry,
    kernel: MaternKernel,
    prior_mean: float = 0.5,
    noise_variance: float = 0.01,
) -> GaussianMapBelief:
    """Prior Gaussian map: constant mean, kernel Gram covariance plus jitter."""
    if noise_variance <= 0:
        raise ConfigurationError("noise_variance must be > 0")
    cov = kernel_matrix(geometry.cell_centers(), kernel)
    cov[np.diag_indices_from(cov)] += _JITTER
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("prior covariance not positive definite") from exc
    mean = np.full(geometry.num_cells, float(prior_mean))
    return GaussianMapBelief(geometry, mean, cov, noise_variance)


def gp_fuse(belief: GaussianMapBelief, m: Measurement) -> GaussianMapBelief:
    """Condition the joint Gaussian on a measurement batch.

    With selection H onto the measured cells and R = noise_variance * I:
    mean' = mean + P H^T (H P H^T + R)^-1 (z - H mean) and
    P' = P - P H^T (H P H^T + R)^-1 H P, symmetrized after the update.
    """
    if len(m) == 0:
        return belief
    idx = m.cells
    if idx.min() < 0 or idx.max() >= belief.geometry.num_cells:
        raise ConfigurationError("measurement cells outside grid")
    z = np.asarray(m.values, dtype=np.float64)
    P = belief.covariance
    S = P[np.ix_(idx, idx)] + belief.noise_variance * np.eye(idx.size)
    try:
        factor = cho_factor(S, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular innovation matrix in fusion") from exc
    cross = P[:, idx]
    solved = cho_solve(factor, cross.T)  # (m, n) = S^-1 H P
    mean = belief.mean + solved.T @ (z - belief.mean[idx])
    cov = P - cross @ solved
    cov = 0.5 * (cov + cov.T)
    return GaussianMapBelief(belief.geometry, mean, cov, belief.noise_variance)


def occ_init(
    geometry: GridGeometry, K: int, clamp: tuple[float, float] = (0.01, 0.99)
) -> OccupancyMapBelief:
    """Uniform categorical prior per cell."""
    p_min, p_max = clamp
    if K < 2:
        raise ConfigurationError("occupancy map needs K >= 2")
    if not 0.0 < p_min < 1.0 / K < p_max < 1.0:
        raise ConfigurationError(f"clamp {clamp} must satisfy 0 < p_min < 1/K < p_max < 1")
    probs = np.full((geometry.num_cells, K), 1.0 / K)
    return OccupancyMapBelief(geometry, K, probs, clamp)


def bayes_class_update(
    cell_probs: np.ndarray, likelihood: np.ndarray, clamp: tuple[float, float]
) -> np.ndarray:
    """Single-cell Bayes update with clamping.

    The posterior is renormalized, clamped entrywise into [p_min, p_max],
    and brought back to sum 1 by rescaling the non-maximal entries while the
    dominant entry is held at its (possibly clamped) value. Holding the
    dominant entry lets repeated consistent observations reach p_max exactly.
    """
    p = cell_probs * likelihood
    total = p.sum()
    if total <= 0:
        raise NumericalError("zero posterior mass in occupancy update")
    p = p / total
    clipped = np.clip(p, clamp[0], clamp[1])
    if np.array_equal(clipped, p):
        return p
    k = int(np.argmax(clipped))
    rest = clipped.sum() - clipped[k]
    clipped[np.arange(clipped.size) != k] *= (1.0 - clipped[k]) / rest
    return clipped


def occ_fuse(
    belief: OccupancyMapBelief, m: Measurement, confusion: ConfusionMatrix
) -> OccupancyMapBelief:
    """Bayes-update the observed cells through the confusion matrix."""
    if confusion.num_classes != belief.K:
        raise ConfigurationError("confusion matrix size does not match belief")
    if len(m) == 0:
        return belief
    observed = np.asarray(m.values, dtype=np.int64)
    if observed.min() < 1 or observed.max() > belief.K:
        raise ConfigurationError("observed classes must lie in 1..K")
    probs = belief.probs.copy()
    for cell, obs in zip(m.cells, observed):
        likelihood = confusion.matrix[:, obs - 1]
        probs[cell] = bayes_class_update(probs[cell], likelihood, belief.clamp)
    return replace(belief, probs=probs)


def entropy_nats(probs: np.ndarray) -> np.ndarray:
    """Shannon entropy along the last axis, in nats."""
    safe = np.where(probs > 0, probs, 1.0)
    return -(probs * np.log(safe)).sum(axis=-1)


def uncertainty_grid(belief: MapBelief, use: UncertaintyUse) -> np.ndarray:
    """Per-cell uncertainty (flat, length num_cells) for the requested use."""
    if isinstance(belief, GaussianMapBelief):
        return belief.variance()
    h = entropy_nats(belief.probs)
    if use is UncertaintyUse.REWARD:
        return np.exp(h)
    return h


def cell_uncertainty(belief: MapBelief, cell: int, use: UncertaintyUse) -> float:
    """Uncertainty of a single cell given by its flat index."""
    if not 0 <= cell < belief.geometry.num_cells:
        raise ConfigurationError("cell index outside grid")
    if isinstance(belief, GaussianMapBelief):
        return float(belief.covariance[cell, cell])
    h = float(entropy_nats(belief.probs[cell]))
    return float(np.exp(h)) if use is UncertaintyUse.REWARD else h


def export_belief_csv(belief: MapBelief, out_dir: str | Path, prefix: str = "belief") -> list[Path]:
    """Write belief snapshots as CSV grids; returns the written paths.

    Gaussian maps produce ``<prefix>_mean.csv`` and ``<prefix>_variance.csv``;
    occupancy maps one ``<prefix>_class<k>.csv`` per class layer.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    geom = belief.geometry
    written = []
    if isinstance(belief, GaussianMapBelief):
        layers = {
            f"{prefix}_mean": belief.mean.reshape(geom.height, geom.width),
            f"{prefix}_variance": belief.variance().reshape(geom.height, geom.width),
        }
    else:
        layers = {
            f"{prefix}_class{k + 1}": belief.probs[:, k].reshape(geom.height, geom.width)
            for k in range(belief.K)
        }
    for name, grid in layers.items():
        path = out_dir / f"{name}.csv"
        _write_csv_grid(grid, path)
        written.append(path)
    return written


def _write_csv_grid(grid: np.ndarray, path: Path) -> None:
    lines = [",".join(repr(float(v)) for v in row) for row in grid]
    path.write_text("\n".join(lines) + "\n")
