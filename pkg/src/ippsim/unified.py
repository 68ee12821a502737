"""Map-agnostic interest belief and the assembled planning state.

Any probabilistic map is reduced to one per-cell quantity: the probability
that the cell's feature value is interesting. For occupancy maps this is the
categorical mass on the interesting classes; for Gaussian maps it is the
posterior mass above the interest threshold, computed from the normal CDF.
Combined with per-cell uncertainty, pose, remaining budget, and the mission
hyperparameters, this yields a planning state independent of the map type.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .belief_maps import (
    GaussianMapBelief,
    MapBelief,
    OccupancyMapBelief,
    UncertaintyUse,
    uncertainty_grid,
)
from .errors import ConfigurationError
from .grid_world import ContinuousInterest, DiscreteInterest, InterestSpec
from .sensors import Pose

_DEGENERATE_STD = 1e-12


@dataclass(frozen=True)
class Hyperparams:
    """Mission hyperparameters exposed to planners.

    Exactly one of ``f_th`` / ``interesting_classes`` is set. Spatially
    independent (occupancy) mapping is encoded by ``l_gp_encoding == 0``;
    Gaussian maps carry their kernel lengthscale.
    """

    l_gp_encoding: float
    f_th: float | None = None
    interesting_classes: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if (self.f_th is None) == (self.interesting_classes is None):
            raise ConfigurationError(
                "exactly one of f_th / interesting_classes must be set"
            )
        if self.l_gp_encoding < 0:
            raise ConfigurationError("l_gp_encoding must be >= 0")
        occupancy = self.interesting_classes is not None
        if occupancy != (self.l_gp_encoding == 0.0):
            raise ConfigurationError(
                "l_gp_encoding must be 0 exactly for occupancy missions"
            )

    @staticmethod
    def for_spec(spec: InterestSpec, lengthscale: float = 0.0) -> "Hyperparams":
        if isinstance(spec, ContinuousInterest):
            return Hyperparams(l_gp_encoding=lengthscale, f_th=spec.f_th)
        return Hyperparams(l_gp_encoding=0.0, interesting_classes=spec.classes)


@dataclass(frozen=True)
class UnifiedState:
    """Planning state: interest and uncertainty rasters plus scalars."""

    interest_prob: np.ndarray
    uncertainty: np.ndarray
    pose: Pose
    remaining_budget: float
    hyperparams: Hyperparams

    def __post_init__(self) -> None:
        if self.interest_prob.shape != self.uncertainty.shape:
            raise ConfigurationError("state grids must share geometry")
        if self.remaining_budget < 0:
            raise ConfigurationError("remaining budget must be >= 0")


def interest_grid(belief: MapBelief, spec: InterestSpec) -> np.ndarray:
    """Per-cell probability (flat, length num_cells) of being interesting.

    Returns exactly 1.0 everywhere when the whole feature space is
    interesting, for either map kind.
    """
    n = belief.geometry.num_cells
    if isinstance(belief, OccupancyMapBelief):
        if not isinstance(spec, DiscreteInterest):
            raise ConfigurationError("occupancy belief needs a class-subset spec")
        if spec.num_classes != belief.K:
            raise ConfigurationError("spec class count does not match belief")
        if spec.is_exploration:
            return np.ones(n)
        cols = [c - 1 for c in spec.classes]
        return belief.probs[:, cols].sum(axis=1)
    if not isinstance(spec, ContinuousInterest):
        raise ConfigurationError("Gaussian belief needs a threshold spec")
    if spec.is_exploration:
        return np.ones(n)
    std = np.sqrt(np.clip(belief.variance(), 0.0, None))
    degenerate = std <= _DEGENERATE_STD
    safe_std = np.where(degenerate, 1.0, std)
    upper_mass = ndtr((belief.mean - spec.f_th) / safe_std)
    indicator = (belief.mean >= spec.f_th).astype(np.float64)
    return np.where(degenerate, indicator, upper_mass)


def interest_probability(belief: MapBelief, spec: InterestSpec, cell: int) -> float:
    """Probability that a single cell (flat index) is interesting."""
    if not 0 <= cell < belief.geometry.num_cells:
        raise ConfigurationError("cell index outside grid")
    return float(interest_grid(belief, spec)[cell])


def assemble_state(
    belief: MapBelief,
    spec: InterestSpec,
    pose: Pose,
    remaining_budget: float,
    hp: Hyperparams,
) -> UnifiedState:
    """Build the planning state from the live belief."""
    geom = belief.geometry
    pose.validate(geom)
    interest = interest_grid(belief, spec).reshape(geom.height, geom.width)
    unc = uncertainty_grid(belief, UncertaintyUse.STATE).reshape(geom.height, geom.width)
    return UnifiedState(interest, unc, pose, float(remaining_budget), hp)


def export_state_raster(state: UnifiedState, path: str | Path) -> Path:
    """Write the state as layered CSV: interest rows, uncertainty rows, scalars.

    The scalar row is ``cell_x, cell_y, remaining_budget, l_gp_encoding``
    followed by ``f_th`` (Gaussian missions, l_gp_encoding > 0) or the
    interesting class ids (occupancy missions, l_gp_encoding == 0).
    Round-trips through :func:`load_state_raster` losslessly.
    """
    path = Path(path)
    rows = [",".join(repr(float(v)) for v in row) for row in state.interest_prob]
    rows += [",".join(repr(float(v)) for v in row) for row in state.uncertainty]
    hp = state.hyperparams
    scalars = [
        float(state.pose.cell_x),
        float(state.pose.cell_y),
        float(state.remaining_budget),
        float(hp.l_gp_encoding),
    ]
    if hp.interesting_classes is not None:
        scalars += [float(c) for c in hp.interesting_classes]
    else:
        scalars.append(float(hp.f_th))
    rows.append(",".join(repr(v) for v in scalars))
    path.write_text("\n".join(rows) + "\n")
    return path


def load_state_raster(path: str | Path) -> UnifiedState:
    """Parse a layered CSV written by :func:`export_state_raster`."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(lines) < 3 or (len(lines) - 1) % 2 != 0:
        raise ConfigurationError("state raster must hold two equal grid layers")
    height = (len(lines) - 1) // 2
    interest = np.array([[float(v) for v in ln.split(",")] for ln in lines[:height]])
    unc = np.array(
        [[float(v) for v in ln.split(",")] for ln in lines[height : 2 * height]]
    )
    scalars = [float(v) for v in lines[-1].split(",")]
    cell_x, cell_y, budget, l_gp = scalars[:4]
    if l_gp == 0.0:
        hp = Hyperparams(
            l_gp_encoding=0.0,
            interesting_classes=tuple(int(c) for c in scalars[4:]),
        )
    else:
        hp = Hyperparams(l_gp_encoding=l_gp, f_th=scalars[4])
    return UnifiedState(interest, unc, Pose(int(cell_x), int(cell_y)), budget, hp)
