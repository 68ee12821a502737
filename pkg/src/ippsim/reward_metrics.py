"""Uncertainty-reduction reward and the mission evaluation metrics.

The reward sums, over all grid cells, the relative uncertainty reduction of
a map update weighted by the pre-update probability that the cell is
interesting. Evaluation metrics are computed over the ground-truth mask of
interesting cells and reported on a 0-100 scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .belief_maps import (
    GaussianMapBelief,
    MapBelief,
    OccupancyMapBelief,
    UncertaintyUse,
    entropy_nats,
    uncertainty_grid,
)
from .errors import ConfigurationError, MetricError
from .grid_world import FieldKind, InterestSpec, TerrainField
from .unified import interest_grid


@dataclass(frozen=True)
class UncertaintyTrace:
    """Consumed budget vs normalized map uncertainty over interesting cells."""

    budgets: np.ndarray
    uncertainties: np.ndarray

    def __post_init__(self) -> None:
        b = np.asarray(self.budgets, dtype=np.float64)
        u = np.asarray(self.uncertainties, dtype=np.float64)
        if b.size == 0 or b.size != u.size:
            raise ConfigurationError("trace needs matching non-empty arrays")
        if np.any(np.diff(b) <= 0):
            raise ConfigurationError("trace budgets must be strictly increasing")
        if b[0] != 0.0 or u[0] != 1.0:
            raise ConfigurationError("trace must start at (0, 1)")
        object.__setattr__(self, "budgets", b)
        object.__setattr__(self, "uncertainties", u)


@dataclass(frozen=True)
class MetricsRecord:
    """Final metrics for one mission; continuous and discrete blocks are exclusive.

    Serialized column order: ii, unc_final, rmse, mll, miou, f1.
    """

    ii: float
    unc_final: float
    rmse: float | None = None
    mll: float | None = None
    miou: float | None = None
    f1: float | None = None

    CSV_COLUMNS = ("ii", "unc_final", "rmse", "mll", "miou", "f1")

    def csv_row(self) -> list[str]:
        vals = (self.ii, self.unc_final, self.rmse, self.mll, self.miou, self.f1)
        return ["" if v is None else repr(float(v)) for v in vals]


def normalized_reduction(h_before: np.ndarray, h_after: np.ndarray) -> np.ndarray:
    """(H_t - H_t+1) / H_t per cell; cells with H_t = 0 contribute 0."""
    out = np.zeros_like(h_before)
    np.divide(h_before - h_after, h_before, out=out, where=h_before > 0)
    return out


def reward_from_reduction(reduction: np.ndarray, interest: np.ndarray) -> float:
    return float(np.sum(reduction * interest))


def step_reward(before: MapBelief, after: MapBelief, spec: InterestSpec) -> float:
    """Interest-weighted relative uncertainty reduction over the full grid.

    Weights come from the *pre-update* belief, so the reward is linear in the
    interest probabilities. May be negative if uncertainty grows.
    """
    if type(before) is not type(after) or before.geometry != after.geometry:
        raise ConfigurationError("beliefs must share kind and geometry")
    h0 = uncertainty_grid(before, UncertaintyUse.REWARD)
    h1 = uncertainty_grid(after, UncertaintyUse.REWARD)
    interest = interest_grid(before, spec)
    return reward_from_reduction(normalized_reduction(h0, h1), interest)


def unc_metric(belief: MapBelief, prior: MapBelief, mask: np.ndarray, use_log_trace: bool = False) -> float:
    """Remaining map uncertainty over the mask as a percentage of the prior.

    Gaussian maps use the covariance trace restricted to mask cells
    (``use_log_trace`` switches to the ratio of log-traces); occupancy maps
    use summed Shannon entropy.
    """
    flat = np.asarray(mask).ravel().astype(bool)
    if not flat.any():
        raise MetricError("interest mask is empty")
    if isinstance(belief, GaussianMapBelief):
        now = float(belief.variance()[flat].sum())
        ref = float(prior.variance()[flat].sum())
        if use_log_trace and ref > 1.0:
            # log-of-trace reading; falls back to the plain ratio when the
            # prior trace is too small for a stable log normalization
            return 100.0 * float(np.log(now) / np.log(ref))
    else:
        now = float(entropy_nats(belief.probs[flat]).sum())
        ref = float(entropy_nats(prior.probs[flat]).sum())
    return 100.0 * now / ref


def ii_metric(trace: UncertaintyTrace, total_budget: float) -> float:
    """100 x (1 - area under the normalized uncertainty vs budget-fraction curve).

    The curve is extended flat from its last sample to budget fraction 1, so
    early uncertainty reduction scores higher.
    """
    if total_budget <= 0:
        raise ConfigurationError("total budget must be > 0")
    frac = trace.budgets / total_budget
    if frac[-1] > 1.0 + 1e-12:
        raise ConfigurationError("trace budgets exceed the total budget")
    u = trace.uncertainties
    auc = 0.0
    for i in range(frac.size - 1):
        auc += 0.5 * (frac[i + 1] - frac[i]) * (u[i] + u[i + 1])
    if frac[-1] < 1.0:
        auc += (1.0 - frac[-1]) * u[-1]
    return 100.0 * (1.0 - auc)


def rmse_metric(belief: GaussianMapBelief, field: TerrainField, mask: np.ndarray) -> float:
    """Root-mean-square error of the posterior mean over mask cells, x100."""
    _require_continuous(belief, field)
    flat = _nonempty_mask(mask)
    resid = belief.mean[flat] - field.flat_values()[flat]
    return 100.0 * float(np.sqrt(np.mean(resid**2)))


def mll_metric(belief: GaussianMapBelief, field: TerrainField, mask: np.ndarray) -> float:
    """Mean negative log predictive density of the truth under the map, x100.

    Per cell: 0.5 ln(2 pi sigma^2) + (F - mu)^2 / (2 sigma^2).
    """
    _require_continuous(belief, field)
    flat = _nonempty_mask(mask)
    var = belief.variance()[flat]
    if np.any(var <= 0):
        raise MetricError("zero posterior variance on mask")
    resid = field.flat_values()[flat] - belief.mean[flat]
    per_cell = 0.5 * np.log(2.0 * np.pi * var) + resid**2 / (2.0 * var)
    return 100.0 * float(np.mean(per_cell))


def classification_metrics(
    belief: OccupancyMapBelief, field: TerrainField, mask: np.ndarray
) -> tuple[float, float]:
    """(mIoU, macro F1) of the per-cell argmax prediction over mask cells, x100.

    Both average over the classes present in the ground truth inside the mask.
    """
    if field.kind is not FieldKind.DISCRETE or field.classes != belief.K:
        raise ConfigurationError("belief and field class counts must match")
    flat = _nonempty_mask(mask)
    pred = belief.probs.argmax(axis=1)[flat] + 1
    truth = field.flat_values()[flat]
    present = np.unique(truth)
    ious = []
    f1s = []
    for c in present:
        tp = float(np.sum((pred == c) & (truth == c)))
        fp = float(np.sum((pred == c) & (truth != c)))
        fn = float(np.sum((pred != c) & (truth == c)))
        union = tp + fp + fn
        ious.append(tp / union if union > 0 else 0.0)
        denom = 2.0 * tp + fp + fn
        f1s.append(2.0 * tp / denom if denom > 0 else 0.0)
    return 100.0 * float(np.mean(ious)), 100.0 * float(np.mean(f1s))


def _require_continuous(belief: MapBelief, field: TerrainField) -> None:
    if not isinstance(belief, GaussianMapBelief) or field.kind is not FieldKind.CONTINUOUS:
        raise ConfigurationError("metric needs a Gaussian belief and continuous field")


def _nonempty_mask(mask: np.ndarray) -> np.ndarray:
    flat = np.asarray(mask).ravel().astype(bool)
    if not flat.any():
        raise MetricError("interest mask is empty")
    return flat
