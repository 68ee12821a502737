"""Ground-truth terrain grids: synthesis, raster ingestion, interest masks.

Terrain is a rectangular grid of equidistant cells normalized to the unit
square: the longer grid dimension spans [0, 1], so correlation lengths and
kernel lengthscales are resolution independent. Continuous fields carry
values in [f_a, f_b] (default [0, 1]); discrete fields carry class ids 1..K.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigurationError, IngestionError


class FieldKind(Enum):
    CONTINUOUS = "continuous"
    DISCRETE = "discrete"


@dataclass(frozen=True)
class GridGeometry:
    """Equidistant cell grid over the unit square, row-major and north-up."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 2 or self.height < 2:
            raise ConfigurationError(
                f"grid must be at least 2x2, got {self.width}x{self.height}"
            )

    @property
    def cell_size(self) -> float:
        return 1.0 / max(self.width, self.height)

    @property
    def num_cells(self) -> int:
        return self.width * self.height

    def cell_centers(self) -> np.ndarray:
        """Return the (num_cells, 2) array of cell-center xy coordinates."""
        s = self.cell_size
        xs = (np.arange(self.width) + 0.5) * s
        ys = (np.arange(self.height) + 0.5) * s
        xx, yy = np.meshgrid(xs, ys)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def flat_index(self, x: int, y: int) -> int:
        return y * self.width + x

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height


@dataclass(frozen=True)
class TerrainField:
    """Ground-truth feature field over a grid.

    ``values`` has shape (height, width): floats within ``bounds`` for
    continuous fields, integer class ids in 1..classes for discrete ones.
    """

    geometry: GridGeometry
    kind: FieldKind
    values: np.ndarray
    bounds: tuple[float, float] = (0.0, 1.0)
    classes: int = 0

    def __post_init__(self) -> None:
        if self.values.shape != (self.geometry.height, self.geometry.width):
            raise ConfigurationError("field values do not match geometry")
        if self.kind is FieldKind.CONTINUOUS:
            lo, hi = self.bounds
            if lo > hi:
                raise ConfigurationError("invalid feature bounds")
            if np.any(self.values < lo) or np.any(self.values > hi):
                raise ConfigurationError("continuous values outside bounds")
        else:
            if self.classes < 2:
                raise ConfigurationError("discrete fields need at least 2 classes")
            v = self.values
            if v.dtype.kind not in "iu" or v.min() < 1 or v.max() > self.classes:
                raise ConfigurationError("class ids must lie in 1..K")

    def flat_values(self) -> np.ndarray:
        return self.values.ravel()


@dataclass(frozen=True)
class ContinuousInterest:
    """Interest = feature values at or above a threshold."""

    f_th: float
    bounds: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self) -> None:
        lo, hi = self.bounds
        if not lo <= self.f_th <= hi:
            raise ConfigurationError(
                f"threshold {self.f_th} outside feature bounds [{lo}, {hi}]"
            )

    @property
    def is_exploration(self) -> bool:
        """Whole feature range is interesting: every point qualifies."""
        return self.f_th <= self.bounds[0]


@dataclass(frozen=True)
class DiscreteInterest:
    """Interest = membership in a subset of class ids."""

    classes: tuple[int, ...]
    num_classes: int

    def __post_init__(self) -> None:
        if len(self.classes) == 0:
            raise ConfigurationError("interesting class set must be non-empty")
        if len(set(self.classes)) != len(self.classes):
            raise ConfigurationError("interesting class ids must be unique")
        if any(c < 1 or c > self.num_classes for c in self.classes):
            raise ConfigurationError("interesting class ids must lie in 1..K")
        object.__setattr__(self, "classes", tuple(sorted(self.classes)))

    @property
    def is_exploration(self) -> bool:
        return len(self.classes) == self.num_classes


InterestSpec = ContinuousInterest | DiscreteInterest


def generate_continuous_field(
    seed: int, geometry: GridGeometry, correlation_length: float
) -> TerrainField:
    """Generate a spatially correlated random field spanning exactly [0, 1].

    Seeded white noise is smoothed with an isotropic Gaussian kernel whose
    scale is ``correlation_length`` in unit-square coordinates, then affinely
    rescaled so min = 0 and max = 1. Pure function of (seed, parameters).
    """
    if not 0.0 < correlation_length <= 2.0:
        raise ConfigurationError(
            f"correlation_length must lie in (0, 2], got {correlation_length}"
        )
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((geometry.height, geometry.width))
    sigma_cells = correlation_length * max(geometry.width, geometry.height)
    smooth = gaussian_filter(noise, sigma=sigma_cells, mode="reflect")
    return TerrainField(geometry, FieldKind.CONTINUOUS, _rescale_unit(smooth))


def generate_discrete_field(
    seed: int, geometry: GridGeometry, K: int, correlation_length: float
) -> TerrainField:
    """Generate a K-class label field with spatially contiguous class blobs.

    A correlated continuous field is cut at its K-1 equally spaced quantiles,
    so the classes cover roughly equal area.
    """
    if K < 2:
        raise ConfigurationError(f"need at least 2 classes, got {K}")
    base = generate_continuous_field(seed, geometry, correlation_length)
    thresholds = np.quantile(base.values, np.arange(1, K) / K)
    labels = np.searchsorted(thresholds, base.values, side="right") + 1
    return TerrainField(
        geometry, FieldKind.DISCRETE, labels.astype(np.int64), classes=K
    )


def load_raster(path: str | Path, kind: FieldKind) -> TerrainField:
    """Load a terrain field from a CSV grid or a binary P5 PGM image.

    Continuous rasters are rescaled to span [0, 1] (constant rasters map to
    0.5). Discrete rasters enumerate their distinct values in ascending order
    as class ids 1..K.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IngestionError(f"cannot read raster {path}: {exc}") from exc
    if raw[:2] == b"P5":
        grid = _parse_pgm(raw, path)
    else:
        grid = _parse_csv_grid(raw, path)
    geometry = GridGeometry(width=grid.shape[1], height=grid.shape[0])
    if kind is FieldKind.CONTINUOUS:
        return TerrainField(geometry, kind, _rescale_unit(grid))
    distinct = np.unique(grid)
    if distinct.size > 64:
        raise IngestionError(
            f"{path}: {distinct.size} distinct values is too many for a discrete raster"
        )
    if distinct.size < 2:
        raise IngestionError(f"{path}: discrete raster needs at least 2 distinct values")
    labels = np.searchsorted(distinct, grid) + 1
    return TerrainField(
        geometry, FieldKind.DISCRETE, labels.astype(np.int64), classes=distinct.size
    )


def interest_mask(field: TerrainField, spec: InterestSpec) -> np.ndarray:
    """Boolean (height, width) grid marking cells whose value is interesting."""
    if field.kind is FieldKind.CONTINUOUS:
        if not isinstance(spec, ContinuousInterest):
            raise ConfigurationError("continuous field needs a threshold interest spec")
        return field.values >= spec.f_th
    if not isinstance(spec, DiscreteInterest):
        raise ConfigurationError("discrete field needs a class-subset interest spec")
    if spec.num_classes != field.classes:
        raise ConfigurationError("interest spec class count does not match field")
    return np.isin(field.values, spec.classes)


def _rescale_unit(values: np.ndarray) -> np.ndarray:
    lo = float(values.min())
    hi = float(values.max())
    if hi == lo:
        return np.full_like(values, 0.5, dtype=np.float64)
    return (values.astype(np.float64) - lo) / (hi - lo)


def _parse_csv_grid(raw: bytes, path: Path) -> np.ndarray:
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise IngestionError(f"{path}: not a text CSV grid") from exc
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError as exc:
            raise IngestionError(f"{path}:{lineno}: non-numeric CSV entry") from exc
    if not rows:
        raise IngestionError(f"{path}: empty CSV grid")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise IngestionError(f"{path}: ragged CSV rows")
    return np.asarray(rows, dtype=np.float64)


def _parse_pgm(raw: bytes, path: Path) -> np.ndarray:
    # P5 header: magic, width, height, maxval as whitespace-separated tokens,
    # '#' comments allowed, then a single whitespace byte before pixel data.
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise IngestionError(f"{path}: truncated PGM header")
        try:
            tokens.append(int(raw[start:pos]))
        except ValueError as exc:
            raise IngestionError(f"{path}: malformed PGM header") from exc
    pos += 1  # single whitespace after maxval
    width, height, maxval = tokens
    if width < 1 or height < 1 or not 0 < maxval < 256:
        raise IngestionError(f"{path}: unsupported PGM dimensions or maxval")
    data = raw[pos : pos + width * height]
    if len(data) != width * height:
        raise IngestionError(f"{path}: truncated PGM pixel data")
    return np.frombuffer(data, dtype=np.uint8).astype(np.float64).reshape(height, width)
