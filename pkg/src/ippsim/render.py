"""Scalar-grid rendering to binary PPM images.

Values in [0, 1] map through a fixed 8-stop viridis-like ramp with linear
interpolation; 0.0 hits the bottom stop and 1.0 the top stop exactly. An
optional pose path is drawn in a contrasting red.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigurationError

RAMP = np.array(
    [
        (68, 1, 84),
        (70, 50, 126),
        (54, 92, 141),
        (39, 127, 142),
        (31, 161, 135),
        (74, 194, 109),
        (159, 218, 58),
        (253, 231, 37),
    ],
    dtype=np.float64,
)

OVERLAY_COLOR = np.array([230, 40, 40], dtype=np.uint8)


def colorize(grid: np.ndarray) -> np.ndarray:
    """Map a (h, w) grid of values (clamped to [0, 1]) to (h, w, 3) uint8."""
    values = np.clip(np.asarray(grid, dtype=np.float64), 0.0, 1.0)
    x = values * (len(RAMP) - 1)
    lo = np.minimum(x.astype(np.int64), len(RAMP) - 2)
    frac = (x - lo)[..., None]
    rgb = RAMP[lo] * (1.0 - frac) + RAMP[lo + 1] * frac
    return np.rint(rgb).astype(np.uint8)


def render_heatmap(
    grid: np.ndarray,
    path: str | Path,
    overlay: list[tuple[int, int]] | None = None,
    scale: int = 1,
) -> Path:
    """Write the grid as a binary P6 PPM; one cell maps to ``scale``^2 pixels.

    ``overlay`` is a list of (cell_x, cell_y) positions painted on top.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ConfigurationError("heatmap grid must be 2-D")
    if scale < 1:
        raise ConfigurationError("scale must be >= 1")
    pixels = colorize(grid)
    if overlay:
        h, w = grid.shape
        for cell_x, cell_y in overlay:
            if 0 <= cell_x < w and 0 <= cell_y < h:
                pixels[cell_y, cell_x] = OVERLAY_COLOR
    if scale > 1:
        pixels = np.repeat(np.repeat(pixels, scale, axis=0), scale, axis=1)
    path = Path(path)
    header = f"P6\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode("ascii")
    path.write_bytes(header + pixels.tobytes())
    return path


def read_ppm(path: str | Path) -> np.ndarray:
    """Parse a binary P6 PPM back into an (h, w, 3) uint8 array (for tests)."""
    raw = Path(path).read_bytes()
    if raw[:2] != b"P6":
        raise ConfigurationError("not a binary PPM")
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        while raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(int(raw[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, _maxval = tokens
    data = raw[pos : pos + width * height * 3]
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)
