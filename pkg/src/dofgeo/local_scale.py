"""Grid-based local depth alignment and the depth consistency loss.

The image is tiled into cells whose sides stay within [g_min, g_max]
pixels (the last row/column absorbs the remainder). Each cell gets a
Tikhonov-regularized linear fit D_r = s D_m + t over pixels where both
depths are valid; per-cell mean absolute errors are broadcast into a
min-max normalized error map which drives the consistency loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene_io import DepthMap

G_MIN = 15
G_MAX = 60
MIN_CELL_POINTS = 5
DEFAULT_REG = 1e-6
NORM_EPS = 1e-8


@dataclass(frozen=True)
class GridSpec:
    height: int
    width: int
    row_edges: tuple[int, ...]  # len rows+1, row_edges[0] = 0, last = height
    col_edges: tuple[int, ...]

    @property
    def rows(self) -> int:
        return len(self.row_edges) - 1

    @property
    def cols(self) -> int:
        return len(self.col_edges) - 1

    def cell_bounds(self, r: int, c: int) -> tuple[int, int, int, int]:
        """(y0, y1, x0, x1) half-open pixel rectangle of cell (r, c)."""
        return (
            self.row_edges[r],
            self.row_edges[r + 1],
            self.col_edges[c],
            self.col_edges[c + 1],
        )


@dataclass(frozen=True)
class CellFit:
    s: float
    t: float
    E: float
    n: int
    usable: bool


def build_grid(height: int, width: int, g_min: int = G_MIN, g_max: int = G_MAX) -> GridSpec:
    """Adaptive grid: target side clamp(round(sqrt(H W) / 16), g_min, g_max).

    Images smaller than g_min in either dimension fall back to one cell.
    """
    if height < 1 or width < 1:
        raise ValueError("image dimensions must be positive")
    if height < g_min or width < g_min:
        return GridSpec(height, width, (0, height), (0, width))
    target = int(np.clip(round(np.sqrt(height * width) / 16.0), g_min, g_max))
    rows = max(1, height // target)
    cols = max(1, width // target)
    # integer division tiles the grid; the last row/col absorbs the remainder
    rh = height // rows
    cw = width // cols
    row_edges = tuple(r * rh for r in range(rows)) + (height,)
    col_edges = tuple(c * cw for c in range(cols)) + (width,)
    return GridSpec(height, width, row_edges, col_edges)


def fit_cell(d_m: np.ndarray, d_r: np.ndarray, lambda_reg: float = DEFAULT_REG) -> CellFit:
    """Closed-form ridge fit of D_r = s D_m + t over paired valid samples."""
    d_m = np.asarray(d_m, dtype=np.float64).reshape(-1)
    d_r = np.asarray(d_r, dtype=np.float64).reshape(-1)
    if d_m.shape != d_r.shape:
        raise ValueError("paired depth arrays must have equal length")
    n = len(d_m)
    if n == 0:
        return CellFit(1.0, 0.0, 0.0, 0, False)
    X = np.stack([d_m, np.ones(n)], axis=1)
    A = X.T @ X + lambda_reg * np.eye(2)
    theta = np.linalg.solve(A, X.T @ d_r)
    resid = d_r - X @ theta
    return CellFit(
        s=float(theta[0]),
        t=float(theta[1]),
        E=float(np.abs(resid).mean()),
        n=n,
        usable=n >= MIN_CELL_POINTS,
    )


def fit_grid(
    depth_r: DepthMap, depth_m: DepthMap, grid: GridSpec, lambda_reg: float = DEFAULT_REG
) -> list[list[CellFit]]:
    """Independent per-cell fits over pixels where both depths are valid."""
    if (depth_r.height, depth_r.width) != (grid.height, grid.width):
        raise ValueError("grid does not match depth dimensions")
    if depth_r.data.shape != depth_m.data.shape:
        raise ValueError("depth dimensions must match")
    both = depth_r.valid_mask & depth_m.valid_mask
    fits = []
    for r in range(grid.rows):
        row = []
        for c in range(grid.cols):
            y0, y1, x0, x1 = grid.cell_bounds(r, c)
            m = both[y0:y1, x0:x1]
            row.append(
                fit_cell(
                    depth_m.data[y0:y1, x0:x1][m],
                    depth_r.data[y0:y1, x0:x1][m],
                    lambda_reg,
                )
            )
        fits.append(row)
    return fits


@dataclass(frozen=True)
class ErrorMap:
    values: np.ndarray  # (H, W) in [0, 1]
    computed: np.ndarray  # bool mask: usable cell AND both depths valid

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        c = np.ascontiguousarray(np.asarray(self.computed, dtype=bool))
        v.flags.writeable = False
        c.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "computed", c)


def error_map(
    depth_r: DepthMap,
    depth_m: DepthMap,
    grid: GridSpec,
    fits: list[list[CellFit]],
) -> ErrorMap:
    """Broadcast per-cell errors, then min-max normalize over computed pixels.

    Unusable cells and invalid pixels carry 1. When all computed errors are
    equal the normalized value is 0 (zero spread means zero relative error).
    """
    both = depth_r.valid_mask & depth_m.valid_mask
    raw = np.ones((grid.height, grid.width), dtype=np.float64)
    computed = np.zeros_like(raw, dtype=bool)
    for r in range(grid.rows):
        for c in range(grid.cols):
            fit = fits[r][c]
            if not fit.usable:
                continue
            y0, y1, x0, x1 = grid.cell_bounds(r, c)
            cell_valid = both[y0:y1, x0:x1]
            block = raw[y0:y1, x0:x1]
            block[cell_valid] = fit.E
            computed[y0:y1, x0:x1] = cell_valid
    out = np.ones_like(raw)
    if np.any(computed):
        vals = raw[computed]
        e_min, e_max = float(vals.min()), float(vals.max())
        if e_max > e_min:
            out[computed] = (vals - e_min) / (e_max - e_min)
        else:
            out[computed] = 0.0
    return ErrorMap(out, computed)


def _minmax_norm(values: np.ndarray) -> np.ndarray:
    lo = float(values.min())
    hi = float(values.max())
    return (values - lo) / (hi - lo + NORM_EPS)


def depth_consistency_loss(
    depth_r: DepthMap,
    depth_m: DepthMap,
    emap: ErrorMap,
    alpha: float = 1.0,
) -> float:
    """L_abs over computed pixels plus alpha times the correlation term.

    L_abs is the mean normalized error over the computed region; L_corr is
    |1 - mean(Dhat_r Dhat_m)| over its complement, with per-map min-max
    normalization. Empty regions contribute 0.
    """
    if depth_r.data.shape != depth_m.data.shape:
        raise ValueError("depth dimensions must match")
    valid_region = emap.computed
    invalid_region = ~valid_region
    l_abs = float(emap.values[valid_region].mean()) if np.any(valid_region) else 0.0
    if np.any(invalid_region):
        dr_hat = _minmax_norm(depth_r.data.astype(np.float64))
        dm_hat = _minmax_norm(depth_m.data.astype(np.float64))
        l_corr = abs(1.0 - float((dr_hat[invalid_region] * dm_hat[invalid_region]).mean()))
    else:
        l_corr = 0.0
    return l_abs + alpha * l_corr
