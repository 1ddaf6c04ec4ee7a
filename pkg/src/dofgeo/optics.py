"""Thin-lens circle-of-confusion math and focus-distance selection.

The CoC diameter of a scene point at distance d, with the lens focused at
d_f, is  f^2 |d - d_f| / (F d (d_f - f))  and is converted to pixels by the
sensor-to-image width ratio. Focus selection picks among four depth
statistics (terciles, median, mean) of the valid depth distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene_io import DepthMap

FOCUS_STRATEGIES = ("median", "one_third", "two_thirds", "mean", "argmin")


@dataclass(frozen=True)
class LensSpec:
    """Thin-lens optical parameters. Defaults: 50mm f/5.6 on a 36mm sensor."""

    focal_length: float = 0.050  # meters
    f_number: float = 5.6
    sensor_width: float = 0.036  # meters
    image_width: int = 1920  # pixels

    def __post_init__(self):
        if self.focal_length <= 0 or self.f_number <= 0 or self.sensor_width <= 0:
            raise ValueError("lens parameters must be positive")
        if self.image_width < 1:
            raise ValueError("image_width must be >= 1")


@dataclass(frozen=True)
class FocusStats:
    d_one_third: float
    d_median: float
    d_two_thirds: float
    d_mean: float

    def __post_init__(self):
        if not self.d_one_third <= self.d_median <= self.d_two_thirds:
            raise ValueError("tercile statistics must be ordered")


def coc_diameter(lens: LensSpec, d, d_f: float):
    """CoC diameter in meters for object distance(s) d and focus distance d_f.

    Accepts scalar or array d; zero exactly on the focus plane.
    """
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("object distance d must be > 0")
    if d_f <= lens.focal_length:
        raise ValueError("focus distance must exceed the focal length")
    f = lens.focal_length
    out = (f * f * np.abs(d - d_f)) / (lens.f_number * d * (d_f - f))
    return out if out.ndim else float(out)


def coc_pixels(lens: LensSpec, d, d_f: float):
    """CoC diameter converted to pixels via image_width / sensor_width."""
    out = coc_diameter(lens, d, d_f) * (lens.image_width / lens.sensor_width)
    return out


def focus_stats(depth: DepthMap) -> FocusStats:
    """Terciles, median and mean of the valid depth distribution.

    Quantiles use linear interpolation between order statistics.
    """
    vals = depth.valid_values()
    if vals.size == 0:
        raise ValueError("depth map has no valid pixels")
    v = vals.astype(np.float64)
    q = np.quantile(v, [1.0 / 3.0, 0.5, 2.0 / 3.0])
    return FocusStats(float(q[0]), float(q[1]), float(q[2]), float(v.mean()))


def optimize_focus(depth: DepthMap, strategy: str = "median") -> float:
    """Select the focus distance from depth statistics.

    Named strategies return the corresponding statistic. ``argmin``
    evaluates sum (d(p) - d_f)^2 with uniform weights over the four
    candidates and returns the minimizer (ties -> smaller candidate).
    """
    if strategy not in FOCUS_STRATEGIES:
        raise ValueError(f"unknown focus strategy {strategy!r}")
    stats = focus_stats(depth)
    if strategy == "median":
        return stats.d_median
    if strategy == "one_third":
        return stats.d_one_third
    if strategy == "two_thirds":
        return stats.d_two_thirds
    if strategy == "mean":
        return stats.d_mean
    v = depth.valid_values().astype(np.float64)
    candidates = sorted(
        {stats.d_one_third, stats.d_median, stats.d_two_thirds, stats.d_mean}
    )
    costs = [float(np.sum((v - c) ** 2)) for c in candidates]
    return candidates[int(np.argmin(costs))]
