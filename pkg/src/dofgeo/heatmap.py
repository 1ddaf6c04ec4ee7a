"""Turbo-style color ramp for error-map visualization."""

from __future__ import annotations

import numpy as np

# 5th-degree polynomial fit of the turbo colormap channels over [0, 1].
_R = (0.13572138, 4.61539260, -42.66032258, 132.13108234, -152.94239396, 59.28637943)
_G = (0.09140261, 2.19418839, 4.84296658, -14.18503333, 4.27729857, 2.82956604)
_B = (0.10667330, 12.64194608, -60.58204836, 110.36276771, -89.90310912, 27.34824973)


def _poly(x: np.ndarray, coeffs) -> np.ndarray:
    out = np.zeros_like(x)
    for c in reversed(coeffs):
        out = out * x + c
    return out


def turbo_colormap(values: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to (H, W, 3) float RGB in [0, 1]."""
    x = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    rgb = np.stack([_poly(x, _R), _poly(x, _G), _poly(x, _B)], axis=-1)
    return np.clip(rgb, 0.0, 1.0)
