"""Photometric and composite losses: L1, SSIM, rgb/dof terms, total loss.

SSIM follows the standard formulation: 11x11 Gaussian-weighted windows
(sigma 1.5), C1 = 0.01^2, C2 = 0.03^2, covariance in the cross term,
averaged over all valid window positions and channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .defocus import synthesize_defocus
from .kernels import KernelSpec
from .optics import LensSpec
from .scene_io import DepthMap, ImageBuffer

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass(frozen=True)
class LossWeights:
    lambda_dssim: float = 0.2
    lambda_dssim_dof: float = 0.2
    lambda_geo: float = 0.05
    lambda_depth: float = 0.005
    alpha_depth_corr: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lambda_dssim <= 1.0 or not 0.0 <= self.lambda_dssim_dof <= 1.0:
            raise ValueError("dssim weights must lie in [0, 1]")
        if min(self.lambda_geo, self.lambda_depth, self.alpha_depth_corr) < 0.0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class LossReport:
    l1_rgb: float | None = None
    ssim_rgb: float | None = None
    L_rgb: float | None = None
    l1_dof: float | None = None
    ssim_dof: float | None = None
    L_dof: float | None = None
    L_geo: float | None = None
    L_depth: float | None = None
    L_total: float | None = None
    partial: bool = False

    def as_dict(self) -> dict:
        return {
            "l1_rgb": self.l1_rgb,
            "ssim_rgb": self.ssim_rgb,
            "L_rgb": self.L_rgb,
            "l1_dof": self.l1_dof,
            "ssim_dof": self.ssim_dof,
            "L_dof": self.L_dof,
            "L_geo": self.L_geo,
            "L_depth": self.L_depth,
            "L_total": self.L_total,
            "partial": self.partial,
        }


def _as_array(img: ImageBuffer | np.ndarray) -> np.ndarray:
    data = img.data if isinstance(img, ImageBuffer) else img
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected an HxWxC image, got shape {arr.shape}")
    return arr


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")


def l1_loss(a: ImageBuffer | np.ndarray, b: ImageBuffer | np.ndarray) -> float:
    """Mean over pixels of the channel-summed absolute difference."""
    a, b = _as_array(a), _as_array(b)
    _check_pair(a, b)
    per_pixel = np.abs(a - b).sum(axis=2)
    return float(per_pixel.mean())


def _ssim_window() -> np.ndarray:
    ax = np.arange(SSIM_WINDOW, dtype=np.float64) - (SSIM_WINDOW - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * SSIM_SIGMA**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a: ImageBuffer | np.ndarray, b: ImageBuffer | np.ndarray) -> float:
    """Mean SSIM over valid window positions, averaged over channels."""
    a, b = _as_array(a), _as_array(b)
    _check_pair(a, b)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM")
    win = _ssim_window()
    vals = []
    for c in range(a.shape[2]):
        x = a[:, :, c]
        y = b[:, :, c]
        mu_x = convolve2d(x, win, mode="valid")
        mu_y = convolve2d(y, win, mode="valid")
        var_x = convolve2d(x * x, win, mode="valid") - mu_x**2
        var_y = convolve2d(y * y, win, mode="valid") - mu_y**2
        cov = convolve2d(x * y, win, mode="valid") - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
        den = (mu_x**2 + mu_y**2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


def rgb_loss(rend: ImageBuffer, gt: ImageBuffer, lambda_dssim: float = 0.2) -> float:
    """(1 - lambda) L1 + lambda (1 - SSIM)."""
    return (1.0 - lambda_dssim) * l1_loss(rend, gt) + lambda_dssim * (
        1.0 - ssim(rend, gt)
    )


def dof_loss(
    rend: ImageBuffer,
    gt: ImageBuffer,
    depth: DepthMap,
    lens: LensSpec,
    d_f: float,
    spec: KernelSpec,
    lambda_dssim_dof: float = 0.2,
) -> float:
    """Defocus both images with the same physical blur, then compare.

    ``depth`` should be the aligned monocular prior so the blur operator is
    identical on both operands.
    """
    rend_b = synthesize_defocus(rend, depth, lens, d_f, spec)
    gt_b = synthesize_defocus(gt, depth, lens, d_f, spec)
    return rgb_loss(rend_b, gt_b, lambda_dssim_dof)


def total_loss(
    L_rgb: float,
    L_dof: float,
    L_geo: float,
    L_depth: float,
    weights: LossWeights,
    *,
    l1_rgb: float | None = None,
    ssim_rgb: float | None = None,
    l1_dof: float | None = None,
    ssim_dof: float | None = None,
) -> LossReport:
    """Combine components: L_rgb + L_dof + lambda_geo L_geo + lambda_depth L_depth."""
    parts = [L_rgb, L_dof, L_geo, L_depth]
    if not all(np.isfinite(p) for p in parts):
        raise ValueError("all loss components must be finite")
    total = (
        L_rgb
        + L_dof
        + weights.lambda_geo * L_geo
        + weights.lambda_depth * L_depth
    )
    return LossReport(
        l1_rgb=l1_rgb,
        ssim_rgb=ssim_rgb,
        L_rgb=L_rgb,
        l1_dof=l1_dof,
        ssim_dof=ssim_dof,
        L_dof=L_dof,
        L_geo=L_geo,
        L_depth=L_depth,
        L_total=float(total),
    )
