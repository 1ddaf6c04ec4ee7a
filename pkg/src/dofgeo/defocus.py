"""Depth-dependent defocus synthesis.

Gather semantics throughout: each OUTPUT pixel p sums weighted input
neighbors using the kernel selected by p's own CoC radius,

    I_out(p) = sum_o K(o) I(p - o),   o in [-r(p), r(p)]^2,

with clamp-to-edge borders and per-pixel kernel normalization. Radius-0
pixels (on focus, or invalid depth) copy the input unchanged. A separable
fast path exists for the gaussian family only.
"""

from __future__ import annotations

import numpy as np

from .kernels import KernelSpec, smoothstep_raw, polygonal_kernel
from .optics import LensSpec, coc_pixels
from .scene_io import DepthMap, ImageBuffer


def coc_map(lens: LensSpec, depth: DepthMap, d_f: float) -> np.ndarray:
    """Per-pixel CoC diameter in pixels; invalid-depth pixels get 0."""
    if d_f <= lens.focal_length:
        raise ValueError("focus distance must exceed the focal length")
    d = depth.data.astype(np.float64)
    valid = depth.valid_mask
    out = np.zeros(d.shape, dtype=np.float64)
    if np.any(valid):
        out[valid] = coc_pixels(lens, d[valid], d_f)
    return out


def plan_radii(coc: np.ndarray, r_max: int) -> np.ndarray:
    """Integer kernel radii: min(round(coc / 2), r_max), round-half-to-even."""
    if r_max < 0:
        raise ValueError("r_max must be >= 0")
    r = np.rint(np.asarray(coc, dtype=np.float64) / 2.0).astype(np.int64)
    return np.minimum(r, r_max)


def _pad_edge(img: np.ndarray, r: int) -> np.ndarray:
    return np.pad(img, ((r, r), (r, r), (0, 0)), mode="edge")


def _offset_weights(
    dx: int, dy: int, radii: np.ndarray, sigma: np.ndarray | None, spec: KernelSpec,
    poly_tables: dict[int, np.ndarray] | None,
) -> np.ndarray:
    """Per-pixel weight of kernel offset (dx, dy), zero outside the support."""
    in_support = (np.abs(dx) <= radii) & (np.abs(dy) <= radii)
    if dx != 0 or dy != 0:
        in_support &= radii > 0
    if spec.family == "gaussian":
        w = np.zeros(radii.shape, dtype=np.float64)
        m = in_support & (sigma > 0)
        if np.any(m):
            s = sigma[m]
            w[m] = np.exp(-(dx * dx + dy * dy) / (2.0 * s * s))
        if dx == 0 and dy == 0:
            w[in_support & (sigma <= 0)] = 1.0
        return w
    if spec.family == "smoothstep":
        # the tanh profile depends on the pixel's own radius
        w = np.zeros(radii.shape, dtype=np.float64)
        for r in np.unique(radii):
            if r >= 1:
                m = in_support & (radii == r)
                w[m] = smoothstep_raw(dx, dy, int(r))
        if dx == 0 and dy == 0:
            w[radii == 0] = 1.0
        return w
    # polygonal: unnormalized H(p) * W(|p|) looked up per radius
    w = np.zeros(radii.shape, dtype=np.float64)
    for r, table in poly_tables.items():
        if abs(dx) <= r and abs(dy) <= r:
            m = in_support & (radii == r)
            w[m] = table[dy + r, dx + r]
    if dx == 0 and dy == 0:
        w[radii == 0] = 1.0
    return w


def _poly_raw_tables(radii: np.ndarray, spec: KernelSpec) -> dict[int, np.ndarray]:
    """Unnormalized polygonal kernel grids for each radius present."""
    tables = {}
    for r in np.unique(radii):
        r = int(r)
        if r >= 1:
            k = polygonal_kernel(r, spec.blades)
            # recover the unnormalized grid shape; scale is irrelevant since
            # weights are re-normalized per pixel
            tables[r] = k.weights
    return tables


def synthesize_defocus(
    image: ImageBuffer,
    depth: DepthMap,
    lens: LensSpec,
    d_f: float,
    spec: KernelSpec,
) -> ImageBuffer:
    """Spatially varying gather convolution driven by the depth map."""
    if (image.height, image.width) != (depth.height, depth.width):
        raise ValueError("image and depth dimensions must match")
    coc = coc_map(lens, depth, d_f)
    radii = plan_radii(coc, spec.radius)
    sigma = coc / spec.k_s if spec.family == "gaussian" else None
    return ImageBuffer(_gather_convolve(image.data, radii, sigma, spec))


def _gather_convolve(
    img: np.ndarray, radii: np.ndarray, sigma: np.ndarray | None, spec: KernelSpec
) -> np.ndarray:
    h, w, _ = img.shape
    r_max = int(radii.max(initial=0))
    if r_max == 0:
        return img.copy()
    padded = _pad_edge(img.astype(np.float64), r_max)
    num = np.zeros_like(img, dtype=np.float64)
    den = np.zeros((h, w), dtype=np.float64)
    poly_tables = _poly_raw_tables(radii, spec) if spec.family == "polygonal" else None
    for dy in range(-r_max, r_max + 1):
        for dx in range(-r_max, r_max + 1):
            wgt = _offset_weights(dx, dy, radii, sigma, spec, poly_tables)
            if not np.any(wgt):
                continue
            # I(p - o) for kernel offset o = (dx, dy)
            shifted = padded[r_max - dy : r_max - dy + h, r_max - dx : r_max - dx + w]
            num += wgt[:, :, None] * shifted
            den += wgt
    out = num / den[:, :, None]
    # radius-0 pixels reduce to the identity; keep their input bit pattern
    zero = radii == 0
    out[zero] = img[zero]
    return np.clip(out, 0.0, 1.0)


def separable_defocus(
    image: ImageBuffer, radius_plan: np.ndarray, sigma_plan: np.ndarray
) -> ImageBuffer:
    """Two-pass 1D gaussian defocus; both passes use the output pixel's sigma.

    Exact only for spatially constant sigma; elsewhere an approximation of
    the full 2D gather.
    """
    radii = np.asarray(radius_plan, dtype=np.int64)
    sigma = np.asarray(sigma_plan, dtype=np.float64)
    if radii.shape != (image.height, image.width) or sigma.shape != radii.shape:
        raise ValueError("plan dimensions must match the image")
    tmp = _axis_pass(image.data.astype(np.float64), radii, sigma, axis=1)
    out = _axis_pass(tmp, radii, sigma, axis=0)
    zero = radii == 0
    out[zero] = image.data[zero]
    return ImageBuffer(np.clip(out, 0.0, 1.0))


def _axis_pass(img: np.ndarray, radii: np.ndarray, sigma: np.ndarray, axis: int) -> np.ndarray:
    h, w, _ = img.shape
    r_max = int(radii.max(initial=0))
    if r_max == 0:
        return img.copy()
    pad = [(0, 0), (0, 0), (0, 0)]
    pad[axis] = (r_max, r_max)
    padded = np.pad(img, pad, mode="edge")
    num = np.zeros_like(img)
    den = np.zeros((h, w), dtype=np.float64)
    for do in range(-r_max, r_max + 1):
        in_support = (np.abs(do) <= radii) & ((radii > 0) | (do == 0)) & (
            (sigma > 0) | (do == 0)
        )
        wgt = np.zeros((h, w), dtype=np.float64)
        m = in_support & (sigma > 0)
        wgt[m] = np.exp(-(do * do) / (2.0 * sigma[m] ** 2))
        wgt[in_support & (sigma <= 0)] = 1.0
        if not np.any(wgt):
            continue
        if axis == 1:
            shifted = padded[:, r_max - do : r_max - do + w, :]
        else:
            shifted = padded[r_max - do : r_max - do + h, :, :]
        num += wgt[:, :, None] * shifted
        den += wgt
    return num / den[:, :, None]
