"""Depth compositing, match filtering, unprojection, and the multi-view
geometric consistency loss.

Extrinsics convention everywhere: world-to-camera, X_cam = R X_world + t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene_io import CameraView, DepthMap, MatchSet, SplatSampleBuffer

ACCUM_ALPHA_CUTOFF = 1e-4
DEFAULT_CONF_THRESHOLD = 0.5


def render_depth(samples: SplatSampleBuffer) -> DepthMap:
    """Front-to-back alpha compositing: D(x) = sum_k alpha_k T_k d_k.

    Pixels with no samples or accumulated alpha below 1e-4 are invalid.
    No normalization by accumulated alpha is applied.
    """
    a = samples.alphas.astype(np.float64)
    d = samples.depths.astype(np.float64)
    off = samples.offsets()
    out = np.zeros(samples.height * samples.width, dtype=np.float64)
    for idx in range(len(out)):
        lo, hi = off[idx], off[idx + 1]
        if lo == hi:
            continue
        alpha = a[lo:hi]
        trans = np.empty_like(alpha)
        trans[0] = 1.0
        if len(alpha) > 1:
            np.cumprod(1.0 - alpha[:-1], out=trans[1:])
        w = alpha * trans
        acc = w.sum()
        if acc < ACCUM_ALPHA_CUTOFF:
            continue
        out[idx] = float(w @ d[lo:hi])
    return DepthMap(out.reshape(samples.height, samples.width))


def filter_matches(matches: MatchSet, tau_conf: float = DEFAULT_CONF_THRESHOLD) -> MatchSet:
    """Retain entries with confidence >= tau (inclusive)."""
    keep = matches.confidence >= tau_conf
    return MatchSet(
        matches.view_i,
        matches.view_j,
        matches.p_i[keep],
        matches.p_j[keep],
        matches.confidence[keep],
    )


def project(X_world: np.ndarray, cam: CameraView) -> np.ndarray:
    """Pinhole projection to pixel coordinates (x, y)."""
    X = np.asarray(X_world, dtype=np.float64)
    Xc = cam.R @ X + cam.t
    if Xc[2] <= 0:
        raise ValueError("point is behind the camera")
    uvw = cam.K @ Xc
    return uvw[:2] / uvw[2]


def unproject(p, depth: float, cam: CameraView) -> np.ndarray:
    """Lift pixel p at metric depth to a world-frame 3D point."""
    if depth <= 0:
        raise ValueError("depth must be > 0")
    hom = np.array([p[0], p[1], 1.0], dtype=np.float64)
    X_cam = depth * np.linalg.solve(cam.K, hom)
    return cam.R.T @ (X_cam - cam.t)


def bilinear_depth(depth: DepthMap, x: float, y: float) -> float | None:
    """Bilinear depth sample at fractional pixel coordinates.

    Returns None when the coordinate is out of bounds or any neighbor with
    nonzero interpolation weight is invalid. Zero-weight neighbors (exact
    integer coordinates, image edge) are ignored.
    """
    h, w = depth.height, depth.width
    if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
        return None
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    fx = x - x0
    fy = y - y0
    total = 0.0
    for (yy, xx, wgt) in (
        (y0, x0, (1 - fx) * (1 - fy)),
        (y0, x0 + 1, fx * (1 - fy)),
        (y0 + 1, x0, (1 - fx) * fy),
        (y0 + 1, x0 + 1, fx * fy),
    ):
        if wgt == 0.0:
            continue
        v = depth.data[yy, xx]
        if v <= 0.0:
            return None
        total += wgt * float(v)
    return total


@dataclass(frozen=True)
class GeoLossResult:
    value: float
    used: int
    degenerate: bool  # True when no match survived depth sampling


def geometric_loss(
    matches: MatchSet,
    depth_i: DepthMap,
    depth_j: DepthMap,
    cam_i: CameraView,
    cam_j: CameraView,
) -> GeoLossResult:
    """Mean 1-norm between the two unprojections of each usable match."""
    total = 0.0
    used = 0
    for k in range(len(matches)):
        zi = bilinear_depth(depth_i, matches.p_i[k, 0], matches.p_i[k, 1])
        zj = bilinear_depth(depth_j, matches.p_j[k, 0], matches.p_j[k, 1])
        if zi is None or zj is None:
            continue
        Pi = unproject(matches.p_i[k], zi, cam_i)
        Pj = unproject(matches.p_j[k], zj, cam_j)
        total += float(np.abs(Pi - Pj).sum())
        used += 1
    if used == 0:
        return GeoLossResult(0.0, 0, True)
    return GeoLossResult(total / used, used, False)
