"""Seeded synthetic fixtures for tests and the `fixtures generate` command.

The scale-recovery scene is built so every quantity is exact: cameras sit
on an x-axis baseline with identity rotations, world points are placed so
matched pixels land on integer coordinates in both views (depth sampling
is then exact), and each view's monocular depth is the true depth passed
through the inverse of a planted affine distortion. The generating (s, b)
is therefore the exact optimum of the joint objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density_control import GaussianStats
from .global_scale import ScaleShift
from .scene_io import (
    CameraView,
    DepthMap,
    ImageBuffer,
    MatchSet,
    SplatSampleBuffer,
)


@dataclass
class ScaleScene:
    cameras: list[CameraView]
    true_depths: list[DepthMap]
    raw_depths: list[DepthMap]  # monocular depths with the planted distortion
    matches: list[MatchSet]
    true_params: list[ScaleShift]


def make_scale_scene(
    n_views: int = 4,
    n_matches: int = 500,
    seed: int = 0,
    width: int = 64,
    height: int = 512,
) -> ScaleScene:
    """Noiseless multi-view scene with planted per-view (s, b) distortions."""
    if n_matches > height:
        raise ValueError("one match per image row: n_matches must be <= height")
    rng = np.random.default_rng(seed)
    fx = fy = 100.0
    baseline = 0.5
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    K = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])

    cameras = [
        CameraView(
            view_id=v,
            K=K,
            R=np.eye(3),
            t=np.array([-v * baseline, 0.0, 0.0]),  # camera center at (v*B, 0, 0)
            width=width,
            height=height,
        )
        for v in range(n_views)
    ]
    # integer per-baseline disparities k give depth Z = fx * B / k
    disparities = np.array([1, 2, 3, 4, 5])
    depth_bg = 30.0
    true = [np.full((height, width), depth_bg) for _ in range(n_views)]

    # ordered view pairs; both directions so every view appears as the source
    pairs = []
    for a in range(n_views - 1):
        pairs += [(a, a + 1), (a + 1, a)]
    for a in range(n_views - 2):
        pairs += [(a, a + 2), (a + 2, a)]

    rows = rng.permutation(height)[:n_matches]
    k_choices = rng.choice(disparities, size=n_matches)
    match_rows: dict[tuple[int, int], list] = {p: [] for p in pairs}
    max_v = n_views - 1
    for m in range(n_matches):
        i, j = pairs[m % len(pairs)]
        k = int(k_choices[m])
        z = fx * baseline / k
        # pixel in view v is x0 - k*v; keep it inside [0, width-1] for views i, j
        x0 = int(rng.integers(k * max_v, width - 1 + 1))
        y = int(rows[m])
        xi, xj = x0 - k * i, x0 - k * j
        true[i][y, xi] = z
        true[j][y, xj] = z
        match_rows[(i, j)].append((xi, y, xj, y))

    params = [
        ScaleShift(float(rng.uniform(0.5, 3.0)), float(rng.uniform(-0.5, 0.5)))
        for _ in range(n_views)
    ]
    raw = [(true[v] - params[v].b) / params[v].s for v in range(n_views)]

    matches = []
    for (i, j), rows_ij in match_rows.items():
        if not rows_ij:
            continue
        arr = np.asarray(rows_ij, dtype=np.float64)
        matches.append(
            MatchSet(i, j, arr[:, 0:2], arr[:, 2:4], np.ones(len(arr)))
        )
    return ScaleScene(
        cameras=cameras,
        true_depths=[DepthMap(t) for t in true],
        raw_depths=[DepthMap(r) for r in raw],
        matches=matches,
        true_params=params,
    )


def make_splat_buffer(width: int = 8, height: int = 6, seed: int = 0) -> SplatSampleBuffer:
    """Random front-to-back sample buffer with 0..4 samples per pixel."""
    rng = np.random.default_rng(seed)
    counts = rng.integers(0, 5, size=(height, width))
    total = int(counts.sum())
    alphas = rng.uniform(0.05, 1.0, size=total).astype(np.float32)
    depths = rng.uniform(0.5, 50.0, size=total).astype(np.float32)
    return SplatSampleBuffer(width, height, counts.astype(np.int64), alphas, depths)


def make_stats(n: int = 64, seed: int = 0) -> GaussianStats:
    rng = np.random.default_rng(seed)
    return GaussianStats(
        opacity=rng.uniform(0.0, 1.0, n),
        pos_grad=rng.uniform(0.0, 0.001, n),
        dof_grad=rng.uniform(0.0, 1.0, n),
        accum=np.zeros(n),
    )


def make_defocus_inputs(
    width: int = 48, height: int = 32, seed: int = 0
) -> tuple[ImageBuffer, DepthMap]:
    """Random RGB image with a two-plane depth map (near strip, far rest)."""
    rng = np.random.default_rng(seed)
    img = ImageBuffer(rng.uniform(0.0, 1.0, (height, width, 3)).astype(np.float32))
    depth = np.full((height, width), 8.0)
    depth[:, : width // 3] = 2.0
    return img, DepthMap(depth)
