"""Blur-kernel families: gaussian, smoothstep (tanh), and polygonal bokeh.

All kernels are sampled at integer offsets on a (2r+1)^2 grid and
normalized to unit sum post-hoc. The polygonal family combines a convex
aperture-polygon containment test with cosine radial attenuation.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

KERNEL_FAMILIES = ("gaussian", "smoothstep", "polygonal")
DEFAULT_MAX_RADIUS = 3  # 7x7 kernel cap
DEFAULT_BLADES = 8
DEFAULT_SCALE_COEFF = 20.0


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus construction parameters.

    ``radius`` is the maximum kernel radius (7x7 cap => 3). ``blades`` only
    applies to the polygonal family; ``k_s`` maps CoC pixels to gaussian
    sigma.
    """

    family: str = "gaussian"
    radius: int = DEFAULT_MAX_RADIUS
    blades: int = DEFAULT_BLADES
    k_s: float = DEFAULT_SCALE_COEFF

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not 0 <= self.radius <= DEFAULT_MAX_RADIUS:
            raise ValueError(f"radius must be in [0, {DEFAULT_MAX_RADIUS}]")
        if self.blades < 3:
            raise ValueError("polygon needs at least 3 blades")
        if self.k_s <= 0:
            raise ValueError("k_s must be positive")


@dataclass(frozen=True)
class Kernel:
    family: str
    radius: int
    weights: np.ndarray  # (2r+1, 2r+1), unit sum

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        side = 2 * self.radius + 1
        if w.shape != (side, side):
            raise ValueError("kernel grid side must be 2*radius + 1")
        if w.min() < 0:
            raise ValueError("kernel weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-6:
            raise ValueError("kernel weights must sum to 1 within 1e-6")
        w = np.ascontiguousarray(w)
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def side(self) -> int:
        return 2 * self.radius + 1


def sigma_from_coc(coc_px: float, k_s: float = DEFAULT_SCALE_COEFF) -> float:
    """Gaussian sigma from CoC diameter in pixels: sigma = coc / k_s."""
    if coc_px < 0 or k_s <= 0:
        raise ValueError("require coc_px >= 0 and k_s > 0")
    return coc_px / k_s


def _offset_grid(radius: int):
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    return np.meshgrid(ax, ax, indexing="xy")  # x varies along columns


def gaussian_kernel(sigma: float, radius: int) -> Kernel:
    if radius < 1:
        raise ValueError("gaussian kernel needs radius >= 1")
    if sigma <= 0:
        raise ValueError("sigma must be > 0 (radius-0 pixels use the identity path)")
    x, y = _offset_grid(radius)
    w = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    return Kernel("gaussian", radius, w / w.sum())


def smoothstep_raw(x, y, radius: int):
    """Unnormalized tanh profile 0.5 + 0.5 tanh(0.25 (r^2 - x^2 - y^2) + 0.5)."""
    r2 = float(radius) ** 2
    return 0.5 + 0.5 * np.tanh(0.25 * (r2 - np.asarray(x) ** 2 - np.asarray(y) ** 2) + 0.5)


def smoothstep_kernel(radius: int) -> Kernel:
    if radius < 1:
        raise ValueError("smoothstep kernel needs radius >= 1")
    x, y = _offset_grid(radius)
    w = smoothstep_raw(x, y, radius)
    return Kernel("smoothstep", radius, w / w.sum())


def radial_weight(rho, radius: float):
    """Cosine attenuation cos(pi/2 * rho/R) inside the disc, 0 outside."""
    if radius <= 0:
        raise ValueError("radius must be > 0")
    rho = np.asarray(rho, dtype=np.float64)
    w = np.where(rho <= radius, np.cos(0.5 * math.pi * rho / radius), 0.0)
    return w if w.ndim else float(w)


def polygon_vertices(radius: float, blades: int) -> np.ndarray:
    """Vertices v_i = R (cos(2 pi i / N), sin(2 pi i / N)), i = 1..N."""
    if blades < 3 or radius <= 0:
        raise ValueError("need blades >= 3 and radius > 0")
    i = np.arange(1, blades + 1, dtype=np.float64)
    ang = 2.0 * math.pi * i / blades
    return np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)


def cross_edge(p, v_a, v_b) -> float:
    """Signed cross product locating p relative to the edge v_a -> v_b."""
    return float(
        (v_b[0] - v_a[0]) * (p[1] - v_a[1]) - (v_b[1] - v_a[1]) * (p[0] - v_a[0])
    )


def _edge_signs(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Cross products of shape (n_points, n_edges) for closed polygon edges."""
    va = vertices
    vb = np.roll(vertices, -1, axis=0)
    ex = vb[:, 0] - va[:, 0]
    ey = vb[:, 1] - va[:, 1]
    px = points[:, 0][:, None] - va[:, 0][None, :]
    py = points[:, 1][:, None] - va[:, 1][None, :]
    return ex[None, :] * py - ey[None, :] * px


def point_in_polygon(p, vertices: np.ndarray) -> bool:
    """Convex-polygon containment via uniform cross-product sign.

    The interior sign is taken from the polygon centroid so the test works
    for either vertex orientation; boundary points (cross product 0) count
    as inside.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    centroid = vertices.mean(axis=0)
    ref = _edge_signs(centroid[None, :], vertices)[0]
    c = _edge_signs(np.asarray(p, dtype=np.float64)[None, :], vertices)[0]
    return bool(np.all(c * np.sign(ref) >= 0.0))


def polygonal_kernel(radius: int, blades: int = DEFAULT_BLADES) -> Kernel:
    """Bokeh kernel: aperture-polygon containment times cosine attenuation."""
    if radius < 1:
        raise ValueError("polygonal kernel needs radius >= 1")
    verts = polygon_vertices(float(radius), blades)
    centroid = verts.mean(axis=0)
    ref_sign = np.sign(_edge_signs(centroid[None, :], verts)[0])

    x, y = _offset_grid(radius)
    pts = np.stack([x.reshape(-1), y.reshape(-1)], axis=1)
    signs = _edge_signs(pts, verts)
    inside = np.all(signs * ref_sign[None, :] >= 0.0, axis=1).reshape(x.shape)
    rho = np.hypot(x, y)
    w = np.where(inside, radial_weight(rho, float(radius)), 0.0)
    total = w.sum()
    if total <= 0.0:
        raise ValueError(
            f"polygonal kernel support is empty for radius={radius}, blades={blades}"
        )
    return Kernel("polygonal", radius, w / total)


_cache: dict[tuple, Kernel] = {}
_cache_lock = threading.Lock()


def get_kernel(
    family: str,
    radius: int,
    sigma: float = 0.0,
    blades: int = DEFAULT_BLADES,
) -> Kernel:
    """Cached kernel lookup keyed by (family, radius, sigma bucket, blades).

    Entries are value-identical for identical keys, so concurrent insertion
    races are benign (last writer wins).
    """
    key = (family, radius, round(float(sigma), 12), blades)
    k = _cache.get(key)
    if k is not None:
        return k
    if family == "gaussian":
        k = gaussian_kernel(sigma, radius)
    elif family == "smoothstep":
        k = smoothstep_kernel(radius)
    elif family == "polygonal":
        k = polygonal_kernel(radius, blades)
    else:
        raise ValueError(f"unknown kernel family {family!r}")
    with _cache_lock:
        _cache[key] = k
    return k
