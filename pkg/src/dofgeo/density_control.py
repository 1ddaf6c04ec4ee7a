"""Depth-aware density control: keep masks, prune masks, IQR-weighted
gradient accumulation, and the GSTA1 stats file format.

The keep mask preserves the fixed fraction of points with the largest
defocus-gradient norms (keep FRACTION semantics; the quantile-threshold
reading, which keeps the top 1 - tau instead, is available via
``printed_form=True``).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

DEFAULT_KEEP_FRACTION = 0.2
DEFAULT_ALPHA_MIN = 0.005
DEFAULT_GRAD_MIN = 0.0002
IQR_EPS = 1e-8

_GSTA_MAGIC = b"GSTA1"


@dataclass(frozen=True)
class GaussianStats:
    opacity: np.ndarray  # in [0, 1]
    pos_grad: np.ndarray  # positional gradient norms >= 0
    dof_grad: np.ndarray  # defocus-loss gradient norms >= 0
    accum: np.ndarray  # accumulated weighted statistic >= 0

    def __post_init__(self):
        arrays = {}
        n = None
        for name in ("opacity", "pos_grad", "dof_grad", "accum"):
            a = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must be finite")
            if n is None:
                n = len(a)
            elif len(a) != n:
                raise ValueError("stats arrays must have equal length")
            arrays[name] = a
        if len(arrays["opacity"]) and (
            arrays["opacity"].min() < 0 or arrays["opacity"].max() > 1
        ):
            raise ValueError("opacity must lie in [0, 1]")
        for name in ("pos_grad", "dof_grad", "accum"):
            if len(arrays[name]) and arrays[name].min() < 0:
                raise ValueError(f"{name} must be non-negative")
        for name, a in arrays.items():
            a = np.ascontiguousarray(a)
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    def __len__(self) -> int:
        return len(self.opacity)


def keep_mask(
    dof_grad_norms: np.ndarray,
    tau_keep: float = DEFAULT_KEEP_FRACTION,
    printed_form: bool = False,
) -> np.ndarray:
    """Mark the ceil(tau N) points with the largest gradient norms.

    Ties are broken by keeping smaller indices first. ``printed_form``
    switches to thresholding at the tau-quantile instead.
    """
    g = np.asarray(dof_grad_norms, dtype=np.float64).reshape(-1)
    if len(g) == 0:
        return np.zeros(0, dtype=bool)
    if not 0.0 < tau_keep <= 1.0:
        raise ValueError("tau_keep must lie in (0, 1]")
    if printed_form:
        return g >= np.quantile(g, tau_keep)
    k = int(np.ceil(tau_keep * len(g)))
    order = np.argsort(-g, kind="stable")  # decreasing, ties by index
    mask = np.zeros(len(g), dtype=bool)
    mask[order[:k]] = True
    return mask


def prune_mask(
    stats: GaussianStats,
    keep: np.ndarray,
    alpha_min: float = DEFAULT_ALPHA_MIN,
    g_min: float = DEFAULT_GRAD_MIN,
) -> np.ndarray:
    """(alpha < alpha_min) OR (pos grad < g_min AND NOT kept)."""
    keep = np.asarray(keep, dtype=bool).reshape(-1)
    if len(keep) != len(stats):
        raise ValueError("keep mask length must match stats")
    return (stats.opacity < alpha_min) | ((stats.pos_grad < g_min) & ~keep)


def iqr_weights(dof_grad_norms: np.ndarray, eps: float = IQR_EPS) -> np.ndarray:
    """w = exp(-(g - Q25) / (Q75 - Q25 + eps)); quantiles interpolate linearly."""
    g = np.asarray(dof_grad_norms, dtype=np.float64).reshape(-1)
    if len(g) == 0:
        raise ValueError("empty gradient array")
    q25, q75 = np.quantile(g, [0.25, 0.75])
    return np.exp(-(g - q25) / (q75 - q25 + eps))


def accumulate(stats: GaussianStats, new_grads: np.ndarray, eps: float = IQR_EPS) -> GaussianStats:
    """Add IQR-weighted gradient norms onto the accumulated statistic."""
    g = np.asarray(new_grads, dtype=np.float64).reshape(-1)
    if len(g) != len(stats):
        raise ValueError("gradient array length must match stats")
    w = iqr_weights(g, eps)
    return GaussianStats(
        opacity=stats.opacity,
        pos_grad=stats.pos_grad,
        dof_grad=g,
        accum=stats.accum + w * g,
    )


def load_stats(path) -> GaussianStats:
    """Read the GSTA1 binary stats file."""
    raw = open(path, "rb").read()
    if raw[:5] != _GSTA_MAGIC:
        raise ValueError(f"{path}: missing GSTA1 magic")
    (count,) = struct.unpack_from("<I", raw, 5)
    expected = 9 + 16 * count
    if len(raw) != expected:
        raise ValueError(f"{path}: GSTA1 payload size mismatch")
    data = np.frombuffer(raw, dtype="<f4", count=4 * count, offset=9).reshape(count, 4)
    return GaussianStats(data[:, 0], data[:, 1], data[:, 2], data[:, 3])


def save_stats(stats: GaussianStats, path) -> None:
    data = np.empty((len(stats), 4), dtype="<f4")
    data[:, 0] = stats.opacity
    data[:, 1] = stats.pos_grad
    data[:, 2] = stats.dof_grad
    data[:, 3] = stats.accum
    with open(path, "wb") as f:
        f.write(_GSTA_MAGIC)
        f.write(struct.pack("<I", len(stats)))
        f.write(data.tobytes())
