"""Joint per-view scale/shift recovery for monocular depth maps.

Each view's raw monocular depth is corrected by an affine map
D~ = s D + b. The parameters of all views are recovered jointly by
minimizing a reprojection term plus a depth-ratio consistency term over
precomputed cross-view matches, using damped (Levenberg-style) least
squares on (log s, b) with numerical Jacobians.

The ratio term compares the scaled depth ratio D~_j / D~_i against the
theoretical ratio gamma. The published formulation divides raw depths
instead; that variant is available via ``ratio_uses_scaled_depth=False``
but cannot vanish at the generating parameters when views carry different
affine distortions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geo_consistency import bilinear_depth
from .scene_io import CameraView, DepthMap, MatchSet

MAX_ITERATIONS = 200
REL_TOL = 1e-9
RANK_DEFICIENCY_RATIO = 1e-10


@dataclass(frozen=True)
class ScaleShift:
    s: float
    b: float

    def __post_init__(self):
        if self.s <= 0:
            raise ValueError("scale must be positive")


@dataclass
class RecoveryProblem:
    views: list[tuple[CameraView, DepthMap]]
    matches: list[MatchSet]
    lambda_ratio: float = 0.5
    ratio_uses_scaled_depth: bool = True

    def __post_init__(self):
        if self.lambda_ratio < 0:
            raise ValueError("lambda_ratio must be >= 0")
        ids = {cam.view_id for cam, _ in self.views}
        for ms in self.matches:
            if ms.view_i not in ids or ms.view_j not in ids:
                raise ValueError(
                    f"match set ({ms.view_i}, {ms.view_j}) references unknown views"
                )


def relative_pose(cam_i: CameraView, cam_j: CameraView):
    """(R_ji, t_ji) mapping camera-i coordinates into camera j."""
    R_ji = cam_j.R @ cam_i.R.T
    t_ji = cam_j.t - R_ji @ cam_i.t
    return R_ji, t_ji


def theoretical_ratio(cam_i: CameraView, cam_j: CameraView, p_i, Z_i: float) -> float:
    """gamma = e_z^T (R_ji x_i + t_ji / Z_i) with x_i = K_i^{-1} [p_i; 1]."""
    if Z_i <= 0:
        raise ValueError("Z_i must be > 0")
    R_ji, t_ji = relative_pose(cam_i, cam_j)
    x_i = np.linalg.solve(cam_i.K, np.array([p_i[0], p_i[1], 1.0]))
    return float((R_ji @ x_i)[2] + t_ji[2] / Z_i)


@dataclass
class _PairData:
    """Precomputed per-match-set arrays (match usability is parameter-free)."""

    idx_i: int
    idx_j: int
    rays_i: np.ndarray  # (M, 3) K_i^{-1} [p_i; 1]
    d_i: np.ndarray  # raw depth at p_i
    d_j: np.ndarray  # raw depth at p_j
    p_j: np.ndarray  # (M, 2)
    cam_i: CameraView
    cam_j: CameraView
    R_ji: np.ndarray
    t_ji: np.ndarray


def _prepare(problem: RecoveryProblem) -> list[_PairData]:
    order = {cam.view_id: n for n, (cam, _) in enumerate(problem.views)}
    pairs = []
    for ms in problem.matches:
        ii, jj = order[ms.view_i], order[ms.view_j]
        cam_i, depth_i = problem.views[ii]
        cam_j, depth_j = problem.views[jj]
        rows = []
        for k in range(len(ms)):
            di = bilinear_depth(depth_i, ms.p_i[k, 0], ms.p_i[k, 1])
            dj = bilinear_depth(depth_j, ms.p_j[k, 0], ms.p_j[k, 1])
            if di is None or dj is None:
                continue
            rows.append((k, di, dj))
        if not rows:
            continue
        ks = np.array([r[0] for r in rows])
        rays = np.linalg.solve(
            cam_i.K, np.concatenate([ms.p_i[ks].T, np.ones((1, len(ks)))], axis=0)
        ).T
        R_ji, t_ji = relative_pose(cam_i, cam_j)
        pairs.append(
            _PairData(
                idx_i=ii,
                idx_j=jj,
                rays_i=rays,
                d_i=np.array([r[1] for r in rows]),
                d_j=np.array([r[2] for r in rows]),
                p_j=ms.p_j[ks],
                cam_i=cam_i,
                cam_j=cam_j,
                R_ji=R_ji,
                t_ji=t_ji,
            )
        )
    return pairs


def _residuals(x: np.ndarray, pairs: list[_PairData], problem: RecoveryProblem) -> np.ndarray:
    s = np.exp(x[0::2])
    b = x[1::2]
    sqrt_lam = np.sqrt(problem.lambda_ratio)
    out = []
    for pd in pairs:
        dt_i = s[pd.idx_i] * pd.d_i + b[pd.idx_i]
        dt_j = s[pd.idx_j] * pd.d_j + b[pd.idx_j]
        # reprojection: lift from view i at scaled depth, reproject into j
        X_cam_i = dt_i[:, None] * pd.rays_i
        X_w = (X_cam_i - pd.cam_i.t) @ pd.cam_i.R
        X_cam_j = X_w @ pd.cam_j.R.T + pd.cam_j.t
        uvw = X_cam_j @ pd.cam_j.K.T
        proj = uvw[:, :2] / uvw[:, 2:3]
        out.append((proj - pd.p_j).reshape(-1))
        # depth-ratio consistency
        gamma = pd.rays_i @ pd.R_ji[2] + pd.t_ji[2] / dt_i
        if problem.ratio_uses_scaled_depth:
            ratio = dt_j / dt_i
        else:
            ratio = pd.d_j / pd.d_i
        out.append(sqrt_lam * (ratio - gamma))
    return np.concatenate(out) if out else np.zeros(0)


def _params_to_vector(params: list[ScaleShift]) -> np.ndarray:
    x = np.zeros(2 * len(params))
    x[0::2] = np.log([p.s for p in params])
    x[1::2] = [p.b for p in params]
    return x


def recovery_objective(params: list[ScaleShift], problem: RecoveryProblem) -> float:
    """Sum of squared residuals of the joint objective."""
    if len(params) != len(problem.views):
        raise ValueError("need one ScaleShift per view")
    pairs = _prepare(problem)
    if not pairs:
        raise ValueError("no usable matches (all skipped)")
    r = _residuals(_params_to_vector(params), pairs, problem)
    return float(r @ r)


def _numeric_jacobian(x, pairs, problem, free) -> np.ndarray:
    r0 = _residuals(x, pairs, problem)
    J = np.zeros((len(r0), len(free)))
    for col, pi in enumerate(free):
        h = 1e-6 * max(1.0, abs(x[pi]))
        xp = x.copy()
        xm = x.copy()
        xp[pi] += h
        xm[pi] -= h
        J[:, col] = (_residuals(xp, pairs, problem) - _residuals(xm, pairs, problem)) / (
            2.0 * h
        )
    return J


@dataclass
class RecoveryResult:
    params: list[ScaleShift]
    objective: float
    trace: list[float] = field(default_factory=list)  # accepted objectives
    mode: str = "full"  # "full" or "anchored"
    iterations: int = 0


def optimize_scales(
    problem: RecoveryProblem, init: list[ScaleShift] | None = None
) -> RecoveryResult:
    """Jointly recover per-view (s, b) by damped least squares.

    Starts from s = 1, b = 0 unless ``init`` is given. If the Jacobian at
    the optimum is numerically rank-deficient (global gauge freedom), the
    problem is re-solved with view 0 anchored to s = 1, b = 0 and
    ``mode = "anchored"``.
    """
    if len(problem.views) < 2:
        raise ValueError("insufficient views: need at least 2")
    pairs = _prepare(problem)
    if not pairs:
        raise ValueError("insufficient matches: no usable match set")
    n = len(problem.views)
    if init is not None:
        if len(init) != n:
            raise ValueError("init must provide one ScaleShift per view")
        x0 = _params_to_vector(init)
    else:
        x0 = np.zeros(2 * n)

    x, trace, iters = _levenberg(x0, pairs, problem, free=list(range(2 * n)))
    J = _numeric_jacobian(x, pairs, problem, list(range(2 * n)))
    sv = np.linalg.svd(J, compute_uv=False)
    mode = "full"
    if sv[-1] < RANK_DEFICIENCY_RATIO * sv[0]:
        mode = "anchored"
        x_a = x0.copy()
        x_a[0] = 0.0
        x_a[1] = 0.0
        x, trace, iters = _levenberg(x_a, pairs, problem, free=list(range(2, 2 * n)))
    r = _residuals(x, pairs, problem)
    obj = float(r @ r)
    if not np.isfinite(obj):
        raise RuntimeError("scale recovery diverged (non-finite objective)")
    params = [ScaleShift(float(np.exp(x[2 * i])), float(x[2 * i + 1])) for i in range(n)]
    return RecoveryResult(params, obj, trace, mode, iters)


def _levenberg(x0, pairs, problem, free):
    x = x0.copy()
    r = _residuals(x, pairs, problem)
    cost = float(r @ r)
    if not np.isfinite(cost):
        raise RuntimeError("objective non-finite at the initial point")
    trace = [cost]
    mu = 1e-3
    it = 0
    for it in range(1, MAX_ITERATIONS + 1):
        J = _numeric_jacobian(x, pairs, problem, free)
        JtJ = J.T @ J
        g = J.T @ r
        accepted = False
        for _ in range(25):
            A = JtJ + mu * np.diag(np.diag(JtJ)) + 1e-15 * np.eye(len(free))
            try:
                step = np.linalg.solve(A, -g)
            except np.linalg.LinAlgError:
                mu *= 5.0
                continue
            x_new = x.copy()
            x_new[free] += step
            r_new = _residuals(x_new, pairs, problem)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                x, r = x_new, r_new
                rel = (cost - cost_new) / max(cost, 1e-300)
                cost = cost_new
                trace.append(cost)
                mu = max(mu / 3.0, 1e-12)
                accepted = True
                if rel < REL_TOL:
                    return x, trace, it
                break
            mu *= 5.0
        if not accepted:
            break
    return x, trace, it


def align_depth(raw: DepthMap, params: ScaleShift) -> DepthMap:
    """Apply D_a = s D + b on valid pixels; non-positive results go invalid."""
    data = raw.data.astype(np.float64)
    out = np.zeros_like(data)
    valid = raw.valid_mask
    out[valid] = params.s * data[valid] + params.b
    out[out <= 0.0] = 0.0
    return DepthMap(out)
