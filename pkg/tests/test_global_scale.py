import numpy as np
import pytest

from dofgeo.fixtures import make_scale_scene
from dofgeo.global_scale import (
    RecoveryProblem,
    ScaleShift,
    align_depth,
    optimize_scales,
    recovery_objective,
    relative_pose,
    theoretical_ratio,
)
from dofgeo.scene_io import CameraView, DepthMap, MatchSet


def make_camera(view_id, t, R=None, fx=100.0, width=64, height=48):
    K = np.array([[fx, 0, (width - 1) / 2], [0, fx, (height - 1) / 2], [0, 0, 1.0]])
    return CameraView(
        view_id=view_id,
        K=K,
        R=np.eye(3) if R is None else R,
        t=np.asarray(t, dtype=np.float64),
        width=width,
        height=height,
    )


class TestRelativePose:
    def test_identity_pair(self):
        a = make_camera(0, [0, 0, 0])
        b = make_camera(1, [0, 0, 0])
        R, t = relative_pose(a, b)
        assert np.allclose(R, np.eye(3)) and np.allclose(t, 0.0)

    def test_translation_only(self):
        a = make_camera(0, [0, 0, 0])
        b = make_camera(1, [-0.5, 0, 0.2])
        R, t = relative_pose(a, b)
        assert np.allclose(R, np.eye(3))
        assert np.allclose(t, [-0.5, 0, 0.2])

    def test_composition_consistent(self):
        theta = 0.4
        R1 = np.array(
            [
                [np.cos(theta), -np.sin(theta), 0],
                [np.sin(theta), np.cos(theta), 0],
                [0, 0, 1.0],
            ]
        )
        a = make_camera(0, [0.1, 0.2, 0.3], R=R1)
        b = make_camera(1, [-0.2, 0.0, 0.1])
        R_ji, t_ji = relative_pose(a, b)
        X = np.array([0.3, -0.1, 5.0])
        Xa = a.R @ X + a.t
        Xb = b.R @ X + b.t
        assert np.allclose(R_ji @ Xa + t_ji, Xb, atol=1e-12)


class TestTheoreticalRatio:
    def test_identical_cameras_is_one(self):
        a = make_camera(0, [0, 0, 0])
        b = make_camera(1, [0, 0, 0])
        assert theoretical_ratio(a, b, (10.0, 20.0), 4.0) == pytest.approx(1.0)

    def test_z_translation(self):
        # forward shift: Z_j = Z_i + tz, ratio = 1 + tz / Z_i at the principal ray
        a = make_camera(0, [0, 0, 0])
        tz = 0.8
        b = make_camera(1, [0, 0, tz])
        cx, cy = (64 - 1) / 2, (48 - 1) / 2
        got = theoretical_ratio(a, b, (cx, cy), 4.0)
        assert got == pytest.approx(1.0 + tz / 4.0, rel=1e-12)

    def test_x_translation_invariant(self):
        a = make_camera(0, [0, 0, 0])
        b = make_camera(1, [-0.5, 0, 0])
        assert theoretical_ratio(a, b, (12.0, 7.0), 3.0) == pytest.approx(1.0)

    def test_rejects_nonpositive_depth(self):
        a = make_camera(0, [0, 0, 0])
        with pytest.raises(ValueError):
            theoretical_ratio(a, a, (0.0, 0.0), 0.0)

    def test_exact_on_synthetic_scene(self):
        scene = make_scale_scene(n_views=3, n_matches=60, seed=5)
        cams = {c.view_id: c for c in scene.cameras}
        for ms in scene.matches:
            ci, cj = cams[ms.view_i], cams[ms.view_j]
            di = scene.true_depths[ms.view_i].data
            dj = scene.true_depths[ms.view_j].data
            for k in range(len(ms)):
                xi, yi = int(ms.p_i[k, 0]), int(ms.p_i[k, 1])
                xj, yj = int(ms.p_j[k, 0]), int(ms.p_j[k, 1])
                gamma = theoretical_ratio(ci, cj, ms.p_i[k], float(di[yi, xi]))
                assert gamma == pytest.approx(
                    float(dj[yj, xj]) / float(di[yi, xi]), abs=1e-9
                )


class TestObjective:
    def test_zero_at_generating_params(self):
        scene = make_scale_scene(seed=0)
        prob = RecoveryProblem(
            list(zip(scene.cameras, scene.raw_depths)), scene.matches
        )
        assert recovery_objective(scene.true_params, prob) < 1e-9

    def test_positive_away_from_truth(self):
        scene = make_scale_scene(seed=1)
        prob = RecoveryProblem(
            list(zip(scene.cameras, scene.raw_depths)), scene.matches
        )
        off = [ScaleShift(p.s * 1.1, p.b) for p in scene.true_params]
        assert recovery_objective(off, prob) > 1e-3

    def test_lambda_zero_drops_ratio_term(self):
        scene = make_scale_scene(seed=2)
        views = list(zip(scene.cameras, scene.raw_depths))
        both = RecoveryProblem(views, scene.matches, lambda_ratio=0.5)
        repro = RecoveryProblem(views, scene.matches, lambda_ratio=0.0)
        off = [ScaleShift(p.s, p.b + 0.05) for p in scene.true_params]
        assert recovery_objective(off, repro) <= recovery_objective(off, both)

    def test_ratio_term_scales_linearly_in_lambda(self):
        scene = make_scale_scene(seed=3)
        views = list(zip(scene.cameras, scene.raw_depths))
        off = [ScaleShift(p.s, p.b + 0.05) for p in scene.true_params]
        o0 = recovery_objective(off, RecoveryProblem(views, scene.matches, lambda_ratio=0.0))
        o1 = recovery_objective(off, RecoveryProblem(views, scene.matches, lambda_ratio=1.0))
        o2 = recovery_objective(off, RecoveryProblem(views, scene.matches, lambda_ratio=2.0))
        assert o2 - o0 == pytest.approx(2.0 * (o1 - o0), rel=1e-9)

    def test_param_count_checked(self):
        scene = make_scale_scene(seed=4)
        prob = RecoveryProblem(
            list(zip(scene.cameras, scene.raw_depths)), scene.matches
        )
        with pytest.raises(ValueError):
            recovery_objective(scene.true_params[:-1], prob)


class TestOptimize:
    def test_recovers_planted_params(self):
        scene = make_scale_scene(n_views=4, n_matches=500, seed=0)
        prob = RecoveryProblem(
            list(zip(scene.cameras, scene.raw_depths)), scene.matches
        )
        res = optimize_scales(prob)
        assert res.objective < 1e-6
        for got, want in zip(res.params, scene.true_params):
            assert got.s == pytest.approx(want.s, rel=0.01)
            assert got.b == pytest.approx(want.b, abs=0.01 * max(1.0, abs(want.b)))

    def test_identity_fixed_point(self):
        # undistorted depths: s = 1, b = 0 must be recovered
        scene = make_scale_scene(seed=6)
        prob = RecoveryProblem(
            list(zip(scene.cameras, scene.true_depths)), scene.matches
        )
        res = optimize_scales(prob)
        for p in res.params:
            assert p.s == pytest.approx(1.0, abs=1e-3)
            assert p.b == pytest.approx(0.0, abs=1e-3)

    def test_local_minimum_property(self):
        scene = make_scale_scene(seed=7)
        prob = RecoveryProblem(
            list(zip(scene.cameras, scene.raw_depths)), scene.matches
        )
        res = optimize_scales(prob)
        base = res.objective
        for i in range(len(res.params)):
            for ds, db in ((1e-4, 0.0), (-1e-4, 0.0), (0.0, 1e-4), (0.0, -1e-4)):
                bumped = [
                    ScaleShift(p.s + (ds if k == i else 0.0), p.b + (db if k == i else 0.0))
                    for k, p in enumerate(res.params)
                ]
                assert recovery_objective(bumped, prob) >= base - 1e-12

    def test_trace_monotone_nonincreasing(self):
        scene = make_scale_scene(seed=8)
        prob = RecoveryProblem(
            list(zip(scene.cameras, scene.raw_depths)), scene.matches
        )
        res = optimize_scales(prob)
        assert all(b <= a for a, b in zip(res.trace, res.trace[1:]))

    def test_warm_start_converges(self):
        scene = make_scale_scene(seed=9)
        prob = RecoveryProblem(
            list(zip(scene.cameras, scene.raw_depths)), scene.matches
        )
        res = optimize_scales(prob, init=scene.true_params)
        assert res.objective < 1e-9

    def test_requires_two_views(self):
        scene = make_scale_scene(seed=10)
        prob = RecoveryProblem(
            [(scene.cameras[0], scene.raw_depths[0])], [], lambda_ratio=0.5
        )
        with pytest.raises(ValueError):
            optimize_scales(prob)

    def test_no_usable_matches_raises(self):
        cams = [make_camera(0, [0, 0, 0]), make_camera(1, [-0.5, 0, 0])]
        dead = DepthMap(np.zeros((48, 64)))
        ms = MatchSet(0, 1, np.array([[10.0, 10.0]]), np.array([[5.0, 10.0]]), np.ones(1))
        with pytest.raises(ValueError):
            optimize_scales(RecoveryProblem([(cams[0], dead), (cams[1], dead)], [ms]))


class TestAlignDepth:
    def test_affine_applied(self):
        d = DepthMap(np.array([[2.0, 4.0]]))
        out = align_depth(d, ScaleShift(1.5, 0.25))
        assert np.allclose(out.data, [[3.25, 6.25]])

    def test_invalid_stays_invalid(self):
        d = DepthMap(np.array([[0.0, 2.0]]))
        out = align_depth(d, ScaleShift(2.0, 1.0))
        assert out.data[0, 0] == 0.0 and out.data[0, 1] == 5.0

    def test_nonpositive_result_goes_invalid(self):
        d = DepthMap(np.array([[1.0]]))
        out = align_depth(d, ScaleShift(0.5, -2.0))
        assert out.data[0, 0] == 0.0
        assert not out.valid_mask[0, 0]

    def test_identity_params(self):
        d = DepthMap(np.array([[1.0, 7.0], [0.0, 3.0]]))
        out = align_depth(d, ScaleShift(1.0, 0.0))
        assert np.array_equal(out.data, d.data)


class TestProblemValidation:
    def test_unknown_view_in_match(self):
        scene = make_scale_scene(seed=11)
        bad = MatchSet(0, 99, np.zeros((1, 2)), np.zeros((1, 2)), np.ones(1))
        with pytest.raises(ValueError):
            RecoveryProblem(
                list(zip(scene.cameras, scene.raw_depths)), [bad]
            )

    def test_negative_lambda(self):
        scene = make_scale_scene(seed=12)
        with pytest.raises(ValueError):
            RecoveryProblem(
                list(zip(scene.cameras, scene.raw_depths)),
                scene.matches,
                lambda_ratio=-0.1,
            )

    def test_scale_must_be_positive(self):
        with pytest.raises(ValueError):
            ScaleShift(0.0, 0.0)
