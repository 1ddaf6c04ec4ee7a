import itertools

import numpy as np
import pytest

from dofgeo.density_control import (
    GaussianStats,
    accumulate,
    iqr_weights,
    keep_mask,
    load_stats,
    prune_mask,
    save_stats,
)


def stats_of(opacity, pos_grad, dof_grad=None, accum=None):
    n = len(opacity)
    return GaussianStats(
        opacity=np.asarray(opacity, dtype=np.float64),
        pos_grad=np.asarray(pos_grad, dtype=np.float64),
        dof_grad=np.zeros(n) if dof_grad is None else np.asarray(dof_grad),
        accum=np.zeros(n) if accum is None else np.asarray(accum),
    )


class TestKeepMask:
    def test_cardinality_random_arrays(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(1, 400))
            tau = float(rng.uniform(0.05, 1.0))
            g = rng.uniform(0, 1, n)
            if rng.uniform() < 0.3:
                # inject ties
                g = np.round(g, 1)
            mask = keep_mask(g, tau)
            assert mask.sum() == int(np.ceil(tau * n))

    def test_selects_largest(self):
        g = np.array([0.1, 0.9, 0.5, 0.7])
        mask = keep_mask(g, 0.5)
        assert mask.tolist() == [False, True, False, True]

    def test_ties_prefer_smaller_index(self):
        g = np.array([0.5, 0.5, 0.5, 0.5])
        mask = keep_mask(g, 0.5)
        assert mask.tolist() == [True, True, False, False]

    def test_printed_form_quantile_threshold(self):
        g = np.arange(10, dtype=np.float64)
        mask = keep_mask(g, 0.2, printed_form=True)
        # thresholding at the 0.2-quantile keeps the top 1 - tau instead
        assert mask.sum() == (g >= np.quantile(g, 0.2)).sum()
        assert mask.sum() != int(np.ceil(0.2 * len(g)))

    def test_tau_one_keeps_all(self):
        g = np.array([3.0, 1.0, 2.0])
        assert keep_mask(g, 1.0).all()

    def test_empty(self):
        assert keep_mask(np.zeros(0)).shape == (0,)

    def test_bad_tau(self):
        with pytest.raises(ValueError):
            keep_mask(np.ones(4), 0.0)


class TestPruneMask:
    def test_truth_table_exhaustive(self):
        # one gaussian per combination of (alpha low, grad low, kept)
        combos = list(itertools.product([True, False], repeat=3))
        opacity = [0.001 if lo else 0.5 for lo, _, _ in combos]
        pos_grad = [0.0001 if lo else 0.01 for _, lo, _ in combos]
        keep = np.array([k for _, _, k in combos])
        st = stats_of(opacity, pos_grad)
        got = prune_mask(st, keep)
        for idx, (a_lo, g_lo, kept) in enumerate(combos):
            want = a_lo or (g_lo and not kept)
            assert got[idx] == want, combos[idx]

    def test_thresholds_strict(self):
        st = stats_of([0.005, 0.0049], [0.0002, 0.00019])
        got = prune_mask(st, np.array([False, False]))
        assert got.tolist() == [False, True]

    def test_length_mismatch(self):
        st = stats_of([0.5], [0.01])
        with pytest.raises(ValueError):
            prune_mask(st, np.zeros(2, dtype=bool))


class TestIqrWeights:
    def test_quartile_anchor_values(self):
        # evenly spread sample: Q25 and Q75 are exact sample points
        g = np.linspace(0.0, 1.0, 101)
        w = iqr_weights(g)
        q25, q75 = np.quantile(g, [0.25, 0.75])
        i25 = int(np.argmin(np.abs(g - q25)))
        i75 = int(np.argmin(np.abs(g - q75)))
        assert abs(w[i25] - 1.0) < 1e-9
        assert abs(w[i75] - np.exp(-1.0)) < 1e-7  # eps shifts the exponent slightly

    def test_monotone_decreasing(self):
        g = np.sort(np.random.default_rng(1).uniform(0, 5, 50))
        w = iqr_weights(g)
        assert np.all(np.diff(w) <= 1e-15)

    def test_degenerate_iqr_finite(self):
        w = iqr_weights(np.full(10, 3.0))
        assert np.allclose(w, 1.0)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            iqr_weights(np.zeros(0))


class TestAccumulate:
    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(2)
        n = 40
        st = stats_of(rng.uniform(0, 1, n), rng.uniform(0, 0.01, n))
        g = rng.uniform(0, 2, n)
        out = accumulate(st, g)
        q25, q75 = np.quantile(g, [0.25, 0.75])
        for i in range(n):
            w = np.exp(-(g[i] - q25) / (q75 - q25 + 1e-8))
            assert out.accum[i] == pytest.approx(w * g[i], rel=1e-12)

    def test_additive_over_rounds(self):
        rng = np.random.default_rng(3)
        n = 30
        st = stats_of(rng.uniform(0, 1, n), rng.uniform(0, 0.01, n))
        g1 = rng.uniform(0, 1, n)
        g2 = rng.uniform(0, 1, n)
        once = accumulate(accumulate(st, g1), g2)
        w2 = iqr_weights(g2)
        assert np.allclose(once.accum, accumulate(st, g1).accum + w2 * g2)

    def test_updates_dof_grad(self):
        st = stats_of([0.5, 0.5], [0.01, 0.01])
        g = np.array([0.2, 0.4])
        out = accumulate(st, g)
        assert np.array_equal(out.dof_grad, g)

    def test_length_mismatch(self):
        st = stats_of([0.5], [0.01])
        with pytest.raises(ValueError):
            accumulate(st, np.zeros(3))


class TestStatsIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        n = 17
        st = GaussianStats(
            opacity=rng.uniform(0, 1, n).astype(np.float32),
            pos_grad=rng.uniform(0, 0.01, n).astype(np.float32),
            dof_grad=rng.uniform(0, 1, n).astype(np.float32),
            accum=rng.uniform(0, 5, n).astype(np.float32),
        )
        p = tmp_path / "stats.gsta"
        save_stats(st, p)
        back = load_stats(p)
        for name in ("opacity", "pos_grad", "dof_grad", "accum"):
            assert np.array_equal(getattr(back, name), getattr(st, name))

    def test_magic_checked(self, tmp_path):
        p = tmp_path / "bad.gsta"
        p.write_bytes(b"NOPE!" + b"\x00" * 8)
        with pytest.raises(ValueError):
            load_stats(p)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "short.gsta"
        p.write_bytes(b"GSTA1" + (2).to_bytes(4, "little") + b"\x00" * 16)
        with pytest.raises(ValueError):
            load_stats(p)

    def test_empty_file_round_trip(self, tmp_path):
        st = stats_of([], [])
        p = tmp_path / "empty.gsta"
        save_stats(st, p)
        assert len(load_stats(p)) == 0


class TestValidation:
    def test_opacity_range(self):
        with pytest.raises(ValueError):
            stats_of([1.5], [0.0])

    def test_negative_grad(self):
        with pytest.raises(ValueError):
            stats_of([0.5], [-1.0])

    def test_nonfinite(self):
        with pytest.raises(ValueError):
            stats_of([np.nan], [0.0])

    def test_length_consistency(self):
        with pytest.raises(ValueError):
            GaussianStats(np.zeros(2), np.zeros(3), np.zeros(2), np.zeros(2))
