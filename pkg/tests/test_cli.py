import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from dofgeo.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def fixture_dir(tmp_path, runner):
    d = tmp_path / "fx"
    res = runner.invoke(main, ["--out-dir", str(d), "fixtures", "generate"])
    assert res.exit_code == 0, res.output
    return d


def read_outputs(out_dir: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(out_dir.iterdir()) if p.is_file()}


class TestFixturesGenerate:
    def test_produces_expected_files(self, fixture_dir):
        names = {p.name for p in fixture_dir.iterdir()}
        assert {"cameras.json", "matches.csv", "image.png", "depth.pfm",
                "splats.splb", "stats.gsta", "true_params.json",
                "fixtures.json"} <= names
        assert "mono_000.pfm" in names and "true_003.pfm" in names

    def test_seed_changes_content(self, tmp_path, runner):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for d, seed in ((a, "0"), (b, "1")):
            res = runner.invoke(
                main, ["--seed", seed, "--out-dir", str(d), "fixtures", "generate"]
            )
            assert res.exit_code == 0, res.output
        assert (a / "matches.csv").read_bytes() != (b / "matches.csv").read_bytes()


class TestDefocus:
    def test_writes_image_and_report(self, tmp_path, runner, fixture_dir):
        out = tmp_path / "out"
        res = runner.invoke(main, [
            "--out-dir", str(out), "defocus",
            "--image", str(fixture_dir / "image.png"),
            "--depth", str(fixture_dir / "depth.pfm"),
        ])
        assert res.exit_code == 0, res.output
        assert (out / "defocus.png").exists()
        report = json.loads((out / "defocus.json").read_text())
        assert report["kernel_family"] == "gaussian"
        assert "tool_version" in report
        assert sum(report["radius_histogram"].values()) == 48 * 32

    def test_missing_input_fails_cleanly(self, tmp_path, runner):
        res = runner.invoke(main, [
            "--out-dir", str(tmp_path), "defocus",
            "--image", str(tmp_path / "nope.png"),
            "--depth", str(tmp_path / "nope.pfm"),
        ])
        assert res.exit_code != 0


class TestAlignGlobal:
    def test_recovers_planted_params(self, tmp_path, runner, fixture_dir):
        out = tmp_path / "out"
        depth_args = []
        for v in range(4):
            depth_args += ["--depth", str(fixture_dir / f"mono_{v:03d}.pfm")]
        res = runner.invoke(main, [
            "--out-dir", str(out), "align-global",
            "--cameras", str(fixture_dir / "cameras.json"),
            *depth_args,
            "--matches", str(fixture_dir / "matches.csv"),
        ])
        assert res.exit_code == 0, res.output
        got = json.loads((out / "scale_params.json").read_text())
        want = json.loads((fixture_dir / "true_params.json").read_text())
        for g, w in zip(got, want):
            # PFM quantizes raw depths to f32: planted params survive to ~1e-4
            assert g["s"] == pytest.approx(w["s"], rel=1e-3)
            assert g["b"] == pytest.approx(w["b"], abs=1e-3)
        trace = json.loads((out / "align_trace.json").read_text())
        assert trace["objective"] < 1e-3
        assert (out / "aligned_000.pfm").exists()

    def test_view_count_mismatch(self, tmp_path, runner, fixture_dir):
        res = runner.invoke(main, [
            "--out-dir", str(tmp_path / "o"), "align-global",
            "--cameras", str(fixture_dir / "cameras.json"),
            "--depth", str(fixture_dir / "mono_000.pfm"),
            "--depth", str(fixture_dir / "mono_001.pfm"),
            "--matches", str(fixture_dir / "matches.csv"),
        ])
        assert res.exit_code != 0


class TestAlignLocal:
    def test_outputs(self, tmp_path, runner, fixture_dir):
        out = tmp_path / "out"
        res = runner.invoke(main, [
            "--out-dir", str(out), "align-local",
            "--rendered", str(fixture_dir / "true_000.pfm"),
            "--mono", str(fixture_dir / "mono_000.pfm"),
        ])
        assert res.exit_code == 0, res.output
        loss = json.loads((out / "depth_loss.json").read_text())
        assert loss["L_depth"] >= 0.0
        assert (out / "error_map.pfm").exists()
        assert (out / "error_map.png").exists()
        fits = json.loads((out / "fits.json").read_text())
        assert len(fits) == loss["grid_rows"] * loss["grid_cols"]

    def test_size_mismatch(self, tmp_path, runner, fixture_dir):
        res = runner.invoke(main, [
            "--out-dir", str(tmp_path / "o"), "align-local",
            "--rendered", str(fixture_dir / "true_000.pfm"),
            "--mono", str(fixture_dir / "depth.pfm"),
        ])
        assert res.exit_code != 0


class TestLosses:
    def test_rgb_only_partial(self, tmp_path, runner, fixture_dir):
        out = tmp_path / "out"
        res = runner.invoke(main, [
            "--out-dir", str(out), "losses",
            "--rend", str(fixture_dir / "image.png"),
            "--gt", str(fixture_dir / "image.png"),
        ])
        assert res.exit_code == 0, res.output
        rep = json.loads((out / "losses.json").read_text())
        assert rep["partial"] is True
        assert rep["L_rgb"] == pytest.approx(0.0, abs=1e-9)
        assert rep["L_dof"] is None and rep["L_geo"] is None

    def test_with_dof_term(self, tmp_path, runner, fixture_dir):
        out = tmp_path / "out"
        res = runner.invoke(main, [
            "--out-dir", str(out), "losses",
            "--rend", str(fixture_dir / "image.png"),
            "--gt", str(fixture_dir / "image.png"),
            "--aligned-depth", str(fixture_dir / "depth.pfm"),
        ])
        assert res.exit_code == 0, res.output
        rep = json.loads((out / "losses.json").read_text())
        assert rep["L_dof"] == pytest.approx(0.0, abs=1e-9)


class TestDensity:
    def test_masks_and_counts(self, tmp_path, runner, fixture_dir):
        out = tmp_path / "out"
        res = runner.invoke(main, [
            "--out-dir", str(out), "density",
            "--stats", str(fixture_dir / "stats.gsta"),
        ])
        assert res.exit_code == 0, res.output
        rep = json.loads((out / "density.json").read_text())
        assert rep["count"] == 64
        assert rep["keep_count"] == int(np.ceil(0.2 * 64))
        keep_bits = np.unpackbits(
            np.frombuffer((out / "keep_mask.bin").read_bytes(), dtype=np.uint8),
            bitorder="little",
        )[:64]
        assert int(keep_bits.sum()) == rep["keep_count"]


class TestRenderDepth:
    def test_writes_pfm(self, tmp_path, runner, fixture_dir):
        out = tmp_path / "out"
        res = runner.invoke(main, [
            "--out-dir", str(out), "render-depth",
            "--splats", str(fixture_dir / "splats.splb"),
        ])
        assert res.exit_code == 0, res.output
        assert (out / "depth.pfm").exists()


class TestConfigHandling:
    def test_config_file_applied(self, tmp_path, runner, fixture_dir):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"kernel_family": "polygonal"}))
        out = tmp_path / "out"
        res = runner.invoke(main, [
            "--config", str(cfg), "--out-dir", str(out), "defocus",
            "--image", str(fixture_dir / "image.png"),
            "--depth", str(fixture_dir / "depth.pfm"),
        ])
        assert res.exit_code == 0, res.output
        rep = json.loads((out / "defocus.json").read_text())
        assert rep["kernel_family"] == "polygonal"

    def test_unknown_key_rejected(self, tmp_path, runner):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"not_a_key": 1}))
        res = runner.invoke(main, ["--config", str(cfg), "fixtures", "generate"])
        assert res.exit_code != 0


class TestDeterminism:
    COMMANDS = ("defocus", "align-global", "align-local", "losses",
                "density", "render-depth", "fixtures")

    def _run_all(self, base: Path, runner, fixture_dir, threads: str) -> dict:
        outputs = {}
        fx = base / "fx"
        res = runner.invoke(main, ["--threads", threads, "--out-dir", str(fx),
                                   "fixtures", "generate"])
        assert res.exit_code == 0, res.output
        outputs["fixtures"] = read_outputs(fx)

        jobs = {
            "defocus": ["defocus", "--image", str(fixture_dir / "image.png"),
                        "--depth", str(fixture_dir / "depth.pfm")],
            "align-global": ["align-global",
                             "--cameras", str(fixture_dir / "cameras.json"),
                             *sum((["--depth", str(fixture_dir / f"mono_{v:03d}.pfm")]
                                   for v in range(4)), []),
                             "--matches", str(fixture_dir / "matches.csv")],
            "align-local": ["align-local",
                            "--rendered", str(fixture_dir / "true_000.pfm"),
                            "--mono", str(fixture_dir / "mono_000.pfm")],
            "losses": ["losses", "--rend", str(fixture_dir / "image.png"),
                       "--gt", str(fixture_dir / "image.png"),
                       "--aligned-depth", str(fixture_dir / "depth.pfm")],
            "density": ["density", "--stats", str(fixture_dir / "stats.gsta")],
            "render-depth": ["render-depth",
                             "--splats", str(fixture_dir / "splats.splb")],
        }
        for name, args in jobs.items():
            out = base / name
            res = runner.invoke(main, ["--threads", threads, "--out-dir", str(out), *args])
            assert res.exit_code == 0, f"{name}: {res.output}"
            outputs[name] = read_outputs(out)
        return outputs

    def test_byte_identical_across_runs_and_threads(self, tmp_path, runner, fixture_dir):
        runs = []
        for n, threads in enumerate(["1", "1", "1", "4"]):
            runs.append(self._run_all(tmp_path / f"run{n}", runner, fixture_dir, threads))
        ref = runs[0]
        for other in runs[1:]:
            assert other.keys() == ref.keys()
            for cmd in ref:
                assert other[cmd] == ref[cmd], f"{cmd} output differs between runs"
