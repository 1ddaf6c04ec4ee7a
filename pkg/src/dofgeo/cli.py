"""Batch command-line surface.

Commands: defocus, align-global, align-local, losses, density,
render-depth, fixtures generate. All outputs are deterministic given
(inputs, config, seed); every JSON output carries a tool_version field.
"""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .defocus import coc_map, plan_radii, synthesize_defocus
from .density_control import keep_mask, load_stats, prune_mask
from .fixtures import (
    make_defocus_inputs,
    make_scale_scene,
    make_splat_buffer,
    make_stats,
)
from .geo_consistency import filter_matches, geometric_loss, render_depth
from .global_scale import RecoveryProblem, optimize_scales
from .heatmap import turbo_colormap
from .local_scale import build_grid, depth_consistency_loss, error_map, fit_grid
from .losses import l1_loss, ssim
from .optics import optimize_focus
from .scene_io import (
    ImageBuffer,
    SceneIOError,
    load_cameras,
    load_depth,
    load_image,
    load_matches,
    load_splats,
    save_cameras,
    save_depth,
    save_image,
    save_matches,
    save_pfm,
    save_splats,
)
from .density_control import save_stats


def _write_json(path: Path, payload: dict) -> None:
    payload = dict(payload)
    payload["tool_version"] = __version__
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_cfg(ctx) -> RunConfig:
    return ctx.obj["config"]


def _out_dir(ctx) -> Path:
    out = Path(ctx.obj["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


@click.group()
@click.version_option(__version__, prog_name="dofgeo")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON or TOML config file; flags override it.")
@click.option("--seed", type=int, default=None, help="Seed for synthetic generators.")
@click.option("--threads", type=int, default=None, help="Parallelism degree.")
@click.option("--out-dir", type=click.Path(), default=".", show_default=True)
@click.pass_context
def main(ctx, config_path, seed, threads, out_dir):
    """Defocus synthesis and multi-view depth alignment toolkit."""
    try:
        cfg = load_config(config_path) if config_path else RunConfig()
        cfg = cfg.with_overrides(seed=seed, threads=threads)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    ctx.ensure_object(dict)
    ctx.obj["config"] = cfg
    ctx.obj["out_dir"] = out_dir


def _fail_on(exc_types):
    """Convert module errors into a clean nonzero exit."""
    def deco(fn):
        def wrapper(*a, **kw):
            try:
                return fn(*a, **kw)
            except exc_types as exc:
                raise click.ClickException(str(exc))
        wrapper.__name__ = fn.__name__
        wrapper.__doc__ = fn.__doc__
        return wrapper
    return deco


_ERRORS = (SceneIOError, ValueError, RuntimeError, OSError)


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path())
@click.option("--depth", "depth_path", required=True, type=click.Path())
@click.option("--depth-scale", type=float, default=None,
              help="Meters per unit for 16-bit PNG depth input.")
@click.pass_context
@_fail_on(_ERRORS)
def defocus(ctx, image_path, depth_path, depth_scale):
    """Synthesize a defocused image from an image/depth pair."""
    cfg = _load_cfg(ctx)
    out = _out_dir(ctx)
    img = load_image(image_path)
    depth = load_depth(depth_path, meters_per_unit=depth_scale,
                       expect_size=(img.width, img.height))
    lens = cfg.lens(image_width=img.width)
    if cfg.focus_distance is not None:
        d_f = cfg.focus_distance
    else:
        d_f = optimize_focus(depth, cfg.focus_strategy)
    spec = cfg.kernel_spec()
    result = synthesize_defocus(img, depth, lens, d_f, spec)
    save_image(result, out / "defocus.png")
    radii = plan_radii(coc_map(lens, depth, d_f), spec.radius)
    hist = {str(r): int((radii == r).sum()) for r in range(spec.radius + 1)}
    _write_json(out / "defocus.json", {
        "focus_distance": d_f,
        "kernel_family": spec.family,
        "radius_histogram": hist,
    })
    click.echo(f"wrote {out / 'defocus.png'}")


@main.command("align-global")
@click.option("--cameras", "cameras_path", required=True, type=click.Path())
@click.option("--depth", "depth_paths", required=True, multiple=True, type=click.Path(),
              help="Raw monocular depth PFM per view, in camera-file order.")
@click.option("--matches", "matches_path", required=True, type=click.Path())
@click.pass_context
@_fail_on(_ERRORS)
def align_global(ctx, cameras_path, depth_paths, matches_path):
    """Recover per-view (s, b) and write aligned depth maps."""
    cfg = _load_cfg(ctx)
    out = _out_dir(ctx)
    cams = load_cameras(cameras_path)
    if len(cams) < 2 or len(depth_paths) < 2:
        raise click.ClickException("insufficient views: need at least 2")
    if len(depth_paths) != len(cams):
        raise click.ClickException("need one depth map per camera")
    depths = [load_depth(p) for p in depth_paths]
    sizes = {c.view_id: (c.width, c.height) for c in cams}
    matches = load_matches(matches_path, image_sizes=sizes)
    matches = [filter_matches(m, cfg.tau_conf) for m in matches]
    problem = RecoveryProblem(
        views=list(zip(cams, depths)), matches=matches, lambda_ratio=cfg.lambda_ratio
    )
    try:
        result = optimize_scales(problem)
    except (ValueError, RuntimeError) as exc:
        raise click.ClickException(f"scale recovery failed: {exc}")
    params_payload = [
        {"view_id": cam.view_id, "s": p.s, "b": p.b}
        for cam, p in zip(cams, result.params)
    ]
    (out / "scale_params.json").write_text(
        json.dumps(params_payload, indent=2, sort_keys=True) + "\n"
    )
    _write_json(out / "align_trace.json", {
        "objective": result.objective,
        "trace": result.trace,
        "mode": result.mode,
        "iterations": result.iterations,
    })
    from .global_scale import align_depth

    for cam, p, d in zip(cams, result.params, depths):
        save_depth(align_depth(d, p), out / f"aligned_{cam.view_id:03d}.pfm")
    click.echo(f"recovered {len(cams)} views (mode={result.mode}, "
               f"objective={result.objective:.3e})")


@main.command("align-local")
@click.option("--rendered", "rendered_path", required=True, type=click.Path())
@click.option("--mono", "mono_path", required=True, type=click.Path())
@click.pass_context
@_fail_on(_ERRORS)
def align_local(ctx, rendered_path, mono_path):
    """Per-cell linear depth alignment, error map, and consistency loss."""
    cfg = _load_cfg(ctx)
    out = _out_dir(ctx)
    d_r = load_depth(rendered_path)
    d_m = load_depth(mono_path)
    if d_r.data.shape != d_m.data.shape:
        raise click.ClickException("rendered and monocular depth sizes differ")
    grid = build_grid(d_r.height, d_r.width, cfg.g_min, cfg.g_max)
    fits = fit_grid(d_r, d_m, grid, cfg.local_reg)
    emap = error_map(d_r, d_m, grid, fits)
    loss = depth_consistency_loss(d_r, d_m, emap, cfg.alpha_depth_corr)
    fits_payload = [
        {"row": r, "col": c, "s": f.s, "t": f.t, "E": f.E, "n": f.n, "usable": f.usable}
        for r, row in enumerate(fits)
        for c, f in enumerate(row)
    ]
    (out / "fits.json").write_text(json.dumps(fits_payload, indent=2, sort_keys=True) + "\n")
    save_pfm(emap.values, out / "error_map.pfm")
    save_image(ImageBuffer(turbo_colormap(emap.values).astype(np.float32)),
               out / "error_map.png")
    _write_json(out / "depth_loss.json", {
        "L_depth": loss,
        "grid_rows": grid.rows,
        "grid_cols": grid.cols,
    })
    click.echo(f"L_depth = {loss:.6f} over {grid.rows}x{grid.cols} grid")


@main.command()
@click.option("--rend", "rend_path", required=True, type=click.Path())
@click.option("--gt", "gt_path", required=True, type=click.Path())
@click.option("--aligned-depth", "aligned_path", type=click.Path(), default=None,
              help="Aligned depth prior; enables the defocus loss term.")
@click.option("--cameras", "cameras_path", type=click.Path(), default=None)
@click.option("--rendered-depth", "rendered_depth_paths", multiple=True, type=click.Path(),
              help="Rendered depth PFM per view; with --cameras/--matches enables L_geo.")
@click.option("--matches", "matches_path", type=click.Path(), default=None)
@click.option("--mono-depth", "mono_path", type=click.Path(), default=None,
              help="Monocular depth; with one rendered depth enables L_depth.")
@click.pass_context
@_fail_on(_ERRORS)
def losses(ctx, rend_path, gt_path, aligned_path, cameras_path,
           rendered_depth_paths, matches_path, mono_path):
    """Evaluate the supervision losses; omitted terms are reported as null."""
    cfg = _load_cfg(ctx)
    out = _out_dir(ctx)
    rend = load_image(rend_path)
    gt = load_image(gt_path)
    weights = cfg.loss_weights()

    l1_rgb = l1_loss(rend, gt)
    ssim_rgb = ssim(rend, gt)
    L_rgb = (1 - weights.lambda_dssim) * l1_rgb + weights.lambda_dssim * (1 - ssim_rgb)

    report = {"l1_rgb": l1_rgb, "ssim_rgb": ssim_rgb, "L_rgb": L_rgb,
              "l1_dof": None, "ssim_dof": None, "L_dof": None,
              "L_geo": None, "L_depth": None}
    partial = False
    total = L_rgb

    if aligned_path is not None:
        depth = load_depth(aligned_path, expect_size=(rend.width, rend.height))
        lens = cfg.lens(image_width=rend.width)
        d_f = cfg.focus_distance if cfg.focus_distance is not None else optimize_focus(
            depth, cfg.focus_strategy)
        spec = cfg.kernel_spec()
        rend_b = synthesize_defocus(rend, depth, lens, d_f, spec)
        gt_b = synthesize_defocus(gt, depth, lens, d_f, spec)
        report["l1_dof"] = l1_loss(rend_b, gt_b)
        report["ssim_dof"] = ssim(rend_b, gt_b)
        report["L_dof"] = ((1 - weights.lambda_dssim_dof) * report["l1_dof"]
                           + weights.lambda_dssim_dof * (1 - report["ssim_dof"]))
        total += report["L_dof"]
    else:
        partial = True

    if cameras_path and matches_path and rendered_depth_paths:
        cams = load_cameras(cameras_path)
        if len(rendered_depth_paths) != len(cams):
            raise click.ClickException("need one rendered depth per camera")
        depths = {c.view_id: load_depth(p) for c, p in zip(cams, rendered_depth_paths)}
        cam_by_id = {c.view_id: c for c in cams}
        sizes = {c.view_id: (c.width, c.height) for c in cams}
        msets = [filter_matches(m, cfg.tau_conf)
                 for m in load_matches(matches_path, image_sizes=sizes)]
        tot, used = 0.0, 0
        for ms in msets:
            r = geometric_loss(ms, depths[ms.view_i], depths[ms.view_j],
                               cam_by_id[ms.view_i], cam_by_id[ms.view_j])
            tot += r.value * r.used
            used += r.used
        report["L_geo"] = tot / used if used else 0.0
        total += weights.lambda_geo * report["L_geo"]
    else:
        partial = True

    if mono_path and rendered_depth_paths:
        d_m = load_depth(mono_path)
        d_r = load_depth(rendered_depth_paths[0])
        grid = build_grid(d_r.height, d_r.width, cfg.g_min, cfg.g_max)
        fits = fit_grid(d_r, d_m, grid, cfg.local_reg)
        emap = error_map(d_r, d_m, grid, fits)
        report["L_depth"] = depth_consistency_loss(d_r, d_m, emap, cfg.alpha_depth_corr)
        total += weights.lambda_depth * report["L_depth"]
    else:
        partial = True

    report["L_total"] = total
    report["partial"] = partial
    _write_json(out / "losses.json", report)
    click.echo(f"L_total = {total:.6f}" + (" (partial)" if partial else ""))


@main.command()
@click.option("--stats", "stats_path", required=True, type=click.Path())
@click.pass_context
@_fail_on(_ERRORS)
def density(ctx, stats_path):
    """Compute keep/prune masks from a GSTA1 stats file."""
    cfg = _load_cfg(ctx)
    out = _out_dir(ctx)
    stats = load_stats(stats_path)
    keep = keep_mask(stats.dof_grad, cfg.tau_keep)
    prune = prune_mask(stats, keep, cfg.alpha_min, cfg.grad_min)
    (out / "keep_mask.bin").write_bytes(np.packbits(keep, bitorder="little").tobytes())
    (out / "prune_mask.bin").write_bytes(np.packbits(prune, bitorder="little").tobytes())
    _write_json(out / "density.json", {
        "count": len(stats),
        "keep_count": int(keep.sum()),
        "prune_count": int(prune.sum()),
    })
    click.echo(f"kept {int(keep.sum())} / {len(stats)}, pruned {int(prune.sum())}")


@main.command("render-depth")
@click.option("--splats", "splats_path", required=True, type=click.Path())
@click.pass_context
@_fail_on(_ERRORS)
def render_depth_cmd(ctx, splats_path):
    """Composite a depth map from an SPLB1 splat-sample buffer."""
    out = _out_dir(ctx)
    buf = load_splats(splats_path)
    depth = render_depth(buf)
    save_depth(depth, out / "depth.pfm")
    click.echo(f"wrote {out / 'depth.pfm'} ({depth.width}x{depth.height})")


@main.group()
def fixtures():
    """Synthetic fixture generation."""


@fixtures.command("generate")
@click.pass_context
@_fail_on(_ERRORS)
def fixtures_generate(ctx):
    """Write the seeded synthetic fixtures used by the acceptance suite."""
    cfg = _load_cfg(ctx)
    out = _out_dir(ctx)
    seed = cfg.seed

    scene = make_scale_scene(seed=seed)
    save_cameras(scene.cameras, out / "cameras.json")
    save_matches(scene.matches, out / "matches.csv")
    for v, (raw, true) in enumerate(zip(scene.raw_depths, scene.true_depths)):
        save_depth(raw, out / f"mono_{v:03d}.pfm")
        save_depth(true, out / f"true_{v:03d}.pfm")
    (out / "true_params.json").write_text(json.dumps(
        [{"view_id": v, "s": p.s, "b": p.b} for v, p in enumerate(scene.true_params)],
        indent=2, sort_keys=True) + "\n")

    img, depth = make_defocus_inputs(seed=seed)
    save_image(img, out / "image.png")
    save_depth(depth, out / "depth.pfm")

    save_splats(make_splat_buffer(seed=seed), out / "splats.splb")
    save_stats(make_stats(seed=seed), out / "stats.gsta")
    _write_json(out / "fixtures.json", {"seed": seed})
    click.echo(f"fixtures written to {out}")


if __name__ == "__main__":
    main()
