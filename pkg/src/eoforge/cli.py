"""`forge` command line: run stages, the full pipeline, or the HTTP service.

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import shutil
import sys
from pathlib import Path

import click

from . import pipeline
from .errors import ConfigError, ForgeError
from .geosample import WaterMask, generate_points, load_points, save_points
from .pipeline import PipelineConfig, run_full_auto, run_stage
from .store import (DatasetManifest, RegionRecord, StageStatus, commit_manifest,
                    load_manifest)

EXIT_CONFIG = 2
EXIT_STAGE = 3


def _fail(code: int, msg: str) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _load_config(config_path: str | None, overrides: dict) -> PipelineConfig:
    try:
        if config_path:
            return PipelineConfig.from_file(config_path, overrides)
        return PipelineConfig.from_dict(pipeline.apply_overrides({}, overrides))
    except ConfigError as e:
        _fail(EXIT_CONFIG, str(e))


def _parse_sets(pairs: tuple[str, ...]) -> dict:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            _fail(EXIT_CONFIG, f"--set expects section.key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _run(stage: str, cfg: PipelineConfig) -> None:
    try:
        if stage == "all":
            run_full_auto(cfg)
        else:
            run_stage(stage, cfg)
    except ConfigError as e:
        _fail(EXIT_CONFIG, str(e))
    except ForgeError as e:
        _fail(EXIT_STAGE, f"stage {stage} failed: {e}")
    except Exception as e:
        _fail(EXIT_STAGE, f"stage {stage} failed: {e}")


config_option = click.option("--config", "config_path", type=click.Path(),
                             default=None, help="settings file (INI format)")
set_option = click.option("--set", "sets", multiple=True, metavar="SECTION.KEY=VALUE",
                          help="override one config value")


@click.group()
def main():
    """Automated satellite-imagery dataset builder."""


@main.command()
@config_option
@set_option
@click.option("--n", type=int, default=None, help="number of points")
@click.option("--seed", type=int, default=None)
@click.option("--lat-min", type=float, default=None)
@click.option("--lat-max", type=float, default=None)
@click.option("--lon-min", type=float, default=None)
@click.option("--lon-max", type=float, default=None)
@click.option("--scene-px", type=int, default=None)
@click.option("--gsd", type=float, default=None)
@click.option("--mask", type=click.Path(), default=None, help="water mask file")
@click.option("--out", type=click.Path(), default=None,
              help="write points CSV here instead of running the stage")
@click.option("--root", type=click.Path(), default=None, help="dataset root")
def generate(config_path, sets, n, seed, lat_min, lat_max, lon_min, lon_max,
             scene_px, gsd, mask, out, root):
    """Generate land-only points (stage 1)."""
    overrides = _parse_sets(sets)
    flag_map = {
        "generate.n_points": n, "generate.seed": seed,
        "generate.lat_min": lat_min, "generate.lat_max": lat_max,
        "generate.lon_min": lon_min, "generate.lon_max": lon_max,
        "generate.scene_px": scene_px, "generate.gsd": gsd,
        "general.mask": mask, "general.root": root,
    }
    overrides.update({k: v for k, v in flag_map.items() if v is not None})
    cfg = _load_config(config_path, overrides)
    if out:
        # standalone mode: just the CSV, no dataset root
        try:
            m = WaterMask.load(cfg.mask_path) if cfg.mask_path else WaterMask.all_land()
            points = generate_points(cfg.sampler, m)
            save_points(points, out)
            click.echo(f"wrote {len(points)} points to {out}")
        except ForgeError as e:
            _fail(EXIT_STAGE, str(e))
        return
    _run("generate", cfg)
    click.echo(f"generated {cfg.sampler.n_points} points under {cfg.root}")


@main.command()
@config_option
@set_option
@click.option("--points", "points_csv", type=click.Path(), default=None,
              help="use this points CSV instead of the generate stage output")
@click.option("--from", "start_month", default=None, metavar="YYYY-MM")
@click.option("--months", type=int, default=None)
@click.option("--satellites", default=None, help="comma list, e.g. s1,s2")
@click.option("--candidates", type=int, default=None)
@click.option("--provider", default=None, help="catalog base URL or 'mock'")
@click.option("--out", "root", type=click.Path(), default=None, help="dataset root")
def download(config_path, sets, points_csv, start_month, months, satellites,
             candidates, provider, root):
    """Download the monthly time series (stage 2)."""
    overrides = _parse_sets(sets)
    flag_map = {
        "download.start_month": start_month, "download.months": months,
        "download.satellites": satellites, "download.candidates": candidates,
        "general.provider": provider, "general.root": root,
    }
    overrides.update({k: v for k, v in flag_map.items() if v is not None})
    cfg = _load_config(config_path, overrides)
    if points_csv:
        _bootstrap_points(cfg.root, points_csv)
    _run("download", cfg)
    click.echo(f"download complete under {cfg.root}")


def _bootstrap_points(root, points_csv) -> None:
    """Seed a dataset root from an external points CSV."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    points = load_points(points_csv)
    target = pipeline.points_csv_path(root)
    if Path(points_csv).resolve() != target.resolve():
        shutil.copyfile(points_csv, target)
    try:
        m = load_manifest(root)
    except FileNotFoundError:
        m = DatasetManifest()
    m.regions = [RegionRecord(scene_id=i, center=p) for i, p in enumerate(points)]
    m.stage_status["generate"] = StageStatus.DONE
    commit_manifest(m, root)


@main.command()
@config_option
@set_option
@click.option("--root", type=click.Path(), default=None)
@click.option("--mode", type=click.Choice(["minmax", "std", "max", "tiff"]),
              default=None)
@click.option("--stats-scope", type=click.Choice(["image", "band"]), default=None)
def convert(config_path, sets, root, mode, stats_scope):
    """Normalize raw rasters into PNG (or TIFF passthrough) (stage 3)."""
    overrides = _parse_sets(sets)
    flag_map = {"general.root": root, "convert.mode": mode,
                "convert.stats_scope": stats_scope}
    overrides.update({k: v for k, v in flag_map.items() if v is not None})
    cfg = _load_config(config_path, overrides)
    _run("convert", cfg)
    click.echo(f"conversion complete under {cfg.root}")


@main.command()
@config_option
@set_option
@click.option("--root", type=click.Path(), default=None)
@click.option("--missing-max", type=float, default=None)
@click.option("--cloud-max", type=float, default=None)
@click.option("--manual", is_flag=True, default=None)
def clean(config_path, sets, root, missing_max, cloud_max, manual):
    """Score candidates and keep the best per month (stage 4)."""
    overrides = _parse_sets(sets)
    flag_map = {"general.root": root, "clean.missing_max": missing_max,
                "clean.cloud_max": cloud_max, "clean.manual": manual}
    overrides.update({k: v for k, v in flag_map.items() if v is not None})
    cfg = _load_config(config_path, overrides)
    _run("clean", cfg)
    click.echo(f"cleaning complete under {cfg.root}")


@main.command()
@config_option
@set_option
@click.option("--root", type=click.Path(), default=None)
@click.option("--patch", type=int, default=None)
@click.option("--stride", type=int, default=None)
def extract(config_path, sets, root, patch, stride):
    """Cut kept images into patches and render previews (stage 5)."""
    overrides = _parse_sets(sets)
    flag_map = {"general.root": root, "extract.patch": patch,
                "extract.stride": stride}
    overrides.update({k: v for k, v in flag_map.items() if v is not None})
    cfg = _load_config(config_path, overrides)
    _run("extract", cfg)
    click.echo(f"extraction complete under {cfg.root}")


@main.command()
@config_option
@set_option
@click.option("--root", type=click.Path(), default=None)
def all(config_path, sets, root):
    """Run every stage in order (resumes a partial run)."""
    overrides = _parse_sets(sets)
    if root is not None:
        overrides["general.root"] = root
    cfg = _load_config(config_path, overrides)
    _run("all", cfg)
    click.echo(f"pipeline complete under {cfg.root}")


@main.command()
@config_option
@set_option
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.option("--static", "static_dir", type=click.Path(), default=None,
              help="directory with the built web UI")
def serve(config_path, sets, host, port, static_dir):
    """Start the HTTP API (and optionally the web UI)."""
    cfg = _load_config(config_path, _parse_sets(sets))
    from .service import serve as run_server
    run_server(cfg, host=host, port=port, static_dir=static_dir)


if __name__ == "__main__":
    main()
