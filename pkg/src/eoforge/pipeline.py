"""Pipeline configuration and the five-stage orchestrator.

Stages run in a fixed order (generate, download, convert, clean, extract)
with completion recorded in the manifest, so an interrupted run resumes by
skipping every stage already marked done. Config values come from built-in
defaults, overridden by an INI-style settings file, overridden by CLI flags
or API-supplied values.
"""

from __future__ import annotations

import configparser
import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import catalog, clean, geosample, store
from .catalog import (HttpCatalogProvider, MockProvider, PlanConfig,
                      RetryPolicy, plan_downloads, run_plan)
from .clean import Thresholds, clean_auto
from .convert import NormalizationMode, StatsScope, convert_product
from .errors import ConfigError, MissingPrerequisite
from .geosample import SamplerConfig, WaterMask, generate_points, save_points
from .patches import PatchGrid, build_preview, extract_patches, patch_filename
from .raster import read_geotiff, read_png, write_png_gray, write_png_rgb
from .store import (STAGES, CandidateRecord, DatasetManifest, RegionRecord,
                    Satellite, StageStatus, commit_manifest, layout_path,
                    load_manifest)

log = logging.getLogger(__name__)

ProgressFn = Callable[[str, int, int], None]


@dataclass
class PipelineConfig:
    root: str = "dataset"
    mask_path: str | None = None          # None -> all-land mask
    provider: str = "mock"                # "mock" or a base URL
    provider_seed: int = 0
    workers: int = field(default_factory=lambda: min(4, os.cpu_count() or 1))
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(n_points=1))
    plan: PlanConfig = field(default_factory=lambda: PlanConfig(start_month="2020-01"))
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    mode: NormalizationMode = NormalizationMode.MIN_MAX
    stats_scope: StatsScope | None = None  # None -> per-satellite default
    thresholds: Thresholds = field(default_factory=Thresholds)
    manual: bool = False
    grid: PatchGrid = field(default_factory=PatchGrid)

    def validate(self) -> None:
        try:
            self.sampler.validate()
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if self.plan.months < 1:
            raise ConfigError("download.months must be >= 1")
        if self.plan.max_candidates < 1:
            raise ConfigError("download.candidates must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not (0 <= self.thresholds.missing_max <= 1
                and 0 <= self.thresholds.cloud_max <= 1):
            raise ConfigError("clean thresholds must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "general": {
                "root": self.root,
                "mask": self.mask_path or "",
                "provider": self.provider,
                "provider_seed": self.provider_seed,
                "workers": self.workers,
            },
            "generate": {
                "n_points": self.sampler.n_points,
                "seed": self.sampler.seed,
                "lat_min": self.sampler.lat_range[0],
                "lat_max": self.sampler.lat_range[1],
                "lon_min": self.sampler.lon_range[0],
                "lon_max": self.sampler.lon_range[1],
                "max_rejections": self.sampler.max_rejections,
                "scene_px": self.sampler.scene_size_px,
                "gsd": self.sampler.gsd_m,
            },
            "download": {
                "start_month": self.plan.start_month,
                "months": self.plan.months,
                "satellites": ",".join(s.value.lower() for s in self.plan.satellites),
                "candidates": self.plan.max_candidates,
                "max_attempts": self.retry.max_attempts,
                "backoff_initial_s": self.retry.backoff_initial_s,
                "backoff_multiplier": self.retry.backoff_multiplier,
                "rate_limit": self.retry.rate_limit,
            },
            "convert": {
                "mode": self.mode.value,
                "stats_scope": self.stats_scope.value if self.stats_scope else "",
            },
            "clean": {
                "missing_max": self.thresholds.missing_max,
                "cloud_max": self.thresholds.cloud_max,
                "black_threshold": self.thresholds.black_threshold,
                "manual": self.manual,
            },
            "extract": {
                "patch": self.grid.patch_px,
                "stride": self.grid.stride_px,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        base = cls().to_dict()
        for section, keys in d.items():
            if section not in base:
                raise ConfigError(f"unknown config section [{section}]")
            for key in keys:
                if key not in base[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
            base[section].update(keys)

        def _b(v):  # tolerate ini-style booleans
            if isinstance(v, bool):
                return v
            return str(v).strip().lower() in ("1", "true", "yes", "on")

        g, gen, dl, cv, cl, ex = (base["general"], base["generate"],
                                  base["download"], base["convert"],
                                  base["clean"], base["extract"])
        try:
            sats = [Satellite(s.strip().upper())
                    for s in str(dl["satellites"]).split(",") if s.strip()]
            sampler = SamplerConfig(
                n_points=int(gen["n_points"]), seed=int(gen["seed"]),
                lat_range=(float(gen["lat_min"]), float(gen["lat_max"])),
                lon_range=(float(gen["lon_min"]), float(gen["lon_max"])),
                max_rejections=int(gen["max_rejections"]),
                scene_size_px=int(gen["scene_px"]), gsd_m=float(gen["gsd"]))
            plan = PlanConfig(
                start_month=str(dl["start_month"]), months=int(dl["months"]),
                satellites=sats, max_candidates=int(dl["candidates"]),
                scene_size_px=sampler.scene_size_px, gsd_m=sampler.gsd_m)
            retry = RetryPolicy(
                max_attempts=int(dl["max_attempts"]),
                backoff_initial_s=float(dl["backoff_initial_s"]),
                backoff_multiplier=float(dl["backoff_multiplier"]),
                rate_limit=int(dl["rate_limit"]))
            cfg = cls(
                root=str(g["root"]), mask_path=str(g["mask"]) or None,
                provider=str(g["provider"]),
                provider_seed=int(g["provider_seed"]),
                workers=int(g["workers"]), sampler=sampler, plan=plan,
                retry=retry, mode=NormalizationMode(str(cv["mode"])),
                stats_scope=(StatsScope(str(cv["stats_scope"]))
                             if str(cv["stats_scope"]) else None),
                thresholds=Thresholds(
                    missing_max=float(cl["missing_max"]),
                    cloud_max=float(cl["cloud_max"]),
                    black_threshold=float(cl["black_threshold"])),
                manual=_b(cl["manual"]),
                grid=PatchGrid(patch_px=int(ex["patch"]),
                               stride_px=int(ex["stride"])))
        except (ValueError, KeyError) as e:
            raise ConfigError(f"invalid config value: {e}") from e
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path, overrides: dict[str, object] | None = None
                  ) -> "PipelineConfig":
        parser = configparser.ConfigParser()
        read = parser.read(path, encoding="utf-8")
        if not read:
            raise ConfigError(f"config file not found: {path}")
        d = {section: dict(parser[section]) for section in parser.sections()}
        return cls.from_dict(apply_overrides(d, overrides or {}))

    def save(self, path) -> None:
        parser = configparser.ConfigParser()
        for section, keys in self.to_dict().items():
            parser[section] = {k: str(v) for k, v in keys.items()}
        with open(path, "w", encoding="utf-8") as f:
            parser.write(f)


def apply_overrides(d: dict, overrides: dict[str, object]) -> dict:
    """Merge flat 'section.key' overrides into a nested config dict."""
    out = {s: dict(k) for s, k in d.items()}
    for dotted, value in overrides.items():
        if "." not in dotted:
            raise ConfigError(f"override key must be section.key, got {dotted!r}")
        section, key = dotted.split(".", 1)
        out.setdefault(section, {})[key] = value
    return out


def make_provider(cfg: PipelineConfig, provider=None):
    if provider is not None:
        return provider
    if cfg.provider == "mock":
        return MockProvider(seed=cfg.provider_seed)
    return HttpCatalogProvider(cfg.provider, timeout_s=cfg.retry.timeout_s)


def _load_mask(cfg: PipelineConfig) -> WaterMask:
    if cfg.mask_path:
        return WaterMask.load(cfg.mask_path)
    return WaterMask.all_land()


def points_csv_path(root) -> Path:
    return Path(root) / "points.csv"


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_generate(cfg: PipelineConfig, progress: ProgressFn | None = None) -> None:
    root = Path(cfg.root)
    root.mkdir(parents=True, exist_ok=True)
    mask = _load_mask(cfg)
    points = generate_points(cfg.sampler, mask)
    save_points(points, points_csv_path(root))
    try:
        m = load_manifest(root)
    except FileNotFoundError:
        m = DatasetManifest()
    m.regions = [RegionRecord(scene_id=i, center=p) for i, p in enumerate(points)]
    commit_manifest(m, root)
    if progress:
        progress("generate", len(points), len(points))


def stage_download(cfg: PipelineConfig, provider=None,
                   progress: ProgressFn | None = None) -> catalog.DownloadReport:
    root = Path(cfg.root)
    points = geosample.load_points(points_csv_path(root))
    plan = plan_downloads(points, cfg.plan)
    provider = make_provider(cfg, provider)
    report = run_plan(plan, provider, root, policy=cfg.retry, workers=cfg.workers)

    m = load_manifest(root)
    for outcome in report.outcomes:
        region = m.region(outcome.scene_id)
        rec = region.month(outcome.month).satellites.setdefault(
            outcome.satellite.value, store.SatMonthRecord())
        existing = {c.rank for c in rec.candidates}
        if outcome.candidate_rank in existing:
            continue
        if outcome.status in ("ok", "skipped"):
            path = outcome.path or str(layout_path(
                root, outcome.satellite, outcome.scene_id, outcome.month,
                outcome.candidate_rank, "raw").relative_to(root))
            rec.candidates.append(CandidateRecord(
                path=Path(path).as_posix(), rank=outcome.candidate_rank,
                product_id=outcome.product_id, acquired_at=outcome.acquired_at))
            rec.candidates.sort(key=lambda c: c.rank)
    commit_manifest(m, root)
    if progress:
        progress("download", len(report.outcomes), len(plan.tasks))
    return report


def stage_convert(cfg: PipelineConfig, progress: ProgressFn | None = None) -> None:
    root = Path(cfg.root)
    m = load_manifest(root)
    todo = [(region, rec, cand)
            for region, month, sat_key, rec in m.slots()
            for cand in rec.candidates]
    work: list[tuple[Path, Satellite, Path]] = []
    for region, rec, cand in todo:
        raw = root / cand.path
        sat, scene_id, month, rank, _ = store.parse_layout_path(
            cand.path.replace("discarded/", ""))
        if cfg.mode is NormalizationMode.RAW_TIFF:
            # passthrough keeps the raw file as the converted artifact
            cand.img_path = None
        else:
            img_rel = layout_path(root, sat, scene_id, month, rank,
                                  "converted").relative_to(root)
            if "discarded" in Path(cand.path).parts:
                img_rel = img_rel.parent / "discarded" / img_rel.name
            img = root / img_rel
            if not img.exists():
                work.append((raw, sat, img))
            cand.img_path = img_rel.as_posix()

    def _convert_one(raw: Path, sat: Satellite, img: Path) -> None:
        convert_product(read_geotiff(raw), sat, cfg.mode, img, cfg.stats_scope)

    # conversion is pure per file; fan out across workers
    if cfg.workers == 1:
        for i, item in enumerate(work):
            _convert_one(*item)
            if progress:
                progress("convert", i + 1, len(work))
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_convert_one, *item) for item in work]
            for i, future in enumerate(as_completed(futures)):
                future.result()
                if progress:
                    progress("convert", i + 1, len(futures))
    if progress:
        progress("convert", len(todo), len(todo))
    commit_manifest(m, root)


def stage_clean(cfg: PipelineConfig, progress: ProgressFn | None = None
                ) -> clean.CleanReport:
    report = clean_auto(cfg.root, thresholds=cfg.thresholds, manual=cfg.manual,
                        workers=cfg.workers)
    if progress:
        total = report.kept + report.unfavorable
        progress("clean", total, total)
    return report


def preview_path(root, scene_id: int, satellite: Satellite) -> Path:
    return Path(root) / "previews" / f"scene_{scene_id:04d}_{satellite.value}.png"


def stage_extract(cfg: PipelineConfig, progress: ProgressFn | None = None) -> None:
    root = Path(cfg.root)
    m = load_manifest(root)
    patches_root = root / "patches"
    series: dict[tuple[int, str], list[tuple[str, object]]] = {}

    selected = [(region, month, sat_key, rec)
                for region, month, sat_key, rec in m.slots() if rec.selected]

    def _extract_one(region, month, sat_key, rec):
        image = _read_selected(root / rec.selected)
        out_dir = (patches_root / Satellite(sat_key).folder
                   / f"scene_{region.scene_id:04d}")
        out_dir.mkdir(parents=True, exist_ok=True)
        for row, col, patch in extract_patches(image, cfg.grid):
            name = patch_filename(region.scene_id, month.month, row, col)
            _write_image(patch, out_dir / name)
        return region.scene_id, sat_key, month.month, image

    def _preview_one(scene_id, sat_key, entries):
        entries.sort(key=lambda e: e[0])
        mosaic = build_preview([img for _, img in entries], cfg.grid)
        out = preview_path(root, scene_id, Satellite(sat_key))
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_image(mosaic, out)

    # per-image extraction is pure; mosaic assembly stays single per scene
    if cfg.workers == 1:
        for i, item in enumerate(selected):
            scene_id, sat_key, month_str, image = _extract_one(*item)
            series.setdefault((scene_id, sat_key), []).append((month_str, image))
            if progress:
                progress("extract", i + 1, len(selected))
        for (scene_id, sat_key), entries in series.items():
            _preview_one(scene_id, sat_key, entries)
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_extract_one, *item) for item in selected]
            for i, future in enumerate(as_completed(futures)):
                scene_id, sat_key, month_str, image = future.result()
                series.setdefault((scene_id, sat_key), []).append(
                    (month_str, image))
                if progress:
                    progress("extract", i + 1, len(selected))
            previews = [pool.submit(_preview_one, scene_id, sat_key, entries)
                        for (scene_id, sat_key), entries in series.items()]
            for future in previews:
                future.result()


def _read_selected(path: Path):
    if path.suffix == ".png":
        return read_png(path)
    # RAW_TIFF pipeline: render the first band quantized for patching
    raster = read_geotiff(path)
    from .raster import quantize_u8
    return quantize_u8(next(iter(raster.bands.values())))


def _write_image(arr, path) -> None:
    if arr.ndim == 3:
        write_png_rgb(arr[..., 0], arr[..., 1], arr[..., 2], path)
    else:
        write_png_gray(arr, path)


_STAGE_FNS = {
    "generate": stage_generate,
    "download": stage_download,
    "convert": stage_convert,
    "clean": stage_clean,
    "extract": stage_extract,
}


def _set_status(root, stage: str, status: StageStatus) -> None:
    try:
        m = load_manifest(root)
    except FileNotFoundError:
        m = DatasetManifest()
    m.stage_status[stage] = status
    commit_manifest(m, root)


def stage_status(root) -> dict[str, StageStatus]:
    try:
        return load_manifest(root).stage_status
    except FileNotFoundError:
        return {s: StageStatus.NOT_RUN for s in STAGES}


def run_stage(stage: str, cfg: PipelineConfig, provider=None,
              progress: ProgressFn | None = None) -> None:
    """Run one named stage after checking its prerequisite completed."""
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}")
    cfg.validate()
    idx = STAGES.index(stage)
    if idx > 0:
        status = stage_status(cfg.root)
        prereq = STAGES[idx - 1]
        if status[prereq] is not StageStatus.DONE:
            raise MissingPrerequisite(
                f"stage {stage!r} requires {prereq!r} to be done, "
                f"found {status[prereq].value}")
    _set_status(cfg.root, stage, StageStatus.RUNNING)
    try:
        fn = _STAGE_FNS[stage]
        if stage == "download":
            fn(cfg, provider=provider, progress=progress)
        else:
            fn(cfg, progress=progress)
    except Exception:
        _set_status(cfg.root, stage, StageStatus.FAILED)
        raise
    _set_status(cfg.root, stage, StageStatus.DONE)


def run_full_auto(cfg: PipelineConfig, provider=None,
                  progress: ProgressFn | None = None) -> dict[str, StageStatus]:
    """Run all five stages in order, skipping stages already done (resume)."""
    cfg.validate()
    for stage in STAGES:
        if stage_status(cfg.root)[stage] is StageStatus.DONE:
            log.info("stage %s already done; skipping", stage)
            continue
        run_stage(stage, cfg, provider=provider, progress=progress)
    return stage_status(cfg.root)
