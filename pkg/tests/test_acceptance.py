"""Acceptance suite: one test per release criterion, at the stated tolerance.

Each criterion prints a PASS/FAIL line via the hook in conftest.py.
"""

import math
import random
import time
from datetime import datetime, timedelta

import numpy as np
import pytest
from scipy import stats

from eoforge.catalog import (DEFAULT_BANDS, Defect, MockProvider, PlanConfig,
                             ProductQuery, fetch, month_window, plan_downloads)
from eoforge.clean import Thresholds, make_report, score_candidate, select_best
from eoforge.convert import (NormalizationMode, normalize_max,
                             normalize_minmax, normalize_std, stats_of,
                             to_unit_range)
from eoforge.geosample import (GeoPoint, SamplerConfig, WaterMask,
                               footprint_of, generate_points, is_land)
from eoforge.patches import (PatchGrid, build_preview, extract_patches,
                             parse_patch_filename, patch_filename)
from eoforge.pipeline import PipelineConfig, run_full_auto, run_stage
from eoforge.raster import Raster, quantize_u8
from eoforge.store import (STAGES, Satellite, StageStatus, layout_path,
                           load_manifest, parse_layout_path)
from conftest import scenario_provider, small_config


def production_style_mask() -> WaterMask:
    """Continent-scale blobby land/water pattern on a 1-degree grid."""
    lats = 90 - (np.arange(180) + 0.5)
    lons = -180 + (np.arange(360) + 0.5)
    lat_g, lon_g = np.meshgrid(lats, lons, indexing="ij")
    field = (np.sin(np.radians(lat_g) * 3) + np.cos(np.radians(lon_g) * 2)
             + 0.5 * np.sin(np.radians(lat_g + lon_g) * 1.5))
    return WaterMask(1.0, field < 0)


def test_end_to_end_default_run_24_selected(tmp_path):
    """1 region, 12 months, 2 satellites, 3 candidates, 1000 px scenes:
    exactly 24 selected images (12 per satellite) in under 60 s."""
    cfg = PipelineConfig(root=str(tmp_path / "ds"))
    cfg.sampler = SamplerConfig(n_points=1, seed=7)
    cfg.plan = PlanConfig(start_month="2020-01")
    started = time.monotonic()
    status = run_full_auto(cfg, provider=MockProvider(seed=11))
    elapsed = time.monotonic() - started
    assert all(status[s] is StageStatus.DONE for s in STAGES)
    m = load_manifest(cfg.root)
    per_sat = {"S1": 0, "S2": 0}
    for _, _, sat_key, rec in m.slots():
        if rec.selected is not None:
            per_sat[sat_key] += 1
    assert per_sat == {"S1": 12, "S2": 12}  # 24 total
    assert elapsed < 60, f"pipeline took {elapsed:.1f}s"


def test_download_plan_arithmetic():
    """N regions -> 72 N tasks with default settings."""
    for n in (1, 3, 7):
        points = [GeoPoint(10 + i, 20 + i) for i in range(n)]
        plan = plan_downloads(points, PlanConfig(start_month="2020-01"))
        assert len(plan.tasks) == 72 * n


def test_generator_land_only_and_uniform(tmp_path):
    """10k points on a production-style mask: all on land, lat in [-56, 84];
    all-land mask passes 8x8 chi-square uniformity at p > 0.01."""
    mask = production_style_mask()
    mask_file = tmp_path / "mask.wmsk"
    mask.save(mask_file)
    mask = WaterMask.load(mask_file)
    points = generate_points(SamplerConfig(n_points=10_000, seed=2024), mask)
    assert len(points) == 10_000
    assert all(is_land(mask, p) for p in points)
    assert all(-56 <= p.lat <= 84 for p in points)

    points = generate_points(SamplerConfig(n_points=10_000, seed=2024),
                             WaterMask.all_land())
    lats = np.array([p.lat for p in points])
    lons = np.array([p.lon for p in points])
    counts, _, _ = np.histogram2d(lats, lons, bins=8,
                                  range=[[-56, 84], [-180, 180]])
    _, p_value = stats.chisquare(counts.ravel())
    assert p_value > 0.01


def _oracle_normalize(values, mode):
    vals = [float(v) for v in values]
    lo, hi, n = min(vals), max(vals), len(vals)
    mean = sum(vals) / n
    std = math.sqrt(sum((v - mean) ** 2 for v in vals) / n)
    out = []
    for v in vals:
        if mode is NormalizationMode.MIN_MAX:
            out.append(0.0 if hi == lo else (v - lo) / (hi - lo))
        elif mode is NormalizationMode.STANDARDIZE:
            out.append(0.0 if std == 0 else (v - mean) / std)
        else:
            out.append(0.0 if hi == 0 else v / hi)
    return np.asarray(out)


def test_normalization_matches_high_precision_oracle():
    """200 random rasters per mode: within 1e-6 before quantization, exact
    after; min-max and max outputs lie in [0, 1]."""
    fns = {NormalizationMode.MIN_MAX: normalize_minmax,
           NormalizationMode.STANDARDIZE: normalize_std,
           NormalizationMode.MAX_DIV: normalize_max}
    rng = np.random.default_rng(99)
    for mode, fn in fns.items():
        for _ in range(200):
            n = int(rng.integers(2, 64))
            lo = 0.0 if mode is NormalizationMode.MAX_DIV else -50.0
            values = rng.uniform(lo, 200, size=n).astype(np.float32)
            r = Raster(bands={"VV": values.reshape(1, -1)})
            out = fn(r, stats_of(r)).bands["VV"].ravel()
            expected = _oracle_normalize(values, mode)
            np.testing.assert_allclose(out, expected, atol=1e-6)
            got_q = quantize_u8(to_unit_range(out, mode))
            want_q = quantize_u8(to_unit_range(expected, mode))
            assert (got_q == want_q).all()
            if mode is not NormalizationMode.STANDARDIZE:
                assert out.min() >= 0.0 and out.max() <= 1.0


def test_cleaner_matches_brute_force_and_measures_defects():
    """select_best == filtered argmin over 1000 random report lists; injected
    defects (cloud 0.9, missing rectangle 0.25) measured within 0.02 and
    rejected."""
    rnd = random.Random(31337)
    t0 = datetime(2020, 1, 1)
    for _ in range(1000):
        th = Thresholds(missing_max=rnd.random(), cloud_max=rnd.random())
        n = rnd.randrange(0, 8)
        reports = [make_report(rnd.random(), rnd.random(), th) for _ in range(n)]
        times = [t0 + timedelta(hours=rnd.randrange(200)) for _ in range(n)]
        candidates = [(r.score, times[i], i) for i, r in enumerate(reports)
                      if r.verdict == "pass"]
        brute = min(candidates)[2] if candidates else None
        assert select_best(reports, times) == brute

    provider = scenario_provider([
        Defect(rank=0, cloud_fraction=0.9),
        Defect(rank=1, missing_fraction=0.25),
    ])
    fp = footprint_of(GeoPoint(42.0, 12.5), 1000, 10.0)
    q = ProductQuery(footprint=fp, satellite=Satellite.S2,
                     window=month_window("2020-01"),
                     bands=list(DEFAULT_BANDS[Satellite.S2]))
    descs = {d.product_id.rsplit("-", 1)[-1]: d
             for d in provider.search(q)}
    cloudy = score_candidate(
        fetch(provider, descs["0"], q.bands, fp), Satellite.S2)
    assert cloudy.cloud_fraction == pytest.approx(0.9, abs=0.02)
    assert cloudy.verdict == "fail"
    holey = score_candidate(
        fetch(provider, descs["1"], q.bands, fp), Satellite.S2)
    assert holey.missing_fraction == pytest.approx(0.25, abs=0.02)
    assert holey.verdict == "fail"


def test_patch_reassembly_bit_exact():
    """Stitching stride==patch grids reproduces the cropped source exactly;
    1000/250 yields 16 patches; preview cells crop back to source patches."""
    rng = np.random.default_rng(5)
    for _ in range(25):
        h, w = int(rng.integers(8, 300)), int(rng.integers(8, 300))
        patch = int(rng.integers(1, min(h, w) + 1))
        grid = PatchGrid(patch)
        image = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
        rows, cols = grid.shape(h, w)
        stitched = np.zeros((rows * patch, cols * patch), dtype=np.uint8)
        for r, c, p in extract_patches(image, grid):
            stitched[r * patch:(r + 1) * patch, c * patch:(c + 1) * patch] = p
        assert (stitched == image[:rows * patch, :cols * patch]).all()

    image = rng.integers(0, 256, size=(1000, 1000), dtype=np.uint8)
    patches = extract_patches(image, PatchGrid(250))
    assert len(patches) == 16

    grid = PatchGrid(50)
    series = [rng.integers(0, 256, size=(200, 200), dtype=np.uint8)
              for _ in range(4)]
    mosaic = build_preview(series, grid)
    p = grid.patch_px
    for d, img in enumerate(series):
        for idx, (_, _, patch) in enumerate(extract_patches(img, grid)):
            assert (mosaic[d * p:(d + 1) * p, idx * p:(idx + 1) * p]
                    == patch).all()


def test_codecs_are_bijections():
    """Layout and patch-filename codecs: parse . format == identity; template
    examples match byte for byte."""
    assert str(layout_path("", Satellite.S2, 0, "2020-01", 0, "raw")) \
        == "Sentinel-2/scene_0000/2020-01/raw_0.tif"
    assert str(layout_path("", Satellite.S1, 3, "2020-07", 2, "converted")) \
        == "Sentinel-1/scene_0003/2020-07/img_2.png"
    assert patch_filename(3, "2020-01", 2, 5) == "scene_0003_2020-01_r02_c05.png"

    rnd = random.Random(8)
    for _ in range(500):
        sat = rnd.choice(list(Satellite))
        scene = rnd.randrange(10_000)
        month = f"{rnd.randrange(2015, 2031):04d}-{rnd.randrange(1, 13):02d}"
        rank = rnd.randrange(10)
        kind = rnd.choice(["raw", "converted"])
        path = layout_path("root", sat, scene, month, rank, kind)
        assert parse_layout_path(path) == (sat, scene, month, rank, kind)

        row, col = rnd.randrange(100), rnd.randrange(100)
        name = patch_filename(scene, month, row, col)
        assert parse_patch_filename(name) == (scene, month, row, col)


def test_resumability_equals_uninterrupted(tmp_path):
    """Interrupting after any stage and rerunning full-auto yields a manifest
    equal to the uninterrupted run."""
    baseline = small_config(tmp_path / "base", months=2)
    run_full_auto(baseline, provider=MockProvider(seed=11))
    want = load_manifest(baseline.root).to_dict()

    for cut in range(1, len(STAGES)):
        cfg = small_config(tmp_path / f"cut{cut}", months=2)
        provider = MockProvider(seed=11)
        for stage in STAGES[:cut]:
            run_stage(stage, cfg, provider=provider)
        run_full_auto(cfg, provider=MockProvider(seed=11))
        assert load_manifest(cfg.root).to_dict() == want, f"cut after {cut} stages"
